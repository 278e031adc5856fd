/* Copyright 2026 The HierDet Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "hierdet/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace hierdet {

double LossBreakdown::cls(Head h) const
{
    switch (h) {
    case Head::Quadrant: return cls_q;
    case Head::Enumeration: return cls_e;
    case Head::Diagnosis: return cls_d;
    }
    return 0.0;
}

namespace {

double class_prob(const Detection& d, Head h, int k, HeadMask mask)
{
    return h == mask.deepest() ? d.foreground_prob(h, k) : d.probs(h)[k];
}

double l1_distance(const Box& a, const Box& b)
{
    return std::abs(a.cx - b.cx) + std::abs(a.cy - b.cy) + std::abs(a.w - b.w) + std::abs(a.h - b.h);
}

}  // namespace

std::vector<double> match_cost_matrix(std::span<const Detection> preds, std::span<const GroundTruth> gts,
                                      HeadMask mask, const LossWeights& weights)
{
    std::vector<double> cost(gts.size() * preds.size());
    for (std::size_t g = 0; g < gts.size(); ++g) {
        validate_label(gts[g].label, mask);
        for (std::size_t p = 0; p < preds.size(); ++p) {
            double cls = 0.0;
            for (const Head h : kAllHeads) {
                if (!mask.active(h)) continue;
                cls += 1.0 - class_prob(preds[p], h, *gts[g].label.get(h), mask);
            }
            cost[g * preds.size() + p] = weights.cls * cls + weights.l1 * l1_distance(preds[p].box, gts[g].box) +
                                         weights.giou * (1.0 - giou(preds[p].box, gts[g].box));
        }
    }
    return cost;
}

std::vector<std::size_t> solve_assignment(std::span<const double> cost, std::size_t rows, std::size_t cols)
{
    if (rows > cols) throw std::invalid_argument("solve_assignment: more rows than columns");
    if (cost.size() != rows * cols) throw std::invalid_argument("solve_assignment: cost size mismatch");
    if (rows == 0) return {};

    constexpr double kInf = std::numeric_limits<double>::infinity();
    // 1-based potentials; column 0 is the virtual start.
    std::vector<double> u(rows + 1, 0.0), v(cols + 1, 0.0);
    std::vector<std::size_t> owner(cols + 1, 0), way(cols + 1, 0);
    std::vector<double> minv(cols + 1);
    std::vector<char> used(cols + 1);

    for (std::size_t i = 1; i <= rows; ++i) {
        owner[0] = i;
        std::size_t j0 = 0;
        std::fill(minv.begin(), minv.end(), kInf);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = owner[j0];
            double delta = kInf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= cols; ++j) {
                if (used[j]) continue;
                const double cur = cost[(i0 - 1) * cols + (j - 1)] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            if (j1 == 0) throw std::runtime_error("solve_assignment: non-finite cost");
            for (std::size_t j = 0; j <= cols; ++j) {
                if (used[j]) {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (owner[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
        } while (j0 != 0);
    }

    std::vector<std::size_t> result(rows);
    for (std::size_t j = 1; j <= cols; ++j) {
        if (owner[j] != 0) result[owner[j] - 1] = j - 1;
    }
    return result;
}

MatchResult match(std::span<const Detection> preds, std::span<const GroundTruth> gts, HeadMask mask,
                  const LossWeights& weights)
{
    if (gts.size() > preds.size()) {
        throw std::invalid_argument("match: " + std::to_string(gts.size()) + " ground-truth boxes but only " +
                                    std::to_string(preds.size()) + " predictions");
    }
    const auto cost = match_cost_matrix(preds, gts, mask, weights);
    const auto cols = solve_assignment(cost, gts.size(), preds.size());

    MatchResult out;
    std::vector<char> taken(preds.size(), 0);
    for (std::size_t g = 0; g < gts.size(); ++g) {
        out.pairs.emplace_back(cols[g], g);
        taken[cols[g]] = 1;
    }
    for (std::size_t p = 0; p < preds.size(); ++p) {
        if (!taken[p]) out.unmatched_preds.push_back(p);
    }
    return out;
}

double focal_loss(double p, double gamma)
{
    const double clamped = std::max(p, std::numeric_limits<double>::min());
    return -std::pow(1.0 - clamped, gamma) * std::log(clamped);
}

LossBreakdown compute_loss(std::span<const Detection> preds, std::span<const GroundTruth> gts,
                           const MatchResult& matches, HeadMask mask, const LossWeights& weights)
{
    LossBreakdown out;
    const double norm = std::max<double>(1.0, static_cast<double>(gts.size()));
    const Head deep = mask.deepest();
    double cls[3] = {0.0, 0.0, 0.0};

    for (const auto& [p, g] : matches.pairs) {
        const Detection& d = preds[p];
        const GroundTruth& gt = gts[g];
        for (const Head h : kAllHeads) {
            if (!mask.active(h)) continue;
            cls[head_index(h)] += focal_loss(class_prob(d, h, *gt.label.get(h), mask), weights.focal_gamma);
        }
        out.l1 += l1_distance(d.box, gt.box);
        out.giou += 1.0 - giou(d.box, gt.box);
    }
    for (const std::size_t p : matches.unmatched_preds) {
        cls[head_index(deep)] += focal_loss(preds[p].background[head_index(deep)], weights.focal_gamma);
    }

    out.cls_q = cls[0] / norm;
    out.cls_e = cls[1] / norm;
    out.cls_d = cls[2] / norm;
    out.l1 /= norm;
    out.giou /= norm;
    out.total = weights.cls * (out.cls_q + out.cls_e + out.cls_d) + weights.l1 * out.l1 + weights.giou * out.giou;
    return out;
}

}  // namespace hierdet
