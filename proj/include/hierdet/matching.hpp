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

#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "hierdet/detection.hpp"
#include "hierdet/geometry.hpp"
#include "hierdet/labels.hpp"

namespace hierdet {

struct GroundTruth {
    Box box;
    LabelTriple label;

    friend bool operator==(const GroundTruth&, const GroundTruth&) = default;
};

/// One-to-one assignment of ground truth to predictions.
struct MatchResult {
    /// (pred_index, gt_index), ordered by gt index.
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    /// Ascending.
    std::vector<std::size_t> unmatched_preds;
};

struct LossWeights {
    double cls = 2.0;
    double l1 = 5.0;
    double giou = 2.0;
    double focal_gamma = 2.0;
};

struct LossBreakdown {
    double cls_q = 0.0;
    double cls_e = 0.0;
    double cls_d = 0.0;
    double l1 = 0.0;
    double giou = 0.0;
    double total = 0.0;

    double cls(Head h) const;
};

/// Row-major |gts| x |preds| matrix of
///   cls * sum_active(1 - p_head[gt class]) + l1 * |b - g|_1 + giou * (1 - GIoU(b, g)).
/// The deepest active head uses its (K+1)-way probability, shallower heads
/// their K-way softmax.
std::vector<double> match_cost_matrix(std::span<const Detection> preds, std::span<const GroundTruth> gts,
                                      HeadMask mask, const LossWeights& weights);

/// Minimum-cost assignment of every row to a distinct column (rows <= cols),
/// Kuhn-Munkres with potentials. Returns the column chosen for each row. Among
/// equal-cost alternatives the scan prefers lower column indices.
std::vector<std::size_t> solve_assignment(std::span<const double> cost, std::size_t rows, std::size_t cols);

/// Throws std::invalid_argument when there are more ground-truth boxes than predictions.
MatchResult match(std::span<const Detection> preds, std::span<const GroundTruth> gts, HeadMask mask,
                  const LossWeights& weights = {});

/// -(1 - p)^gamma * log(p)
double focal_loss(double p, double gamma);

/// Per-image loss, every term normalized by max(1, |gts|).
///
/// Matched pairs contribute focal cross-entropy on every active head, the L1
/// distance of the boxes and 1 - GIoU. Unmatched predictions contribute only a
/// background term on the deepest active head, whose background logit turns it
/// into a (K+1)-way classifier. Heads outside `mask` contribute exactly zero.
LossBreakdown compute_loss(std::span<const Detection> preds, std::span<const GroundTruth> gts,
                           const MatchResult& matches, HeadMask mask, const LossWeights& weights = {});

}  // namespace hierdet
