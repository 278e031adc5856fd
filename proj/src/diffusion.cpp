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

#include "hierdet/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>

namespace hierdet {

Schedule Schedule::cosine(int timesteps, double s)
{
    if (timesteps < 1) throw std::invalid_argument("schedule needs at least one timestep");
    if (!(s > 0.0)) throw std::invalid_argument("cosine offset must be positive");

    const auto f = [&](int t) {
        const double c = std::cos((static_cast<double>(t) / timesteps + s) / (1.0 + s) * std::numbers::pi / 2.0);
        return c * c;
    };
    const double f0 = f(0);
    std::vector<double> ab(static_cast<std::size_t>(timesteps) + 1);
    ab[0] = 1.0;
    for (int t = 1; t <= timesteps; ++t) {
        const double raw = f(t) / f0;
        ab[t] = std::max(raw, ab[t - 1] * 1e-3);
    }
    return Schedule(std::move(ab));
}

Schedule Schedule::from_alpha_bar(std::vector<double> alpha_bar)
{
    if (alpha_bar.size() < 2) throw std::invalid_argument("schedule needs at least one timestep");
    if (alpha_bar[0] != 1.0) throw std::invalid_argument("alpha_bar[0] must be 1");
    for (std::size_t t = 1; t < alpha_bar.size(); ++t) {
        if (!(alpha_bar[t] > 0.0 && alpha_bar[t] <= alpha_bar[t - 1])) {
            throw std::invalid_argument("alpha_bar must stay in (0,1] and be non-increasing (t=" +
                                        std::to_string(t) + ")");
        }
    }
    return Schedule(std::move(alpha_bar));
}

double Schedule::alpha_bar(int t) const
{
    if (t < 0 || t > timesteps()) {
        throw std::out_of_range("timestep " + std::to_string(t) + " outside [0," + std::to_string(timesteps()) + "]");
    }
    return alpha_bar_[static_cast<std::size_t>(t)];
}

namespace {

void check_scale(double scale)
{
    if (!(scale > 0.0)) throw std::invalid_argument("signal scale must be positive");
}

}  // namespace

BoxRow signal_encode(const Box& box, double scale)
{
    check_scale(scale);
    return {(2.0 * box.cx - 1.0) * scale, (2.0 * box.cy - 1.0) * scale, (2.0 * box.w - 1.0) * scale,
            (2.0 * box.h - 1.0) * scale};
}

BoxArray signal_encode(std::span<const Box> boxes, double scale)
{
    BoxArray out;
    out.reserve(boxes.size());
    for (const Box& b : boxes) out.push_back(signal_encode(b, scale));
    return out;
}

Box signal_decode(const BoxRow& row, double scale)
{
    check_scale(scale);
    const auto back = [scale](double z) { return (z / scale + 1.0) / 2.0; };
    return clamp_box({back(row[0]), back(row[1]), back(row[2]), back(row[3])});
}

std::vector<Box> signal_decode(const BoxArray& rows, double scale)
{
    std::vector<Box> out;
    out.reserve(rows.size());
    for (const BoxRow& r : rows) out.push_back(signal_decode(r, scale));
    return out;
}

NoisyBoxes forward_noise(const BoxArray& z0, int t, const Schedule& schedule, Rng& rng)
{
    if (t < 1 || t > schedule.timesteps()) {
        throw std::out_of_range("forward_noise: timestep " + std::to_string(t) + " outside [1," +
                                std::to_string(schedule.timesteps()) + "]");
    }
    const double ab = schedule.alpha_bar(t);
    const double signal = std::sqrt(ab);
    const double noise = std::sqrt(1.0 - ab);

    NoisyBoxes out{BoxArray(z0.size()), t};
    for (std::size_t i = 0; i < z0.size(); ++i) {
        for (int k = 0; k < 4; ++k) {
            out.z[i][k] = signal * z0[i][k] + noise * rng.normal();
        }
    }
    return out;
}

PaddedBoxes pad_gt_boxes(std::span<const Box> gt, int rows, double scale, Rng& rng)
{
    if (rows < 1) throw std::invalid_argument("pad_gt_boxes: proposal count must be >= 1");
    check_scale(scale);

    PaddedBoxes out;
    std::vector<int> kept(gt.size());
    std::iota(kept.begin(), kept.end(), 0);
    if (static_cast<int>(gt.size()) > rows) {
        std::shuffle(kept.begin(), kept.end(), rng.engine());
        kept.resize(static_cast<std::size_t>(rows));
        std::sort(kept.begin(), kept.end());
        out.truncated = true;
    }

    std::vector<Box> boxes;
    boxes.reserve(static_cast<std::size_t>(rows));
    out.source.reserve(static_cast<std::size_t>(rows));
    for (const int g : kept) {
        boxes.push_back(clamp_box(gt[static_cast<std::size_t>(g)]));
        out.source.push_back(g);
    }
    while (static_cast<int>(boxes.size()) < rows) {
        Box b;
        b.cx = 0.5 + rng.normal() / 6.0;
        b.cy = 0.5 + rng.normal() / 6.0;
        b.w = 0.5 + rng.normal() / 6.0;
        b.h = 0.5 + rng.normal() / 6.0;
        boxes.push_back(clamp_box(b));
        out.source.push_back(-1);
    }

    std::vector<std::size_t> perm(boxes.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng.engine());

    out.z0.reserve(boxes.size());
    std::vector<int> source(boxes.size());
    for (std::size_t i = 0; i < perm.size(); ++i) {
        out.z0.push_back(signal_encode(boxes[perm[i]], scale));
        source[i] = out.source[perm[i]];
    }
    out.source = std::move(source);
    return out;
}

NoisyBoxes ddim_step(const NoisyBoxes& current, const BoxArray& z0_pred, int t_next, const Schedule& schedule,
                     double eta, Rng& rng)
{
    const int t = current.t;
    if (t > schedule.timesteps()) {
        throw std::invalid_argument("ddim_step: timestep " + std::to_string(t) + " exceeds schedule length " +
                                    std::to_string(schedule.timesteps()));
    }
    if (!(t_next >= 0 && t_next < t)) {
        throw std::invalid_argument("ddim_step: need 0 <= t_next < t (t=" + std::to_string(t) +
                                    ", t_next=" + std::to_string(t_next) + ")");
    }
    if (z0_pred.size() != current.z.size()) {
        throw std::invalid_argument("ddim_step: prediction has " + std::to_string(z0_pred.size()) +
                                    " rows, state has " + std::to_string(current.z.size()));
    }
    if (!(eta >= 0.0 && eta <= 1.0)) throw std::invalid_argument("ddim_step: eta must lie in [0,1]");

    const double ab_t = schedule.alpha_bar(t);
    const double ab_next = schedule.alpha_bar(t_next);
    const double sigma =
        eta * std::sqrt((1.0 - ab_next) / (1.0 - ab_t)) * std::sqrt(std::max(0.0, 1.0 - ab_t / ab_next));
    const double keep = std::sqrt(std::max(0.0, 1.0 - ab_next - sigma * sigma));
    const double sqrt_ab_t = std::sqrt(ab_t);
    const double sqrt_one_minus_ab_t = std::sqrt(1.0 - ab_t);
    const double sqrt_ab_next = std::sqrt(ab_next);

    NoisyBoxes out{BoxArray(current.z.size()), t_next};
    for (std::size_t i = 0; i < current.z.size(); ++i) {
        for (int k = 0; k < 4; ++k) {
            const double eps_hat = (current.z[i][k] - sqrt_ab_t * z0_pred[i][k]) / sqrt_one_minus_ab_t;
            double v = sqrt_ab_next * z0_pred[i][k];
            if (keep != 0.0) v += keep * eps_hat;
            if (sigma > 0.0) v += sigma * rng.normal();
            out.z[i][k] = v;
        }
    }
    return out;
}

NoisyBoxes box_renewal(std::span<const Detection> dets, const NoisyBoxes& current, double score_threshold,
                       Rng& rng)
{
    if (dets.size() != current.z.size()) {
        throw std::invalid_argument("box_renewal: detection count does not match proposal count");
    }
    NoisyBoxes out = current;
    for (std::size_t i = 0; i < dets.size(); ++i) {
        if (dets[i].score < score_threshold) {
            for (int k = 0; k < 4; ++k) out.z[i][k] = rng.normal();
        }
    }
    return out;
}

}  // namespace hierdet
