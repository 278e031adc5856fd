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

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "hierdet/detection.hpp"
#include "hierdet/geometry.hpp"
#include "hierdet/rng.hpp"

namespace hierdet {

/// One proposal in diffusion signal space: (2x - 1) * scale per field.
using BoxRow = std::array<double, 4>;
using BoxArray = std::vector<BoxRow>;

/// Cumulative signal retention alpha_bar[t] for t = 0..T.
class Schedule {
public:
    /// alpha_bar[t] = f(t) / f(0) with f(t) = cos^2(((t/T) + s) / (1 + s) * pi/2).
    /// The per-step retention is floored at 1e-3 (beta <= 0.999), which only
    /// affects t = T where f vanishes.
    static Schedule cosine(int timesteps, double s = 0.008);

    /// Explicit table; must start at 1, stay in (0, 1] and never increase.
    static Schedule from_alpha_bar(std::vector<double> alpha_bar);

    int timesteps() const { return static_cast<int>(alpha_bar_.size()) - 1; }
    double alpha_bar(int t) const;
    std::span<const double> table() const { return alpha_bar_; }

private:
    explicit Schedule(std::vector<double> alpha_bar) : alpha_bar_(std::move(alpha_bar)) {}
    std::vector<double> alpha_bar_;
};

struct NoisyBoxes {
    BoxArray z;
    int t = 0;
};

BoxRow signal_encode(const Box& box, double scale);
BoxArray signal_encode(std::span<const Box> boxes, double scale);

/// Exact inverse of signal_encode followed by clamping to [0,1] with a
/// minimum size of 1e-4.
Box signal_decode(const BoxRow& row, double scale);
std::vector<Box> signal_decode(const BoxArray& rows, double scale);

/// z_t = sqrt(alpha_bar_t) z0 + sqrt(1 - alpha_bar_t) eps, eps ~ N(0, I).
/// Throws std::out_of_range unless 1 <= t <= T.
NoisyBoxes forward_noise(const BoxArray& z0, int t, const Schedule& schedule, Rng& rng);

struct PaddedBoxes {
    BoxArray z0;
    /// Ground-truth index held by each row, -1 for filler rows.
    std::vector<int> source;
    /// Set when there were more ground-truth boxes than rows; a random subset was kept.
    bool truncated = false;
};

/// Places the ground-truth boxes into `rows` proposals (shuffled) and fills the
/// remainder with boxes whose fields are drawn from N(0.5, 1/6), clamped.
PaddedBoxes pad_gt_boxes(std::span<const Box> gt, int rows, double scale, Rng& rng);

/// Reverse step z_t -> z_{t_next} given a predicted clean signal.
/// sigma = eta * sqrt((1 - ab_next) / (1 - ab_t)) * sqrt(1 - ab_t / ab_next);
/// eta = 0 is deterministic and `rng` is not touched.
NoisyBoxes ddim_step(const NoisyBoxes& current, const BoxArray& z0_pred, int t_next, const Schedule& schedule,
                     double eta, Rng& rng);

/// Rows whose detection score falls below `score_threshold` are replaced by
/// fresh standard-normal samples.
NoisyBoxes box_renewal(std::span<const Detection> dets, const NoisyBoxes& current, double score_threshold,
                       Rng& rng);

}  // namespace hierdet
