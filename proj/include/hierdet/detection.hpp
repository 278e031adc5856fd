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
#include <span>

#include "hierdet/geometry.hpp"
#include "hierdet/labels.hpp"

namespace hierdet {

/// One decoded proposal.
///
/// `probs_*` are softmax distributions over the real classes of each head and
/// sum to one. `background[h]` is the probability mass the (K+1)-way softmax of
/// head h assigns to its "no object" logit, so the (K+1)-way probability of
/// class k is `(1 - background[h]) * probs_h[k]`.
///
/// `score` is the largest (K+1)-way class probability of the deepest supervised
/// head; it is what NMS, box renewal and the manipulation cache threshold on.
struct Detection {
    Box box;
    std::array<double, 4> probs_q{};
    std::array<double, 8> probs_e{};
    std::array<double, 4> probs_d{};
    std::array<double, 3> background{};
    double score = 0.0;

    std::span<const double> probs(Head h) const
    {
        switch (h) {
        case Head::Quadrant: return probs_q;
        case Head::Enumeration: return probs_e;
        case Head::Diagnosis: return probs_d;
        }
        return {};
    }

    /// Argmax over the real classes of `h`; lowest index wins ties.
    int predicted_class(Head h) const
    {
        const auto p = probs(h);
        int best = 0;
        for (int k = 1; k < static_cast<int>(p.size()); ++k) {
            if (p[k] > p[best]) best = k;
        }
        return best;
    }

    /// (K+1)-way probability of class k on head h.
    double foreground_prob(Head h, int k) const
    {
        return (1.0 - background[head_index(h)]) * probs(h)[k];
    }
};

}  // namespace hierdet
