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

namespace hierdet {

/// Axis-aligned box in normalized center-size form. This is the canonical
/// representation everywhere inside the library; corner form only appears at
/// file and rendering boundaries.
struct Box {
    double cx = 0.0;
    double cy = 0.0;
    double w = 0.0;
    double h = 0.0;

    friend bool operator==(const Box&, const Box&) = default;
};

struct BoxXyxy {
    double x1 = 0.0;
    double y1 = 0.0;
    double x2 = 0.0;
    double y2 = 0.0;
};

using BoxSet = std::vector<Box>;

BoxXyxy to_xyxy(const Box& b);
Box from_xyxy(const BoxXyxy& b);

double area(const Box& b);

/// Finite fields and strictly positive size.
bool is_valid(const Box& b);

/// Center clamped to [0,1], size clamped to [min_size,1].
Box clamp_box(const Box& b, double min_size = 1e-4);

/// Zero-area boxes give 0 rather than failing.
double iou(const Box& a, const Box& b);

double giou(const Box& a, const Box& b);

/// GIoU together with its partial derivatives w.r.t. (cx, cy, w, h) of `a`.
struct GiouGradient {
    double value = 0.0;
    std::array<double, 4> d_a{};
};
GiouGradient giou_with_gradient(const Box& a, const Box& b);

struct ScoredBox {
    Box box;
    double score = 0.0;
};

/// Greedy suppression. Returns indices into `dets` in output order: score
/// descending, ties broken by lower input index. No two kept boxes overlap with
/// IoU above `iou_threshold`.
std::vector<std::size_t> nms_indices(std::span<const ScoredBox> dets, double iou_threshold);

std::vector<ScoredBox> nms(std::span<const ScoredBox> dets, double iou_threshold);

}  // namespace hierdet
