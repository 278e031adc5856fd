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

#include "hierdet/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace hierdet {

BoxXyxy to_xyxy(const Box& b)
{
    return {b.cx - 0.5 * b.w, b.cy - 0.5 * b.h, b.cx + 0.5 * b.w, b.cy + 0.5 * b.h};
}

Box from_xyxy(const BoxXyxy& b)
{
    return {0.5 * (b.x1 + b.x2), 0.5 * (b.y1 + b.y2), b.x2 - b.x1, b.y2 - b.y1};
}

double area(const Box& b)
{
    return std::max(0.0, b.w) * std::max(0.0, b.h);
}

bool is_valid(const Box& b)
{
    return std::isfinite(b.cx) && std::isfinite(b.cy) && std::isfinite(b.w) && std::isfinite(b.h) &&
           b.w > 0.0 && b.h > 0.0;
}

Box clamp_box(const Box& b, double min_size)
{
    Box out;
    out.cx = std::clamp(b.cx, 0.0, 1.0);
    out.cy = std::clamp(b.cy, 0.0, 1.0);
    out.w = std::clamp(b.w, min_size, 1.0);
    out.h = std::clamp(b.h, min_size, 1.0);
    return out;
}

namespace {

double intersection(const BoxXyxy& a, const BoxXyxy& b)
{
    const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
    const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
    if (iw <= 0.0 || ih <= 0.0) {
        return 0.0;
    }
    return iw * ih;
}

}  // namespace

double iou(const Box& a, const Box& b)
{
    const double area_a = area(a);
    const double area_b = area(b);
    if (area_a <= 0.0 || area_b <= 0.0) {
        return 0.0;
    }
    const double inter = intersection(to_xyxy(a), to_xyxy(b));
    const double uni = area_a + area_b - inter;
    if (uni <= 0.0) {
        return 0.0;
    }
    return std::clamp(inter / uni, 0.0, 1.0);
}

double giou(const Box& a, const Box& b)
{
    return giou_with_gradient(a, b).value;
}

GiouGradient giou_with_gradient(const Box& a, const Box& b)
{
    GiouGradient out;
    const BoxXyxy p = to_xyxy(a);
    const BoxXyxy g = to_xyxy(b);

    const double pw = p.x2 - p.x1;
    const double ph = p.y2 - p.y1;
    const double area_p = pw * ph;
    const double area_g = (g.x2 - g.x1) * (g.y2 - g.y1);

    const double iw_raw = std::min(p.x2, g.x2) - std::max(p.x1, g.x1);
    const double ih_raw = std::min(p.y2, g.y2) - std::max(p.y1, g.y1);
    const bool overlaps = iw_raw > 0.0 && ih_raw > 0.0;
    const double iw = overlaps ? iw_raw : 0.0;
    const double ih = overlaps ? ih_raw : 0.0;
    const double inter = iw * ih;
    const double uni = area_p + area_g - inter;

    const double cw = std::max(p.x2, g.x2) - std::min(p.x1, g.x1);
    const double ch = std::max(p.y2, g.y2) - std::min(p.y1, g.y1);
    const double hull = cw * ch;

    if (uni <= 0.0 || hull <= 0.0) {
        return out;
    }
    out.value = inter / uni - (hull - uni) / hull;

    // Partials w.r.t. corners (x1, y1, x2, y2) of the first box.
    std::array<double, 4> d_inter{0.0, 0.0, 0.0, 0.0};
    if (overlaps) {
        if (p.x1 > g.x1) d_inter[0] = -ih;
        if (p.x2 < g.x2) d_inter[2] = ih;
        if (p.y1 > g.y1) d_inter[1] = -iw;
        if (p.y2 < g.y2) d_inter[3] = iw;
    }
    const std::array<double, 4> d_area{-ph, -pw, ph, pw};
    std::array<double, 4> d_hull{0.0, 0.0, 0.0, 0.0};
    if (p.x1 < g.x1) d_hull[0] = -ch;
    if (p.x2 > g.x2) d_hull[2] = ch;
    if (p.y1 < g.y1) d_hull[1] = -cw;
    if (p.y2 > g.y2) d_hull[3] = cw;

    std::array<double, 4> d_corner{};
    for (int k = 0; k < 4; ++k) {
        const double d_uni = d_area[k] - d_inter[k];
        d_corner[k] = (d_inter[k] * uni - inter * d_uni) / (uni * uni) +
                      (d_uni * hull - uni * d_hull[k]) / (hull * hull);
    }
    // x1 = cx - w/2, x2 = cx + w/2 (same for y).
    out.d_a[0] = d_corner[0] + d_corner[2];
    out.d_a[1] = d_corner[1] + d_corner[3];
    out.d_a[2] = 0.5 * (d_corner[2] - d_corner[0]);
    out.d_a[3] = 0.5 * (d_corner[3] - d_corner[1]);
    return out;
}

std::vector<std::size_t> nms_indices(std::span<const ScoredBox> dets, double iou_threshold)
{
    std::vector<std::size_t> order(dets.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return dets[a].score > dets[b].score;
    });

    std::vector<std::size_t> kept;
    for (const std::size_t idx : order) {
        bool suppressed = false;
        for (const std::size_t k : kept) {
            if (iou(dets[idx].box, dets[k].box) > iou_threshold) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) {
            kept.push_back(idx);
        }
    }
    return kept;
}

std::vector<ScoredBox> nms(std::span<const ScoredBox> dets, double iou_threshold)
{
    std::vector<ScoredBox> out;
    for (const std::size_t idx : nms_indices(dets, iou_threshold)) {
        out.push_back(dets[idx]);
    }
    return out;
}

}  // namespace hierdet
