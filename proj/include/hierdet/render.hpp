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
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hierdet/detection.hpp"
#include "hierdet/image.hpp"
#include "hierdet/labels.hpp"
#include "hierdet/matching.hpp"

namespace hierdet {

using Color = std::array<std::uint8_t, 3>;

/// "Q{n} N{n} D{name}" with one-based quadrant and tooth numbers; absent
/// labels are left out.
std::string caption(const LabelTriple& label);

struct Overlay {
    Box box;
    std::string text;
    Color color{255, 64, 64};
};

/// Pixel rectangle covered by a normalized box: inclusive corners, clipped.
struct PixelCorners {
    int x0, y0, x1, y1;
};
PixelCorners box_pixels(const Box& box, int width, int height);

/// One-pixel outline along the inclusive corners.
void draw_rect(RgbImage& img, const PixelCorners& r, Color color);

/// 5x7 glyphs on a 6-pixel advance, scaled by `scale`. Letters are drawn in
/// upper case; characters without a glyph leave a gap.
void draw_text(RgbImage& img, int x, int y, std::string_view text, Color color, int scale = 1);
bool has_glyph(char c);

/// Outlines every box and writes its caption just above it (below when there
/// is no room).
RgbImage render_overlay(const GrayImage& base, std::span<const Overlay> overlays);

/// Caption from each head in `mask`: predicted quadrant, tooth and diagnosis.
std::vector<Overlay> detection_overlays(std::span<const Detection> dets, HeadMask mask, double min_score);
std::vector<Overlay> ground_truth_overlays(std::span<const GroundTruth> gts);

}  // namespace hierdet
