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

#include "hierdet/render.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace hierdet {

namespace {

struct Glyph {
    char c;
    std::array<std::uint8_t, 7> rows;  // bit 4 is the leftmost column
};

constexpr Glyph kFont[] = {
    {' ', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00}}, {'-', {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00}},
    {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C}}, {':', {0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00}},
    {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}}, {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
    {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}}, {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
    {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}}, {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
    {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}}, {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
    {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}}, {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
    {'A', {0x0E, 0x11, 0x11, 0x11, 0x1F, 0x11, 0x11}}, {'B', {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E}},
    {'C', {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}}, {'D', {0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C}},
    {'E', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}}, {'F', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10}},
    {'G', {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}}, {'H', {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
    {'I', {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}}, {'J', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C}},
    {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}}, {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F}},
    {'M', {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}}, {'N', {0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11}},
    {'O', {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}}, {'P', {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10}},
    {'Q', {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}}, {'R', {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11}},
    {'S', {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}}, {'T', {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
    {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}}, {'V', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04}},
    {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A}}, {'X', {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11}},
    {'Y', {0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04}}, {'Z', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F}},
};

const Glyph* find_glyph(char c)
{
    const char up = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    for (const Glyph& g : kFont) {
        if (g.c == up) return &g;
    }
    return nullptr;
}

constexpr int kAdvance = 6;
constexpr int kGlyphHeight = 7;

}  // namespace

std::string caption(const LabelTriple& label)
{
    std::string out;
    const auto append = [&](const std::string& part) {
        if (!out.empty()) out += ' ';
        out += part;
    };
    if (label.quadrant) append("Q" + std::to_string(*label.quadrant + 1));
    if (label.enumeration) append("N" + std::to_string(*label.enumeration + 1));
    if (label.diagnosis) append("D" + std::string(diagnosis_name(*label.diagnosis)));
    return out;
}

PixelCorners box_pixels(const Box& box, int width, int height)
{
    const BoxXyxy b = to_xyxy(box);
    PixelCorners r;
    r.x0 = std::clamp(static_cast<int>(std::lround(b.x1 * width)), 0, width - 1);
    r.y0 = std::clamp(static_cast<int>(std::lround(b.y1 * height)), 0, height - 1);
    r.x1 = std::clamp(static_cast<int>(std::lround(b.x2 * width)) - 1, r.x0, width - 1);
    r.y1 = std::clamp(static_cast<int>(std::lround(b.y2 * height)) - 1, r.y0, height - 1);
    return r;
}

void draw_rect(RgbImage& img, const PixelCorners& r, Color color)
{
    for (int x = r.x0; x <= r.x1; ++x) {
        img.set(x, r.y0, color);
        img.set(x, r.y1, color);
    }
    for (int y = r.y0; y <= r.y1; ++y) {
        img.set(r.x0, y, color);
        img.set(r.x1, y, color);
    }
}

bool has_glyph(char c)
{
    return find_glyph(c) != nullptr;
}

void draw_text(RgbImage& img, int x, int y, std::string_view text, Color color, int scale)
{
    for (const char c : text) {
        if (const Glyph* g = find_glyph(c)) {
            for (int row = 0; row < kGlyphHeight; ++row) {
                for (int col = 0; col < 5; ++col) {
                    if (!((g->rows[static_cast<std::size_t>(row)] >> (4 - col)) & 1)) continue;
                    for (int dy = 0; dy < scale; ++dy) {
                        for (int dx = 0; dx < scale; ++dx) img.set(x + col * scale + dx, y + row * scale + dy, color);
                    }
                }
            }
        }
        x += kAdvance * scale;
    }
}

RgbImage render_overlay(const GrayImage& base, std::span<const Overlay> overlays)
{
    RgbImage img = RgbImage::from_gray(base);
    for (const Overlay& o : overlays) draw_rect(img, box_pixels(o.box, img.width, img.height), o.color);
    // Captions go on top so outlines never hide text.
    for (const Overlay& o : overlays) {
        const PixelCorners r = box_pixels(o.box, img.width, img.height);
        const int above = r.y0 - kGlyphHeight - 1;
        const int y = above >= 0 ? above : std::min(r.y1 + 2, img.height - kGlyphHeight);
        draw_text(img, r.x0, y, o.text, o.color);
    }
    return img;
}

std::vector<Overlay> detection_overlays(std::span<const Detection> dets, HeadMask mask, double min_score)
{
    std::vector<Overlay> out;
    for (const Detection& d : dets) {
        if (d.score < min_score) continue;
        LabelTriple label;
        if (mask.quadrant()) label.quadrant = d.predicted_class(Head::Quadrant);
        if (mask.enumeration()) label.enumeration = d.predicted_class(Head::Enumeration);
        if (mask.diagnosis()) label.diagnosis = d.predicted_class(Head::Diagnosis);
        out.push_back({d.box, caption(label), Color{255, 64, 64}});
    }
    return out;
}

std::vector<Overlay> ground_truth_overlays(std::span<const GroundTruth> gts)
{
    std::vector<Overlay> out;
    for (const GroundTruth& g : gts) out.push_back({g.box, caption(g.label), Color{64, 255, 64}});
    return out;
}

}  // namespace hierdet
