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

#include "hierdet/features.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace hierdet {

FeatureGrid::FeatureGrid(int size, int channels, std::vector<double> values)
    : size_(size), channels_(channels), values_(std::move(values))
{
    if (size_ < 1 || channels_ < 1) throw std::invalid_argument("feature grid must be non-empty");
    if (values_.size() != static_cast<std::size_t>(size_) * size_ * channels_) {
        throw std::invalid_argument("feature grid value count does not match its shape");
    }
    const std::size_t stride = static_cast<std::size_t>(size_) + 1;
    sat_.assign(stride * stride * channels_, 0.0);
    for (int r = 0; r < size_; ++r) {
        for (int c = 0; c < size_; ++c) {
            for (int k = 0; k < channels_; ++k) {
                const double above = sat_[((r)*stride + c + 1) * channels_ + k];
                const double left = sat_[((r + 1) * stride + c) * channels_ + k];
                const double diag = sat_[(r * stride + c) * channels_ + k];
                sat_[((r + 1) * stride + c + 1) * channels_ + k] = at(r, c, k) + above + left - diag;
            }
        }
    }
}

void FeatureGrid::integral(double x, double y, std::span<double> out) const
{
    x = std::clamp(x, 0.0, static_cast<double>(size_));
    y = std::clamp(y, 0.0, static_cast<double>(size_));
    const int c0 = std::min(static_cast<int>(x), size_ - 1);
    const int r0 = std::min(static_cast<int>(y), size_ - 1);
    const double fx = x - c0;
    const double fy = y - r0;
    const std::size_t stride = static_cast<std::size_t>(size_) + 1;
    const double* s00 = &sat_[(r0 * stride + c0) * channels_];
    const double* s01 = &sat_[(r0 * stride + c0 + 1) * channels_];
    const double* s10 = &sat_[((r0 + 1) * stride + c0) * channels_];
    const double* s11 = &sat_[((r0 + 1) * stride + c0 + 1) * channels_];
    const double w00 = (1.0 - fy) * (1.0 - fx);
    const double w01 = (1.0 - fy) * fx;
    const double w10 = fy * (1.0 - fx);
    const double w11 = fy * fx;
    for (int k = 0; k < channels_; ++k) {
        out[k] = w00 * s00[k] + w01 * s01[k] + w10 * s10[k] + w11 * s11[k];
    }
}

FeatureGrid encode_image(const GrayImage& img, int grid_size)
{
    if (img.empty()) throw std::invalid_argument("encode_image: empty image");
    if (grid_size < 1 || img.width < grid_size || img.height < grid_size) {
        throw std::invalid_argument("encode_image: image " + std::to_string(img.width) + "x" +
                                    std::to_string(img.height) + " smaller than grid " + std::to_string(grid_size));
    }
    const int g = grid_size;
    std::vector<double> values(static_cast<std::size_t>(g) * g * kFeatureChannels, 0.0);
    const auto pix = [&](int x, int y) { return img.at(x, y) / 255.0; };

    for (int r = 0; r < g; ++r) {
        const int y0 = r * img.height / g;
        const int y1 = (r + 1) * img.height / g;
        for (int c = 0; c < g; ++c) {
            const int x0 = c * img.width / g;
            const int x1 = (c + 1) * img.width / g;
            double sum = 0.0, sum_sq = 0.0, gx = 0.0, gy = 0.0;
            for (int y = y0; y < y1; ++y) {
                for (int x = x0; x < x1; ++x) {
                    const double v = pix(x, y);
                    sum += v;
                    sum_sq += v * v;
                    if (x + 1 < img.width) gx += std::abs(pix(x + 1, y) - v);
                    if (y + 1 < img.height) gy += std::abs(pix(x, y + 1) - v);
                }
            }
            const double n = static_cast<double>((x1 - x0) * (y1 - y0));
            const double mean = sum / n;
            double* cell = &values[(static_cast<std::size_t>(r) * g + c) * kFeatureChannels];
            cell[kMeanIntensity] = mean;
            cell[kIntensityStd] = std::sqrt(std::max(0.0, sum_sq / n - mean * mean));
            cell[kGradX] = gx / n;
            cell[kGradY] = gy / n;

            const double u = (c + 0.5) / g;
            const double v = (r + 0.5) / g;
            const double pi = std::numbers::pi;
            double* pos = cell + kFirstPositional;
            pos[0] = std::cos(pi * u);
            pos[1] = std::cos(pi * v);
            pos[2] = std::sin(pi * u);
            pos[3] = std::sin(pi * v);
            pos[4] = std::cos(2.0 * pi * u);
            pos[5] = std::cos(2.0 * pi * v);
            pos[6] = std::sin(2.0 * pi * u);
            pos[7] = std::sin(2.0 * pi * v);
        }
    }
    return FeatureGrid(g, kFeatureChannels, std::move(values));
}

void roi_pool_into(const FeatureGrid& grid, const Box& box, int pool, std::span<double> out)
{
    const int ch = grid.channels();
    const double g = grid.size();
    const BoxXyxy b = to_xyxy(box);
    const double bw = (b.x2 - b.x1) / pool;
    const double bh = (b.y2 - b.y1) / pool;

    std::vector<double> f11(ch), f12(ch), f21(ch), f22(ch);
    for (int py = 0; py < pool; ++py) {
        for (int px = 0; px < pool; ++px) {
            double* dst = &out[(static_cast<std::size_t>(py) * pool + px) * ch];
            const double x1 = std::clamp((b.x1 + px * bw) * g, 0.0, g);
            const double x2 = std::clamp((b.x1 + (px + 1) * bw) * g, 0.0, g);
            const double y1 = std::clamp((b.y1 + py * bh) * g, 0.0, g);
            const double y2 = std::clamp((b.y1 + (py + 1) * bh) * g, 0.0, g);
            const double covered = (x2 - x1) * (y2 - y1);
            if (covered < 1e-9) {
                const double cx = (b.x1 + (px + 0.5) * bw) * g;
                const double cy = (b.y1 + (py + 0.5) * bh) * g;
                const int col = std::clamp(static_cast<int>(std::floor(cx)), 0, grid.size() - 1);
                const int row = std::clamp(static_cast<int>(std::floor(cy)), 0, grid.size() - 1);
                for (int k = 0; k < ch; ++k) dst[k] = grid.at(row, col, k);
                continue;
            }
            grid.integral(x1, y1, f11);
            grid.integral(x2, y1, f21);
            grid.integral(x1, y2, f12);
            grid.integral(x2, y2, f22);
            for (int k = 0; k < ch; ++k) {
                dst[k] = (f22[k] - f12[k] - f21[k] + f11[k]) / covered;
            }
        }
    }
}

std::vector<double> roi_pool(const FeatureGrid& grid, const Box& box, int pool)
{
    if (pool < 1) throw std::invalid_argument("roi_pool: pool size must be >= 1");
    std::vector<double> out(static_cast<std::size_t>(pool) * pool * grid.channels());
    roi_pool_into(grid, box, pool, out);
    return out;
}

}  // namespace hierdet
