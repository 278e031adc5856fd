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

#include <span>
#include <vector>

#include "hierdet/geometry.hpp"
#include "hierdet/image.hpp"

namespace hierdet {

/// Channel layout of the handcrafted encoder output.
enum FeatureChannel : int {
    kMeanIntensity = 0,
    kIntensityStd = 1,
    kGradX = 2,  ///< mean |I(x+1,y) - I(x,y)|
    kGradY = 3,  ///< mean |I(x,y+1) - I(x,y)|
    kFirstPositional = 4,
    kFeatureChannels = 12,
};

/// size x size x channels feature map (row-major, channels innermost) with a
/// summed-area table for exact box integrals.
class FeatureGrid {
public:
    FeatureGrid() = default;
    FeatureGrid(int size, int channels, std::vector<double> values);

    int size() const { return size_; }
    int channels() const { return channels_; }
    double at(int row, int col, int channel) const
    {
        return values_[(static_cast<std::size_t>(row) * size_ + col) * channels_ + channel];
    }
    std::span<const double> values() const { return values_; }

    /// Integral of the piecewise-constant map over [0,x] x [0,y] in cell units.
    void integral(double x, double y, std::span<double> out) const;

private:
    int size_ = 0;
    int channels_ = 0;
    std::vector<double> values_;
    std::vector<double> sat_;
};

/// Frozen encoder: per grid cell, intensity mean and std, horizontal and
/// vertical gradient magnitudes, and eight fixed positional channels
/// (cos/sin of pi*u, pi*v, 2*pi*u, 2*pi*v at the cell center). Intensities are
/// scaled to [0,1]. Throws std::invalid_argument for images smaller than the grid.
FeatureGrid encode_image(const GrayImage& img, int grid_size = 16);

/// Splits `box` into pool x pool bins and averages the feature map over each
/// bin weighted by cell coverage. Bins with no area inside the map take the
/// value of the nearest cell. Output is bin-major: [bin_y][bin_x][channel].
std::vector<double> roi_pool(const FeatureGrid& grid, const Box& box, int pool);

/// Same as roi_pool but writes into a caller-provided buffer of pool*pool*C.
void roi_pool_into(const FeatureGrid& grid, const Box& box, int pool, std::span<double> out);

}  // namespace hierdet
