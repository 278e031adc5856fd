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

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "hierdet/detection.hpp"
#include "hierdet/matching.hpp"

namespace hierdet {

struct ImageDetections {
    std::int64_t image_id = 0;
    int width = 0;
    int height = 0;
    std::vector<Detection> detections;
    friend bool operator==(const ImageDetections& a, const ImageDetections& b);
};

/// JSON {"images": [{"image_id", "width", "height", "detections": [{"box"
/// [cx, cy, w, h] normalized, "bbox" [x, y, w, h] pixels, "score", "probs_q",
/// "probs_e", "probs_d", "background"}]}]}. Doubles round-trip exactly; "bbox"
/// is informational and ignored when parsing.
std::string write_detections(std::span<const ImageDetections> images);
/// Throws std::runtime_error naming the first malformed field.
std::vector<ImageDetections> parse_detections(const std::string& text);

/// Perfect detections: one per ground truth with score 1, no background mass
/// and one-hot distributions on every labeled head (uniform on the others).
std::vector<Detection> oracle_detections(std::span<const GroundTruth> gts);

}  // namespace hierdet
