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
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hierdet/detection.hpp"
#include "hierdet/labels.hpp"
#include "hierdet/matching.hpp"

namespace hierdet {

/// Ground truth of one evaluation image. Width and height are the original
/// pixel size and are only used for the area buckets.
struct EvalImage {
    std::int64_t id = 0;
    int width = 0;
    int height = 0;
    std::vector<GroundTruth> gts;
};

/// Pixel-area interval [lo, hi).
struct AreaRange {
    double lo = 0.0;
    double hi = std::numeric_limits<double>::infinity();
};

inline constexpr AreaRange kAreaAll{0.0, std::numeric_limits<double>::infinity()};
inline constexpr AreaRange kAreaMedium{32.0 * 32.0, 96.0 * 96.0};
inline constexpr AreaRange kAreaLarge{96.0 * 96.0, std::numeric_limits<double>::infinity()};

/// IoU thresholds .50:.05:.95.
std::array<double, 10> iou_thresholds();

/// Metrics of one task, each in [0, 1]; -1 marks an undefined entry (no
/// ground truth falls in the relevant area bucket).
struct TaskMetrics {
    double ar = -1.0;
    double ap = -1.0;
    double ap50 = -1.0;
    double ap75 = -1.0;
    double ap_m = -1.0;
    double ap_l = -1.0;

    friend bool operator==(const TaskMetrics&, const TaskMetrics&) = default;
};

struct EvalReport {
    std::array<TaskMetrics, 3> tasks;

    const TaskMetrics& operator[](Head h) const { return tasks[static_cast<std::size_t>(head_index(h))]; }
    friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

class EvalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Precision/recall summary of one (class, IoU threshold, area) cell.
struct ClassEval {
    bool defined = false;  ///< at least one non-ignored ground truth
    double ap = 0.0;       ///< 101-point interpolated
    double recall = 0.0;   ///< at max_dets
};

/// Greedy score-ordered matching as in the COCO protocol: detections claim the
/// best-overlapping unclaimed ground truth of the same class with IoU at or
/// above the threshold; ground truth outside the area range is ignored and so
/// are detections matched to it or lying outside the range themselves.
ClassEval evaluate_class(std::span<const std::vector<Detection>> dets, std::span<const EvalImage> images, Head task,
                         int cls, double iou_threshold, AreaRange area, int max_dets = 100);

/// Throws EvalError when some ground truth lacks the task's label.
TaskMetrics evaluate(std::span<const std::vector<Detection>> dets, std::span<const EvalImage> images, Head task,
                     int max_dets = 100);

EvalReport evaluate_all(std::span<const std::vector<Detection>> dets, std::span<const EvalImage> images,
                        int max_dets = 100);

/// Fixed-width table, values as percentages with one decimal.
std::string format_report_table(const EvalReport& report, const std::string& title = "");
/// One "task.metric=value" line per entry, full precision, percentages.
std::string format_report_kv(const EvalReport& report);

}  // namespace hierdet
