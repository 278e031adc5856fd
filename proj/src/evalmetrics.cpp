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

#include "hierdet/evalmetrics.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace hierdet {

std::array<double, 10> iou_thresholds()
{
    std::array<double, 10> t{};
    for (int i = 0; i < 10; ++i) t[static_cast<std::size_t>(i)] = (50.0 + 5.0 * i) / 100.0;
    return t;
}

namespace {

double pixel_area(const Box& b, const EvalImage& img)
{
    return b.w * img.width * b.h * img.height;
}

bool in_range(double a, AreaRange r)
{
    return a >= r.lo && a < r.hi;
}

struct ScoredMatch {
    double score;
    bool tp;
};

}  // namespace

ClassEval evaluate_class(std::span<const std::vector<Detection>> dets, std::span<const EvalImage> images, Head task,
                         int cls, double iou_threshold, AreaRange area, int max_dets)
{
    if (dets.size() != images.size()) throw EvalError("detections and ground truth cover different image counts");

    ClassEval out;
    std::size_t positives = 0;
    std::vector<ScoredMatch> matches;

    for (std::size_t im = 0; im < images.size(); ++im) {
        const EvalImage& img = images[im];

        // Ground truth of this class, non-ignored first.
        std::vector<std::size_t> gt_idx;
        std::vector<char> gt_ignore;
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t g = 0; g < img.gts.size(); ++g) {
                const auto label = img.gts[g].label.get(task);
                if (!label || *label != cls) continue;
                const bool ignore = !in_range(pixel_area(img.gts[g].box, img), area);
                if (ignore != (pass == 1)) continue;
                gt_idx.push_back(g);
                gt_ignore.push_back(ignore ? 1 : 0);
                if (!ignore) ++positives;
            }
        }

        std::vector<std::size_t> det_idx;
        for (std::size_t d = 0; d < dets[im].size(); ++d) {
            if (dets[im][d].predicted_class(task) == cls) det_idx.push_back(d);
        }
        std::stable_sort(det_idx.begin(), det_idx.end(),
                         [&](std::size_t a, std::size_t b) { return dets[im][a].score > dets[im][b].score; });
        if (det_idx.size() > static_cast<std::size_t>(max_dets)) det_idx.resize(static_cast<std::size_t>(max_dets));

        std::vector<char> gt_taken(gt_idx.size(), 0);
        for (const std::size_t d : det_idx) {
            const Detection& det = dets[im][d];
            double best = std::min(iou_threshold, 1.0 - 1e-10);
            int m = -1;
            for (std::size_t g = 0; g < gt_idx.size(); ++g) {
                if (gt_taken[g]) continue;
                if (m > -1 && !gt_ignore[static_cast<std::size_t>(m)] && gt_ignore[g]) break;
                const double o = iou(det.box, img.gts[gt_idx[g]].box);
                if (o < best) continue;
                best = o;
                m = static_cast<int>(g);
            }
            bool ignored;
            if (m >= 0) {
                gt_taken[static_cast<std::size_t>(m)] = 1;
                ignored = gt_ignore[static_cast<std::size_t>(m)] != 0;
            } else {
                ignored = !in_range(pixel_area(det.box, img), area);
            }
            if (!ignored) matches.push_back({det.score, m >= 0});
        }
    }

    if (positives == 0) return out;
    out.defined = true;

    std::stable_sort(matches.begin(), matches.end(),
                     [](const ScoredMatch& a, const ScoredMatch& b) { return a.score > b.score; });

    const std::size_t nd = matches.size();
    std::vector<double> recall(nd), precision(nd);
    double tp = 0.0, fp = 0.0;
    for (std::size_t i = 0; i < nd; ++i) {
        if (matches[i].tp) tp += 1.0;
        else fp += 1.0;
        recall[i] = tp / static_cast<double>(positives);
        precision[i] = tp / (tp + fp);
    }
    out.recall = nd > 0 ? recall.back() : 0.0;

    for (std::size_t i = nd; i-- > 1;) {
        precision[i - 1] = std::max(precision[i - 1], precision[i]);
    }
    double sum = 0.0;
    for (int r = 0; r <= 100; ++r) {
        const double level = r / 100.0;
        const auto it = std::lower_bound(recall.begin(), recall.end(), level);
        if (it != recall.end()) sum += precision[static_cast<std::size_t>(it - recall.begin())];
    }
    out.ap = sum / 101.0;
    return out;
}

TaskMetrics evaluate(std::span<const std::vector<Detection>> dets, std::span<const EvalImage> images, Head task,
                     int max_dets)
{
    for (const EvalImage& img : images) {
        for (std::size_t g = 0; g < img.gts.size(); ++g) {
            if (!img.gts[g].label.get(task)) {
                throw EvalError("image " + std::to_string(img.id) + " ground truth " + std::to_string(g) + " has no " +
                                std::string(head_name(task)) + " label; evaluation needs fully labeled data");
            }
        }
    }

    const auto thresholds = iou_thresholds();
    const int classes = class_count(task);

    // Mean of the AP over every defined (class, threshold) cell.
    const auto mean_ap = [&](std::span<const double> thrs, AreaRange area, bool want_recall) {
        double sum = 0.0;
        int n = 0;
        for (const double thr : thrs) {
            for (int c = 0; c < classes; ++c) {
                const ClassEval e = evaluate_class(dets, images, task, c, thr, area, max_dets);
                if (!e.defined) continue;
                sum += want_recall ? e.recall : e.ap;
                ++n;
            }
        }
        return n > 0 ? sum / n : -1.0;
    };

    TaskMetrics m;
    m.ap = mean_ap(thresholds, kAreaAll, false);
    m.ar = mean_ap(thresholds, kAreaAll, true);
    const double t50[] = {thresholds[0]};
    const double t75[] = {thresholds[5]};
    m.ap50 = mean_ap(t50, kAreaAll, false);
    m.ap75 = mean_ap(t75, kAreaAll, false);
    m.ap_m = mean_ap(thresholds, kAreaMedium, false);
    m.ap_l = mean_ap(thresholds, kAreaLarge, false);
    return m;
}

EvalReport evaluate_all(std::span<const std::vector<Detection>> dets, std::span<const EvalImage> images, int max_dets)
{
    EvalReport r;
    for (const Head h : kAllHeads) r.tasks[static_cast<std::size_t>(head_index(h))] = evaluate(dets, images, h, max_dets);
    return r;
}

namespace {

std::string cell(double v)
{
    if (v < 0.0) return "n/a";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f", 100.0 * v);
    return buf;
}

std::string full(double v)
{
    if (v < 0.0) return "n/a";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", 100.0 * v);
    return buf;
}

}  // namespace

std::string format_report_table(const EvalReport& report, const std::string& title)
{
    std::ostringstream out;
    if (!title.empty()) out << title << '\n';
    char line[160];
    std::snprintf(line, sizeof(line), "%-12s %7s %7s %7s %7s %7s %7s\n", "task", "AR", "AP", "AP50", "AP75", "AP_m",
                  "AP_l");
    out << line;
    for (const Head h : kAllHeads) {
        const TaskMetrics& m = report[h];
        std::snprintf(line, sizeof(line), "%-12s %7s %7s %7s %7s %7s %7s\n", std::string(head_name(h)).c_str(),
                      cell(m.ar).c_str(), cell(m.ap).c_str(), cell(m.ap50).c_str(), cell(m.ap75).c_str(),
                      cell(m.ap_m).c_str(), cell(m.ap_l).c_str());
        out << line;
    }
    return out.str();
}

std::string format_report_kv(const EvalReport& report)
{
    std::ostringstream out;
    for (const Head h : kAllHeads) {
        const TaskMetrics& m = report[h];
        const std::string p(head_name(h));
        out << p << ".AR=" << full(m.ar) << '\n';
        out << p << ".AP=" << full(m.ap) << '\n';
        out << p << ".AP50=" << full(m.ap50) << '\n';
        out << p << ".AP75=" << full(m.ap75) << '\n';
        out << p << ".AP_m=" << full(m.ap_m) << '\n';
        out << p << ".AP_l=" << full(m.ap_l) << '\n';
    }
    return out.str();
}

}  // namespace hierdet
