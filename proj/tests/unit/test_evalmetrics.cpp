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

#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "hierdet/detection_io.hpp"
#include "hierdet/evalmetrics.hpp"
#include "hierdet/rng.hpp"
#include "support/oracles.hpp"

using namespace hierdet;
using hierdet::testing::brute_ap;

namespace {

Detection det_for(const Box& b, int quadrant, double score)
{
    Detection d;
    d.box = b;
    d.probs_q[static_cast<std::size_t>(quadrant)] = 1.0;
    d.probs_e[0] = 1.0;
    d.probs_d[0] = 1.0;
    d.score = score;
    return d;
}

GroundTruth gt_for(const Box& b, int quadrant)
{
    return {b, {quadrant, 0, 0}};
}

// A 1000 px image keeps every random box in the large bucket or below.
EvalImage image_of(std::vector<GroundTruth> gts)
{
    return {0, 1000, 1000, std::move(gts)};
}

Box random_box(Rng& rng)
{
    return {0.2 + 0.6 * rng.uniform(), 0.2 + 0.6 * rng.uniform(), 0.1 + 0.3 * rng.uniform(), 0.1 + 0.3 * rng.uniform()};
}

}  // namespace

TEST_CASE("perfect detections score one everywhere they are defined")
{
    std::vector<GroundTruth> gts;
    for (int i = 0; i < 8; ++i) gts.push_back({{0.1 + 0.1 * i, 0.5, 0.05, 0.3}, {i % 4, i, i % 4}});
    const std::vector<EvalImage> images{{1, 1024, 512, gts}};
    const std::vector<std::vector<Detection>> dets{oracle_detections(gts)};
    const EvalReport r = evaluate_all(dets, images);
    for (const Head h : kAllHeads) {
        CHECK(r[h].ap == 1.0);
        CHECK(r[h].ap50 == 1.0);
        CHECK(r[h].ap75 == 1.0);
        CHECK(r[h].ar == 1.0);
        // 51 x 154 px boxes: all medium.
        CHECK(r[h].ap_m == 1.0);
        CHECK(r[h].ap_l == -1.0);
    }
    CHECK(format_report_table(r).find("n/a") != std::string::npos);
    CHECK(format_report_kv(r).find("quadrant.AP=100\n") != std::string::npos);
}

TEST_CASE("no detections give zeros")
{
    const std::vector<EvalImage> images{image_of({gt_for({0.5, 0.5, 0.3, 0.3}, 1)})};
    const std::vector<std::vector<Detection>> dets{{}};
    const TaskMetrics m = evaluate(dets, images, Head::Quadrant);
    CHECK(m.ap == 0.0);
    CHECK(m.ap50 == 0.0);
    CHECK(m.ar == 0.0);
    CHECK(m.ap_l == 0.0);
}

TEST_CASE("wrong high-scoring detection before a correct one")
{
    const Box g{0.5, 0.5, 0.2, 0.2};
    // IoU 0.6 against g: shift along x so the overlap is 0.75 of each box.
    const Box shifted{0.5 + 0.2 * 0.25, 0.5, 0.2, 0.2};
    REQUIRE(iou(shifted, g) == doctest::Approx(0.6));
    const std::vector<EvalImage> images{image_of({gt_for(g, 0)})};
    const std::vector<std::vector<Detection>> dets{{det_for(shifted, 0, 0.9), det_for({0.1, 0.1, 0.1, 0.1}, 0, 0.95)}};
    const ClassEval e = evaluate_class(dets, images, Head::Quadrant, 0, 0.5, kAreaAll);
    CHECK(e.defined);
    CHECK(e.ap == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(e.recall == 1.0);
    CHECK(evaluate(dets, images, Head::Quadrant).ap50 == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(evaluate_class(dets, images, Head::Quadrant, 0, 0.65, kAreaAll).ap == 0.0);
}

TEST_CASE("evaluate_class matches a brute-force PR computation")
{
    Rng rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<GroundTruth> gts;
        const int n_gt = rng.uniform_int(1, 3);
        for (int i = 0; i < n_gt; ++i) gts.push_back(gt_for(random_box(rng), 0));
        std::vector<Detection> dets;
        const int n_det = rng.uniform_int(0, 5);
        for (int i = 0; i < n_det; ++i) {
            // Half of the detections are perturbed copies of ground truth.
            Box b = random_box(rng);
            if (rng.uniform() < 0.5) {
                b = gts[static_cast<std::size_t>(rng.uniform_int(0, n_gt - 1))].box;
                b.cx += 0.05 * rng.normal();
                b.w *= 1.0 + 0.2 * rng.uniform();
            }
            dets.push_back(det_for(b, 0, std::round(rng.uniform() * 4.0) / 4.0));
        }
        const std::vector<EvalImage> images{image_of(gts)};
        const std::vector<std::vector<Detection>> all{dets};
        for (const double thr : {0.5, 0.75}) {
            const ClassEval e = evaluate_class(all, images, Head::Quadrant, 0, thr, kAreaAll);
            std::vector<Box> boxes;
            for (const auto& g : gts) boxes.push_back(g.box);
            const auto b = brute_ap(dets, boxes, thr);
            CHECK(e.ap == doctest::Approx(b.ap).epsilon(1e-12));
            CHECK(e.recall == doctest::Approx(b.recall).epsilon(1e-12));
        }
        const TaskMetrics m = evaluate(all, images, Head::Quadrant);
        CHECK(m.ap <= m.ap50 + 1e-12);
        CHECK(m.ap75 <= m.ap50 + 1e-12);
        CHECK(evaluate(all, images, Head::Quadrant) == m);
    }
}

TEST_CASE("adding a correct detection never lowers AR")
{
    Rng rng(8);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<GroundTruth> gts;
        for (int i = 0; i < 3; ++i) gts.push_back(gt_for(random_box(rng), rng.uniform_int(0, 3)));
        std::vector<Detection> dets;
        for (int i = 0; i < 4; ++i) dets.push_back(det_for(random_box(rng), rng.uniform_int(0, 3), rng.uniform()));
        const std::vector<EvalImage> images{image_of(gts)};
        const double before = evaluate(std::vector<std::vector<Detection>>{dets}, images, Head::Quadrant).ar;
        const GroundTruth& g = gts[static_cast<std::size_t>(rng.uniform_int(0, 2))];
        dets.push_back(det_for(g.box, *g.label.quadrant, rng.uniform()));
        const double after = evaluate(std::vector<std::vector<Detection>>{dets}, images, Head::Quadrant).ar;
        CHECK(after >= before);
    }
}

TEST_CASE("shuffled classes collapse only the permuted task")
{
    std::vector<GroundTruth> gts;
    for (int i = 0; i < 8; ++i) gts.push_back({{0.1 + 0.1 * i, 0.5, 0.05, 0.4}, {i % 4, i, 0}});
    std::vector<Detection> dets = oracle_detections(gts);
    // Cyclic shift of the quadrant class has no fixed point.
    for (Detection& d : dets) std::rotate(d.probs_q.begin(), d.probs_q.begin() + 1, d.probs_q.end());
    const std::vector<EvalImage> images{{1, 1024, 512, gts}};
    const EvalReport r = evaluate_all(std::vector<std::vector<Detection>>{dets}, images);
    CHECK(r[Head::Quadrant].ap == 0.0);
    CHECK(r[Head::Quadrant].ar == 0.0);
    CHECK(r[Head::Enumeration].ap == 1.0);
    CHECK(r[Head::Diagnosis].ar == 1.0);
}

TEST_CASE("area buckets use original pixels")
{
    // 0.05 x 0.05 of a 1000 px image is 50 x 50 px: medium.
    const std::vector<GroundTruth> gts{gt_for({0.3, 0.3, 0.05, 0.05}, 0), gt_for({0.7, 0.7, 0.2, 0.2}, 0)};
    const std::vector<EvalImage> images{image_of(gts)};
    std::vector<Detection> dets{det_for(gts[0].box, 0, 0.9)};
    const TaskMetrics m = evaluate(std::vector<std::vector<Detection>>{dets}, images, Head::Quadrant);
    CHECK(m.ap_m == 1.0);
    CHECK(m.ap_l == 0.0);
    CHECK(m.ar == 0.5);
}

TEST_CASE("missing task labels are rejected")
{
    const std::vector<EvalImage> images{image_of({{{0.5, 0.5, 0.2, 0.2}, {1, std::nullopt, std::nullopt}}})};
    const std::vector<std::vector<Detection>> dets{{}};
    CHECK_NOTHROW(evaluate(dets, images, Head::Quadrant));
    CHECK_THROWS_AS(evaluate(dets, images, Head::Enumeration), EvalError);
    CHECK_THROWS_AS(evaluate(std::vector<std::vector<Detection>>{}, images, Head::Quadrant), EvalError);
}
