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

#include "hierdet/train.hpp"
#include "support/synthetic.hpp"

using namespace hierdet;
using hierdet::testing::synthetic_dataset;

namespace {

TrainContext tiny_context()
{
    TrainContext ctx;
    ctx.model.grid = 8;
    ctx.model.pool = 3;
    ctx.model.hidden = 16;
    ctx.model.time_dim = 8;
    return ctx;
}

StageConfig tiny_stage(HierarchyLevel level, int iterations)
{
    StageConfig cfg;
    cfg.level = level;
    cfg.iterations = iterations;
    cfg.batch_size = 2;
    cfg.N = 16;
    cfg.seed = 5;
    cfg.log_every = 1;
    return cfg;
}

double mean_loss(const std::vector<MetricRecord>& log, std::size_t from, std::size_t to)
{
    double s = 0.0;
    for (std::size_t i = from; i < to; ++i) s += log[i].loss.total;
    return s / static_cast<double>(to - from);
}

}  // namespace

TEST_CASE("zero iterations return the initial parameters")
{
    const TrainContext ctx = tiny_context();
    const Dataset data = synthetic_dataset(HierarchyLevel::QuadrantOnly, 2, 1, ctx.model.grid);
    const ParamStore init = init_params(ctx.model, 77);
    const StageResult r = train_stage(tiny_stage(HierarchyLevel::QuadrantOnly, 0), ctx, data, init);
    CHECK(r.params == init);
    CHECK(r.log.empty());
}

TEST_CASE("stage configs are validated")
{
    const TrainContext ctx = tiny_context();
    const Dataset data = synthetic_dataset(HierarchyLevel::QuadrantOnly, 2, 1, ctx.model.grid);
    StageConfig bad = tiny_stage(HierarchyLevel::QuadrantOnly, 1);
    bad.lr = 0.0;
    CHECK_THROWS_AS(validate(bad), std::invalid_argument);
    // Wrong level, and manipulation without a cache.
    CHECK_THROWS_AS(train_stage(tiny_stage(HierarchyLevel::Full, 1), ctx, data), std::invalid_argument);
    StageConfig manip = tiny_stage(HierarchyLevel::QuadrantOnly, 1);
    manip.use_manipulation = true;
    CHECK_THROWS_AS(train_stage(manip, ctx, data), std::invalid_argument);
}

TEST_CASE("training is bit-reproducible and leaves frozen heads untouched")
{
    const TrainContext ctx = tiny_context();
    const Dataset data = synthetic_dataset(HierarchyLevel::QuadrantOnly, 4, 2, ctx.model.grid);
    StageConfig cfg = tiny_stage(HierarchyLevel::QuadrantOnly, 15);
    cfg.augment = true;
    const ParamStore init = init_params(ctx.model, derive_seed(cfg.seed, 1));
    const StageResult a = train_stage(cfg, ctx, data);
    const StageResult b = train_stage(cfg, ctx, data);
    CHECK(encode_checkpoint(a.params) == encode_checkpoint(b.params));
    CHECK(metrics_jsonl(a.log).size() > 0);
    CHECK(a.params.trained_level == HierarchyLevel::QuadrantOnly);

    const StageResult from_init = train_stage(cfg, ctx, data, init);
    for (const char* name : {"head_e.weight", "head_e.bias", "head_d.weight", "head_d.bias"}) {
        CHECK(from_init.params.at(name) == init.at(name));
    }
    CHECK_FALSE(from_init.params.at("head_q.weight") == init.at("head_q.weight"));
    CHECK_FALSE(from_init.params.at("roi_mlp.0.weight") == init.at("roi_mlp.0.weight"));
}

TEST_CASE("loss halves within 500 iterations on eight images")
{
    TrainContext ctx;
    const Dataset data = synthetic_dataset(HierarchyLevel::QuadrantOnly, 8, 3, ctx.model.grid);
    StageConfig cfg;
    cfg.level = HierarchyLevel::QuadrantOnly;
    cfg.iterations = 500;
    cfg.log_every = 1;
    cfg.seed = 0;
    const StageResult r = train_stage(cfg, ctx, data);
    REQUIRE(r.log.size() == 500);
    const double first = mean_loss(r.log, 0, 10);
    const double last = mean_loss(r.log, 490, 500);
    MESSAGE("loss " << first << " -> " << last);
    CHECK(last <= 0.5 * first);
}

TEST_CASE("inference")
{
    const TrainContext ctx = tiny_context();
    const Dataset data = synthetic_dataset(HierarchyLevel::QuadrantEnum, 1, 4, ctx.model.grid);
    const FeatureGrid& grid = data.images[0].features;
    const HeadMask mask = mask_for(HierarchyLevel::QuadrantEnum);

    SUBCASE("untrained heads give equal scores and NMS removes overlaps")
    {
        const ParamStore p = init_params(ctx.model, 1);
        const auto dets = infer(p, ctx, grid, mask, 64, 9);
        REQUIRE_FALSE(dets.empty());
        CHECK(dets.size() < 64);
        for (const Detection& d : dets) CHECK(d.score == doctest::Approx(1.0 / 9.0));
        for (std::size_t i = 0; i < dets.size(); ++i) {
            for (std::size_t j = i + 1; j < dets.size(); ++j) {
                if (dets[i].predicted_class(Head::Enumeration) != dets[j].predicted_class(Head::Enumeration)) continue;
                CHECK(iou(dets[i].box, dets[j].box) <= 0.5);
            }
        }
    }
    SUBCASE("one sampling step is a single decode")
    {
        ParamStore p = init_params(ctx.model, 2);
        Rng noise(3);
        for (auto& [name, t] : p.tensors()) {
            for (double& v : t.values) v += 0.2 * noise.normal();
        }
        const auto dets = infer(p, ctx, grid, mask, 32, 11);
        Rng rng(11);
        const NoisyBoxes z{inference_proposals(32, rng), ctx.diffusion.timesteps};
        const DecodeResult single = decode(p, ctx.model, grid, z, mask);
        for (const Detection& d : dets) {
            const bool found = std::any_of(single.detections.begin(), single.detections.end(), [&](const Detection& s) {
                return s.box == d.box && s.score == d.score;
            });
            CHECK(found);
        }
        CHECK(std::is_sorted(dets.begin(), dets.end(), [](const auto& a, const auto& b) { return a.score > b.score; }));
        CHECK(infer(p, ctx, grid, mask, 32, 11).size() == dets.size());

        TrainContext multi = ctx;
        multi.diffusion.sample_steps = 4;
        multi.diffusion.eta = 0.0;
        const auto m1 = infer(p, multi, grid, mask, 32, 11);
        const auto m2 = infer(p, multi, grid, mask, 32, 11);
        REQUIRE(m1.size() == m2.size());
        for (std::size_t i = 0; i < m1.size(); ++i) CHECK(m1[i].box == m2[i].box);
    }
}

TEST_CASE("cache thresholds")
{
    const TrainContext ctx = tiny_context();
    const Dataset data = synthetic_dataset(HierarchyLevel::QuadrantOnly, 3, 6, ctx.model.grid);
    ParamStore p = init_params(ctx.model, 4);
    Rng noise(5);
    for (double& v : p.at("head_q.bias").values) v = 2.0 * noise.normal();
    const HeadMask mask = mask_for(HierarchyLevel::QuadrantOnly);

    const InferredBoxCache none = build_cache(p, ctx, data, mask, 32, 7, 1.0);
    CHECK(none.box_count() == 0);
    CHECK(none.image_count() == 3);

    const auto dets = infer_dataset(p, ctx, data, mask, 32, 7);
    std::size_t total = 0;
    for (const auto& d : dets) total += d.size();
    CHECK(build_cache(p, ctx, data, mask, 32, 7, 0.0).box_count() == total);

    const InferredBoxCache half = build_cache(p, ctx, data, mask, 32, 7, 0.5);
    for (const auto& [id, boxes] : half.entries()) {
        for (const InferredBox& b : boxes) CHECK(b.score > 0.5);
    }
}

TEST_CASE("optional noise on inferred boxes")
{
    const TrainContext ctx = tiny_context();
    const Dataset data = synthetic_dataset(HierarchyLevel::QuadrantEnum, 3, 9, ctx.model.grid);
    InferredBoxCache cache;
    for (const auto& img : data.images) {
        for (const GroundTruth& g : img.gts) cache.add(img.id, {g.box, 0.9, HierarchyLevel::QuadrantOnly});
    }
    StageConfig cfg = tiny_stage(HierarchyLevel::QuadrantEnum, 5);
    cfg.use_manipulation = true;
    const StageResult clean = train_stage(cfg, ctx, data, std::nullopt, &cache);
    cfg.manip_noise_t = 300;
    const StageResult noised = train_stage(cfg, ctx, data, std::nullopt, &cache);
    CHECK_FALSE(encode_checkpoint(clean.params) == encode_checkpoint(noised.params));
    CHECK(encode_checkpoint(train_stage(cfg, ctx, data, std::nullopt, &cache).params) ==
          encode_checkpoint(noised.params));

    cfg.manip_noise_t = ctx.diffusion.timesteps + 1;
    CHECK_THROWS_AS(train_stage(cfg, ctx, data, std::nullopt, &cache), std::invalid_argument);
    cfg.manip_noise_t = -1;
    CHECK_THROWS_AS(validate(cfg), std::invalid_argument);
}

TEST_CASE("arm plans")
{
    StageConfig base;
    base.seed = 12;
    const struct {
        Arm arm;
        bool manip;
        bool transfer;
    } rows[] = {{Arm::Full, true, true},
                {Arm::NoTransfer, true, false},
                {Arm::NoManipulation, false, true},
                {Arm::Neither, false, false}};
    for (const auto& row : rows) {
        const PipelinePlan plan = make_plan(row.arm, base);
        CHECK(parse_arm(arm_name(row.arm)) == row.arm);
        for (int i = 0; i < 3; ++i) {
            const StageConfig& s = plan.stages[static_cast<std::size_t>(i)];
            CHECK(s.level == static_cast<HierarchyLevel>(i));
            CHECK(s.seed == derive_seed(12, static_cast<std::uint64_t>(i)));
            CHECK(s.use_manipulation == (i > 0 && row.manip));
            CHECK(s.use_transfer == (i > 0 && row.transfer));
        }
    }
    CHECK_THROWS_AS(parse_arm("both"), std::invalid_argument);
}

TEST_CASE("pipeline plumbing")
{
    const TrainContext ctx = tiny_context();
    const Dataset a = synthetic_dataset(HierarchyLevel::QuadrantOnly, 3, 8, ctx.model.grid);
    const Dataset b = synthetic_dataset(HierarchyLevel::QuadrantEnum, 3, 8, ctx.model.grid, 4);
    const Dataset c = synthetic_dataset(HierarchyLevel::Full, 3, 8, ctx.model.grid, 7);
    StageConfig base = tiny_stage(HierarchyLevel::QuadrantOnly, 3);
    base.manip_threshold = 0.0;

    CHECK_THROWS_AS(run_pipeline(make_plan(Arm::Full, base), ctx, {&a, &b, nullptr}), std::invalid_argument);
    CHECK_THROWS_AS(run_pipeline(make_plan(Arm::Full, base), ctx, {&a, &c, &b}), std::invalid_argument);

    const PipelineResult full = run_pipeline(make_plan(Arm::Full, base), ctx, {&a, &b, &c}, &c);
    CHECK(full.stages[1].cache.has_value());
    CHECK(full.stages[1].cache_reads > 0);
    CHECK(full.stages[2].initial.at("roi_mlp.0.weight") == full.stages[1].result.params.at("roi_mlp.0.weight"));
    CHECK(full.stages[2].report.has_value());

    const PipelineResult none = run_pipeline(make_plan(Arm::NoManipulation, base), ctx, {&a, &b, &c});
    for (const StageOutcome& s : none.stages) {
        CHECK_FALSE(s.cache.has_value());
        CHECK(s.cache_reads == 0);
    }

    const PipelineResult neither = run_pipeline(make_plan(Arm::Neither, base), ctx, {&a, &b, &c});
    for (int i = 1; i < 3; ++i) {
        const ParamStore& init = neither.stages[static_cast<std::size_t>(i)].initial;
        for (int j = 0; j < i; ++j) {
            const ParamStore& prior = neither.stages[static_cast<std::size_t>(j)].result.params;
            for (const auto& [name, t] : init.tensors()) {
                // Zero-initialized tensors coincide by construction.
                if (!is_trunk_tensor(name) || name.find("weight") == std::string::npos) continue;
                CHECK_FALSE(t == prior.at(name));
            }
        }
    }
    CHECK(pipeline_report(neither) == neither.report);
    CHECK(run_pipeline(make_plan(Arm::Neither, base), ctx, {&a, &b, &c}).report == neither.report);
}
