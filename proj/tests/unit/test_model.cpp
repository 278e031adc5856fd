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
#include <cmath>
#include <filesystem>

#include "hierdet/diffusion.hpp"
#include "hierdet/manipulate.hpp"
#include "hierdet/model.hpp"
#include "hierdet/rng.hpp"

using namespace hierdet;

namespace {

ModelConfig small_config()
{
    ModelConfig cfg;
    cfg.grid = 8;
    cfg.pool = 3;
    cfg.hidden = 16;
    cfg.time_dim = 8;
    return cfg;
}

FeatureGrid random_grid(int size, std::uint64_t seed)
{
    Rng rng(seed);
    GrayImage img(size * 4, size * 4);
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
    return encode_image(img, size);
}

// Small random values everywhere, heads included, so no gradient is trivially zero.
ParamStore randomized(const ModelConfig& cfg, std::uint64_t seed)
{
    ParamStore p = init_params(cfg, seed);
    Rng rng(derive_seed(seed, 99));
    for (auto& [name, t] : p.tensors()) {
        if (name.rfind("roi_mlp", 0) == 0 && name.find("weight") != std::string::npos) continue;
        for (double& v : t.values) v = 0.3 * (2.0 * rng.uniform() - 1.0);
    }
    return p;
}

// Labels carry exactly the fields the level supervises.
std::vector<GroundTruth> sample_gts(HierarchyLevel level)
{
    std::vector<GroundTruth> gts{{{0.3, 0.3, 0.2, 0.25}, {0, 2, 1}}, {{0.7, 0.6, 0.15, 0.3}, {3, 5, 2}}};
    const HeadMask mask = mask_for(level);
    for (auto& g : gts) {
        if (!mask.enumeration()) g.label.enumeration.reset();
        if (!mask.diagnosis()) g.label.diagnosis.reset();
    }
    return gts;
}

TrainSample make_sample(const FeatureGrid& grid, int n, int t, std::uint64_t seed,
                        HierarchyLevel level = HierarchyLevel::Full)
{
    Rng rng(seed);
    TrainSample s;
    s.features = &grid;
    s.gts = sample_gts(level);
    std::vector<Box> boxes;
    for (const auto& g : s.gts) boxes.push_back(g.box);
    const PaddedBoxes padded = pad_gt_boxes(boxes, n, 2.0, rng);
    s.proposals = forward_noise(padded.z0, t, Schedule::cosine(1000), rng);
    return s;
}

double loss_at(const ParamStore& p, const ModelConfig& cfg, const std::vector<TrainSample>& batch, HeadMask mask,
               const std::vector<MatchResult>& matches)
{
    return loss_gradients(p, cfg, batch, mask, LossWeights{}, &matches).loss.total;
}

}  // namespace

TEST_CASE("parameter layout")
{
    const ModelConfig cfg;
    const ParamStore p = init_params(cfg, 1);
    CHECK(cfg.input_dim() == 7 * 7 * 12 + 16);
    CHECK(p.at("roi_mlp.0.weight").shape == std::vector<std::size_t>{128, 604});
    CHECK(p.at("head_q.weight").shape == std::vector<std::size_t>{5, 128});
    CHECK(p.at("head_e.weight").shape == std::vector<std::size_t>{9, 128});
    CHECK(p.at("head_d.bias").shape == std::vector<std::size_t>{5});
    CHECK_NOTHROW(check_shapes(p, cfg));
    CHECK_THROWS(check_shapes(p, small_config()));
    for (const Head h : kAllHeads) {
        for (const double v : p.at(head_weight_name(h)).values) CHECK(v == 0.0);
    }
}

TEST_CASE("zero-initialized heads give uniform class distributions")
{
    const ModelConfig cfg = small_config();
    const ParamStore p = init_params(cfg, 2);
    const FeatureGrid grid = random_grid(cfg.grid, 3);
    Rng rng(4);
    const NoisyBoxes z{inference_proposals(10, rng), 1000};
    for (const auto level : {HierarchyLevel::QuadrantOnly, HierarchyLevel::QuadrantEnum, HierarchyLevel::Full}) {
        const DecodeResult r = decode(p, cfg, grid, z, mask_for(level));
        const Head deep = mask_for(level).deepest();
        const int K = class_count(deep);
        for (const Detection& d : r.detections) {
            for (const double v : d.probs_q) CHECK(v == doctest::Approx(1.0 / 4.0));
            for (const double v : d.probs_e) CHECK(v == doctest::Approx(1.0 / 8.0));
            for (const double v : d.probs_d) CHECK(v == doctest::Approx(1.0 / 4.0));
            // Foreground share K/(K+1) times 1/K.
            CHECK(d.score == doctest::Approx(1.0 / (K + 1)));
            CHECK(is_valid(d.box));
        }
    }
}

TEST_CASE("decode is reproducible and row-independent")
{
    const ModelConfig cfg = small_config();
    const ParamStore p = randomized(cfg, 5);
    const FeatureGrid grid = random_grid(cfg.grid, 6);
    Rng rng(7);
    const NoisyBoxes z{inference_proposals(64, rng), 420};
    const HeadMask mask = mask_for(HierarchyLevel::Full);
    const DecodeResult a = decode(p, cfg, grid, z, mask);
    const DecodeResult b = decode(p, cfg, grid, z, mask);
    CHECK(a.z0_pred == b.z0_pred);

    for (const std::size_t row : {std::size_t{0}, std::size_t{17}, std::size_t{63}}) {
        const NoisyBoxes single{{z.z[row]}, z.t};
        const DecodeResult s = decode(p, cfg, grid, single, mask);
        // Batched products may round differently, so compare to 1e-12.
        for (int k = 0; k < 4; ++k) CHECK(s.z0_pred[0][k] == doctest::Approx(a.z0_pred[row][k]).epsilon(1e-12));
        for (int k = 0; k < 4; ++k) {
            CHECK(s.detections[0].probs_d[k] == doctest::Approx(a.detections[row].probs_d[k]).epsilon(1e-12));
        }
        CHECK(s.detections[0].score == doctest::Approx(a.detections[row].score).epsilon(1e-12));
    }
}

TEST_CASE("time embedding")
{
    const auto e = time_embedding(0, 8);
    for (int i = 0; i < 4; ++i) {
        CHECK(e[static_cast<std::size_t>(i)] == 0.0);
        CHECK(e[static_cast<std::size_t>(4 + i)] == 1.0);
    }
    CHECK(time_embedding(37, 8)[0] == doctest::Approx(std::sin(37.0)));
}

TEST_CASE("gradients match central differences for every mask")
{
    const ModelConfig cfg = small_config();
    const FeatureGrid g1 = random_grid(cfg.grid, 10);
    const FeatureGrid g2 = random_grid(cfg.grid, 11);
    for (const auto level : {HierarchyLevel::QuadrantOnly, HierarchyLevel::QuadrantEnum, HierarchyLevel::Full}) {
        const std::vector<TrainSample> batch{make_sample(g1, 6, 150, 12, level), make_sample(g2, 6, 600, 13, level)};
        const HeadMask mask = mask_for(level);
        ParamStore p = randomized(cfg, 14);
        const LossResult lr = loss_gradients(p, cfg, batch, mask, LossWeights{});
        Rng pick(15);
        double worst = 0.0;
        for (std::size_t ti = 0; ti < p.tensors().size(); ++ti) {
            auto& [name, tensor] = p.tensors()[ti];
            const auto& grad = lr.grads.tensors()[ti].second.values;
            for (int s = 0; s < 8; ++s) {
                const auto i = static_cast<std::size_t>(pick.uniform_int(0, static_cast<int>(tensor.size()) - 1));
                const double orig = tensor.values[i];
                const double h = 1e-5;
                tensor.values[i] = orig + h;
                const double up = loss_at(p, cfg, batch, mask, lr.matches);
                tensor.values[i] = orig - h;
                const double down = loss_at(p, cfg, batch, mask, lr.matches);
                tensor.values[i] = orig;
                const double numeric = (up - down) / (2.0 * h);
                const double denom = std::max({std::abs(numeric), std::abs(grad[i]), 1e-4});
                worst = std::max(worst, std::abs(numeric - grad[i]) / denom);
            }
        }
        CHECK(worst < 1e-4);
    }
}

TEST_CASE("unsupervised heads get exactly zero gradient")
{
    const ModelConfig cfg = small_config();
    const FeatureGrid g = random_grid(cfg.grid, 20);
    const ParamStore p = randomized(cfg, 22);
    const std::vector<TrainSample> batch{make_sample(g, 6, 300, 21, HierarchyLevel::QuadrantOnly)};
    const std::vector<TrainSample> batch_e{make_sample(g, 6, 300, 21, HierarchyLevel::QuadrantEnum)};

    const LossResult a = loss_gradients(p, cfg, batch, mask_for(HierarchyLevel::QuadrantOnly), LossWeights{});
    for (const char* name : {"head_e.weight", "head_e.bias", "head_d.weight", "head_d.bias"}) {
        for (const double v : a.grads.at(name).values) CHECK(v == 0.0);
    }
    CHECK(a.loss.cls_e == 0.0);
    CHECK(a.loss.cls_d == 0.0);

    const LossResult b = loss_gradients(p, cfg, batch_e, mask_for(HierarchyLevel::QuadrantEnum), LossWeights{});
    for (const char* name : {"head_d.weight", "head_d.bias"}) {
        for (const double v : b.grads.at(name).values) CHECK(v == 0.0);
    }
    const bool any_e = std::any_of(b.grads.at("head_e.weight").values.begin(), b.grads.at("head_e.weight").values.end(),
                                   [](double v) { return v != 0.0; });
    CHECK(any_e);
}

TEST_CASE("the loss is a batch mean")
{
    const ModelConfig cfg = small_config();
    const FeatureGrid g = random_grid(cfg.grid, 30);
    const TrainSample s = make_sample(g, 6, 300, 31);
    const ParamStore p = randomized(cfg, 32);
    const HeadMask mask = mask_for(HierarchyLevel::Full);
    const std::vector<TrainSample> one{s};
    const std::vector<TrainSample> two{s, s};
    const LossResult a = loss_gradients(p, cfg, one, mask, LossWeights{});
    const LossResult b = loss_gradients(p, cfg, two, mask, LossWeights{});
    CHECK(b.loss.total == doctest::Approx(a.loss.total).epsilon(1e-13));
    const auto& ga = a.grads.at("roi_mlp.0.weight").values;
    const auto& gb = b.grads.at("roi_mlp.0.weight").values;
    for (std::size_t i = 0; i < ga.size(); i += 97) CHECK(gb[i] == doctest::Approx(ga[i]).epsilon(1e-12).scale(1e-15));

    // Same value as the standalone per-image loss.
    const auto dets = predict_for_loss(p, cfg, s, mask);
    const LossBreakdown direct = compute_loss(dets, s.gts, a.matches[0], mask);
    CHECK(direct.total == doctest::Approx(a.loss.total).epsilon(1e-12));
}

TEST_CASE("weight transfer")
{
    const ModelConfig cfg = small_config();
    ParamStore src = randomized(cfg, 40);
    src.trained_level = HierarchyLevel::QuadrantOnly;
    const ParamStore fresh = init_params(cfg, 41);
    const TransferResult t = transfer_weights(src, fresh);

    for (const auto& [name, tensor] : t.params.tensors()) {
        if (is_trunk_tensor(name) || name.rfind("head_q", 0) == 0) {
            CHECK(tensor == src.at(name));
        } else {
            CHECK(tensor == fresh.at(name));
        }
    }
    CHECK(std::find(t.copied.begin(), t.copied.end(), "head_q.weight") != t.copied.end());
    CHECK(std::find(t.copied.begin(), t.copied.end(), "head_e.weight") == t.copied.end());

    // Without further training the quadrant predictions are unchanged.
    const FeatureGrid grid = random_grid(cfg.grid, 42);
    Rng rng(43);
    const NoisyBoxes z{inference_proposals(12, rng), 1000};
    const DecodeResult a = decode(src, cfg, grid, z, mask_for(HierarchyLevel::QuadrantOnly));
    const DecodeResult b = decode(t.params, cfg, grid, z, mask_for(HierarchyLevel::QuadrantOnly));
    for (std::size_t i = 0; i < a.detections.size(); ++i) {
        CHECK(a.detections[i].probs_q == b.detections[i].probs_q);
        CHECK(a.detections[i].box == b.detections[i].box);
    }

    ModelConfig other = cfg;
    other.hidden = 8;
    CHECK_THROWS_AS(transfer_weights(src, init_params(other, 1)), std::invalid_argument);
}

TEST_CASE("checkpoints round-trip bit-exactly")
{
    const ModelConfig cfg = small_config();
    ParamStore p = randomized(cfg, 50);
    p.trained_level = HierarchyLevel::QuadrantEnum;
    p.config_fingerprint = 0x0123456789abcdefull;
    p.at("box_head.bias").values[0] = -0.0;
    p.at("box_head.bias").values[1] = 1e-310;
    const std::string bytes = encode_checkpoint(p);
    const ParamStore q = decode_checkpoint(bytes);
    CHECK(q == p);
    CHECK(encode_checkpoint(q) == bytes);
    CHECK(std::signbit(q.at("box_head.bias").values[0]));

    const auto path = std::filesystem::temp_directory_path() / "hierdet_model_test.ckpt";
    save_checkpoint(path, p);
    CHECK(load_checkpoint(path) == p);
    std::filesystem::remove(path);

    CHECK_THROWS(decode_checkpoint(bytes.substr(0, bytes.size() - 3)));
    CHECK_THROWS(decode_checkpoint("not a checkpoint"));
    CHECK_THROWS(decode_checkpoint(bytes + "x"));
}
