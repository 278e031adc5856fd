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

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hierdet/detection.hpp"
#include "hierdet/diffusion.hpp"
#include "hierdet/features.hpp"
#include "hierdet/labels.hpp"
#include "hierdet/matching.hpp"

namespace hierdet {

struct ModelConfig {
    int grid = 16;
    int pool = 7;
    int hidden = 128;
    int time_dim = 16;
    double scale = 2.0;
    /// Upper clip on predicted log size ratios.
    double max_log_ratio = std::log(1000.0 / 16.0);

    int input_dim() const { return pool * pool * kFeatureChannels + time_dim; }
};

struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> values;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> dims);

    std::size_t size() const { return values.size(); }
    friend bool operator==(const Tensor&, const Tensor&) = default;
};

/// Named decoder tensors in a fixed order:
///   roi_mlp.0.weight [H, D]   roi_mlp.0.bias [H]
///   roi_mlp.1.weight [H, H]   roi_mlp.1.bias [H]
///   box_head.weight  [4, H]   box_head.bias  [4]
///   head_q.weight    [5, H]   head_q.bias    [5]
///   head_e.weight    [9, H]   head_e.bias    [9]
///   head_d.weight    [5, H]   head_d.bias    [5]
/// Each classification head has K real rows followed by one background row.
class ParamStore {
public:
    void add(std::string name, Tensor t);
    bool contains(std::string_view name) const;
    Tensor& at(std::string_view name);
    const Tensor& at(std::string_view name) const;

    const std::vector<std::pair<std::string, Tensor>>& tensors() const { return tensors_; }
    std::vector<std::pair<std::string, Tensor>>& tensors() { return tensors_; }
    std::size_t parameter_count() const;

    /// Same names and shapes, all zeros, no metadata.
    ParamStore zeros_like() const;

    /// Deepest level whose heads these parameters were trained on.
    std::optional<HierarchyLevel> trained_level;
    /// Fingerprint of the configuration that produced the parameters.
    std::uint64_t config_fingerprint = 0;

    friend bool operator==(const ParamStore&, const ParamStore&) = default;

private:
    std::vector<std::pair<std::string, Tensor>> tensors_;
};

/// Tensor names of a head's weight and bias.
std::string_view head_weight_name(Head h);
std::string_view head_bias_name(Head h);
bool is_trunk_tensor(std::string_view name);

/// Trunk weights uniform in +-sqrt(6 / (fan_in + fan_out)); every bias and all
/// head weights zero.
ParamStore init_params(const ModelConfig& cfg, std::uint64_t seed);

/// Throws std::invalid_argument naming the first tensor whose shape disagrees with `cfg`.
void check_shapes(const ParamStore& params, const ModelConfig& cfg);

std::vector<double> time_embedding(int t, int dim);

struct DecodeResult {
    std::vector<Detection> detections;
    /// Predicted clean boxes in signal space, one row per proposal.
    BoxArray z0_pred;
};

/// One decoder pass over all proposals of an image. Every head runs regardless
/// of `mask`; the mask only selects which head defines the detection score.
/// Returned boxes are clamped to the image.
DecodeResult decode(const ParamStore& params, const ModelConfig& cfg, const FeatureGrid& grid,
                    const NoisyBoxes& proposals, HeadMask mask);

/// One image of a training batch.
struct TrainSample {
    const FeatureGrid* features = nullptr;
    NoisyBoxes proposals;
    std::vector<GroundTruth> gts;
};

struct LossResult {
    /// Batch means of the per-image breakdowns.
    LossBreakdown loss;
    ParamStore grads;
    std::vector<MatchResult> matches;
};

class NonFiniteLoss : public std::runtime_error {
public:
    NonFiniteLoss(std::string term, const std::string& what) : std::runtime_error(what), term_(std::move(term)) {}
    const std::string& term() const { return term_; }

private:
    std::string term_;
};

/// Mean over the batch of compute_loss, with exact gradients w.r.t. every
/// tensor. Heads outside `mask` get identically zero gradients. When
/// `fixed_matches` is given the assignment is taken from it instead of being
/// solved, which makes the loss a smooth function of the parameters.
LossResult loss_gradients(const ParamStore& params, const ModelConfig& cfg, std::span<const TrainSample> batch,
                          HeadMask mask, const LossWeights& weights,
                          const std::vector<MatchResult>* fixed_matches = nullptr);

/// Unclamped predictions for a training sample, as seen by the loss.
std::vector<Detection> predict_for_loss(const ParamStore& params, const ModelConfig& cfg, const TrainSample& sample,
                                        HeadMask mask);

struct TransferResult {
    ParamStore params;
    /// Tensors taken from the source, in store order.
    std::vector<std::string> copied;
};

/// Copies trunk and box-head tensors from `src` into `dst`, plus every
/// classification head `src` was trained to supervise. Remaining heads keep
/// their fresh values from `dst`. Throws std::invalid_argument if trunk shapes differ.
TransferResult transfer_weights(const ParamStore& src, const ParamStore& dst);

/// Binary checkpoint: "HDETCKPT", u32 version, u64 config fingerprint, u32
/// trained level (0xFFFFFFFF if none), u32 tensor count, then per tensor u32
/// name length, name bytes, u32 rank, u64 dims, f64 values. All little-endian.
std::string encode_checkpoint(const ParamStore& params);
ParamStore decode_checkpoint(const std::string& bytes);
void save_checkpoint(const std::filesystem::path& path, const ParamStore& params);
ParamStore load_checkpoint(const std::filesystem::path& path);

}  // namespace hierdet
