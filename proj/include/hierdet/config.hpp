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
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

#include "hierdet/matching.hpp"
#include "hierdet/model.hpp"
#include "hierdet/train.hpp"

namespace hierdet {

/// Environment variable naming the config file used when no --config is given.
inline constexpr const char* kConfigEnvVar = "HIERDET_CONFIG";

struct DataConfig {
    std::filesystem::path dir = "data";
    int train_count = 64;
    int eval_count = 32;
    int image_size = 256;
};

/// Every tunable of a run. Stage entries start as copies of `train` and may
/// override any field except level, seed and the arm flags.
struct RunConfig {
    std::uint64_t seed = 0;
    DataConfig data;
    ModelConfig model;
    DiffusionConfig diffusion;
    LossWeights loss;
    StageConfig train;
    std::array<StageConfig, 3> stages;
    std::filesystem::path output_dir = "runs";

    RunConfig();
    TrainContext context() const;
    /// make_plan over `train`, with the per-stage overrides applied.
    PipelinePlan plan(Arm arm) const;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// JSON object whose sections mirror RunConfig: "seed", "data", "model",
/// "diffusion", "loss", "train", "stages" (keyed by level name) and
/// "output_dir". Missing keys keep their defaults; unknown keys and wrongly
/// typed values raise ConfigError naming the key path.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

/// Fully resolved config as canonical JSON (fixed key order).
std::string config_to_json(const RunConfig& cfg);
/// 64-bit FNV-1a of config_to_json.
std::uint64_t config_fingerprint(const RunConfig& cfg);
std::string fingerprint_hex(std::uint64_t fp);

/// `explicit_path` if given, else the file named by kConfigEnvVar, else none.
std::optional<std::filesystem::path> resolve_config_path(const std::optional<std::filesystem::path>& explicit_path);

}  // namespace hierdet
