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
#include <string_view>
#include <vector>

#include "hierdet/data.hpp"
#include "hierdet/diffusion.hpp"
#include "hierdet/evalmetrics.hpp"
#include "hierdet/features.hpp"
#include "hierdet/image.hpp"
#include "hierdet/manipulate.hpp"
#include "hierdet/matching.hpp"
#include "hierdet/model.hpp"

namespace hierdet {

/// One training or evaluation image with its encoded feature grid.
struct SampleImage {
    std::int64_t id = 0;
    int width = 0;
    int height = 0;
    GrayImage image;
    FeatureGrid features;
    std::vector<GroundTruth> gts;
};

struct Dataset {
    HierarchyLevel level = HierarchyLevel::Full;
    std::vector<SampleImage> images;

    std::vector<EvalImage> eval_images() const;
};

/// Pairs each annotated image with its pixels; `images[i]` belongs to `set.images[i]`.
Dataset build_dataset(const AnnotationSet& set, std::vector<GrayImage> images, int grid);
/// Reads every image's file_name relative to `image_dir`.
Dataset load_dataset(const AnnotationSet& set, const std::filesystem::path& image_dir, int grid);

struct DiffusionConfig {
    int timesteps = 1000;
    double cosine_s = 0.008;
    /// Sampling steps at inference, 1..8.
    int sample_steps = 1;
    double eta = 1.0;
    double renewal_threshold = 0.5;
    double nms_iou = 0.5;

    Schedule schedule() const;
};

struct StageConfig {
    HierarchyLevel level = HierarchyLevel::QuadrantOnly;
    int iterations = 2000;
    int batch_size = 8;
    double lr = 1e-3;
    int N = 64;
    bool use_manipulation = false;
    bool use_transfer = false;
    std::uint64_t seed = 0;

    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 1e-4;
    double clip_norm = 1.0;
    /// Linear warmup length in iterations, 0 disables it.
    int warmup = 0;
    /// Random crop-and-resize keeping at least 80% of the image.
    bool augment = false;

    double manip_threshold = 0.5;
    /// When positive, inferred boxes are forward-noised to this timestep
    /// before they join the proposals. 0 inserts them clean.
    int manip_noise_t = 0;

    int log_every = 50;
    int checkpoint_every = 500;
    /// Empty disables checkpoint files.
    std::filesystem::path checkpoint_dir;
    /// Validation AP50 is logged every this many iterations when a validation set is given; 0 disables it.
    int eval_every = 0;
};

/// Throws std::invalid_argument on the first bad field.
void validate(const StageConfig& cfg);

struct MetricRecord {
    int iteration = 0;
    LossBreakdown loss;
    double grad_norm = 0.0;
    double wall_seconds = 0.0;
    /// AP50 of the deepest supervised task on the validation set.
    std::optional<double> val_ap50;
};

std::string metrics_jsonl(const std::vector<MetricRecord>& log);

struct StageResult {
    ParamStore params;
    std::vector<MetricRecord> log;
    std::vector<std::filesystem::path> checkpoints;
};

/// Raised when a loss term stops being finite. `last_good` holds the parameters
/// before the failing update; it is also written to the checkpoint directory.
class TrainingAborted : public std::runtime_error {
public:
    TrainingAborted(int iteration, std::string term, ParamStore last_good);
    int iteration() const { return iteration_; }
    const std::string& term() const { return term_; }
    const ParamStore& last_good() const { return last_good_; }

private:
    int iteration_;
    std::string term_;
    ParamStore last_good_;
};

struct TrainContext {
    ModelConfig model;
    DiffusionConfig diffusion;
    LossWeights weights;
    /// Stamped into every checkpoint written.
    std::uint64_t config_fingerprint = 0;
};

/// Single-stage training with AdamW. Heads outside mask_for(cfg.level) are
/// neither updated nor decayed. `init` defaults to a fresh initialization from
/// cfg.seed. A cache must be given exactly when cfg.use_manipulation is set.
StageResult train_stage(const StageConfig& cfg, const TrainContext& ctx, const Dataset& data,
                        const std::optional<ParamStore>& init = std::nullopt,
                        const InferredBoxCache* cache = nullptr, const Dataset* validation = nullptr);

/// Box-diffusion sampling from pure noise: `sample_steps` decoder passes with
/// DDIM updates and box renewal in between, then class-aware NMS on the
/// deepest head's predicted class. Output is sorted by descending score.
std::vector<Detection> infer(const ParamStore& params, const TrainContext& ctx, const FeatureGrid& grid,
                             HeadMask mask, int N, std::uint64_t seed);

/// infer over every image; image i uses derive_seed(seed, id).
std::vector<std::vector<Detection>> infer_dataset(const ParamStore& params, const TrainContext& ctx,
                                                  const Dataset& data, HeadMask mask, int N, std::uint64_t seed);

/// Runs infer over `data` and keeps detections scoring above `threshold`.
/// Every image is registered, including those with no kept box.
InferredBoxCache build_cache(const ParamStore& params, const TrainContext& ctx, const Dataset& data,
                             HeadMask mask, int N, std::uint64_t seed, double threshold = 0.5);

/// Initial parameters and manipulation cache of one stage.
struct StageInputs {
    ParamStore initial;
    std::optional<InferredBoxCache> cache;
};

/// Fresh initialization from cfg.seed, with weights transferred from
/// `previous` when cfg.use_transfer is set, and a cache inferred by `previous`
/// (supervising `previous_level`) on `data` when cfg.use_manipulation is set.
/// Either flag without `previous` throws std::invalid_argument.
StageInputs prepare_stage(const StageConfig& cfg, const TrainContext& ctx, const Dataset& data,
                          const ParamStore* previous, HierarchyLevel previous_level);

enum class Arm { Full, NoTransfer, NoManipulation, Neither };

std::string_view arm_name(Arm arm);
/// Throws std::invalid_argument for unknown names.
Arm parse_arm(std::string_view name);

struct PipelinePlan {
    Arm arm = Arm::Full;
    /// Stages a, b, c; levels and the manipulation/transfer flags follow the arm.
    std::array<StageConfig, 3> stages;
};

/// Stage configs derived from `base`: stage i trains level i with seed
/// derive_seed(base.seed, i) and the arm's flags (stage a never uses either).
PipelinePlan make_plan(Arm arm, const StageConfig& base);

struct StageOutcome {
    HierarchyLevel level = HierarchyLevel::QuadrantOnly;
    ParamStore initial;
    StageResult result;
    /// Cache built from the previous stage, when manipulation is on.
    std::optional<InferredBoxCache> cache;
    std::size_t cache_reads = 0;
    std::optional<EvalReport> report;
    double seconds = 0.0;
};

struct PipelineResult {
    Arm arm = Arm::Full;
    std::array<StageOutcome, 3> stages;
    /// pipeline_report of this result.
    std::string report;
};

/// Trains stages a -> b -> c. `train[i]` must be annotated at level i; the
/// optional `eval` set must be fully labeled and is used for each stage's
/// report. Throws std::invalid_argument before training if a dataset is
/// missing or at the wrong level.
PipelineResult run_pipeline(const PipelinePlan& plan, const TrainContext& ctx,
                            const std::array<const Dataset*, 3>& train, const Dataset* eval = nullptr);

/// Table of every stage's report for one arm.
std::string pipeline_report(const PipelineResult& result);

}  // namespace hierdet
