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

#include "hierdet/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace hierdet {

namespace {

// Stream ids for derive_seed.
constexpr std::uint64_t kInitStream = 0x1417;
constexpr std::uint64_t kTrainStream = 0x7A11;
constexpr std::uint64_t kCacheStream = 0xCAC4E;
constexpr std::uint64_t kEvalStream = 0xE7A1;

double seconds_since(std::chrono::steady_clock::time_point start)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

bool tensor_trainable(std::string_view name, HeadMask mask)
{
    if (is_trunk_tensor(name)) return true;
    for (const Head h : kAllHeads) {
        if (name == head_weight_name(h) || name == head_bias_name(h)) return mask.active(h);
    }
    return false;
}

std::vector<Detection> class_aware_nms(const std::vector<Detection>& dets, Head deepest, double iou_threshold)
{
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < dets.size(); ++i) by_class[dets[i].predicted_class(deepest)].push_back(i);

    std::vector<std::size_t> kept;
    for (const auto& [cls, idx] : by_class) {
        std::vector<ScoredBox> group;
        group.reserve(idx.size());
        for (const std::size_t i : idx) group.push_back({dets[i].box, dets[i].score});
        for (const std::size_t k : nms_indices(group, iou_threshold)) kept.push_back(idx[k]);
    }
    std::sort(kept.begin(), kept.end());
    std::stable_sort(kept.begin(), kept.end(),
                     [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });

    std::vector<Detection> out;
    out.reserve(kept.size());
    for (const std::size_t i : kept) out.push_back(dets[i]);
    return out;
}

std::string checkpoint_name(HierarchyLevel level, const std::string& suffix)
{
    return std::string(level_name(level)) + "_" + suffix + ".ckpt";
}

}  // namespace

std::vector<EvalImage> Dataset::eval_images() const
{
    std::vector<EvalImage> out;
    out.reserve(images.size());
    for (const SampleImage& s : images) out.push_back({s.id, s.width, s.height, s.gts});
    return out;
}

Dataset build_dataset(const AnnotationSet& set, std::vector<GrayImage> images, int grid)
{
    if (images.size() != set.images.size()) throw std::invalid_argument("build_dataset: one image per record required");
    Dataset data;
    data.level = set.level;
    for (std::size_t i = 0; i < images.size(); ++i) {
        const ImageRecord& rec = set.images[i];
        if (images[i].width != rec.width || images[i].height != rec.height) {
            throw std::invalid_argument("image " + rec.file_name + " does not match its annotated size");
        }
        SampleImage s;
        s.id = rec.id;
        s.width = rec.width;
        s.height = rec.height;
        s.features = encode_image(images[i], grid);
        s.image = std::move(images[i]);
        s.gts = set.ground_truth(rec.id);
        data.images.push_back(std::move(s));
    }
    return data;
}

Dataset load_dataset(const AnnotationSet& set, const std::filesystem::path& image_dir, int grid)
{
    std::vector<GrayImage> images;
    images.reserve(set.images.size());
    for (const ImageRecord& rec : set.images) images.push_back(read_pgm(image_dir / rec.file_name));
    return build_dataset(set, std::move(images), grid);
}

Schedule DiffusionConfig::schedule() const
{
    return Schedule::cosine(timesteps, cosine_s);
}

void validate(const StageConfig& cfg)
{
    const auto fail = [](const std::string& msg) { throw std::invalid_argument("stage config: " + msg); };
    if (cfg.iterations < 0) fail("iterations must be non-negative");
    if (cfg.batch_size < 1) fail("batch_size must be at least 1");
    if (!(cfg.lr > 0.0)) fail("lr must be positive");
    if (cfg.N < 1) fail("N must be at least 1");
    if (!(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0) || !(cfg.beta2 >= 0.0 && cfg.beta2 < 1.0)) fail("betas must lie in [0, 1)");
    if (!(cfg.weight_decay >= 0.0)) fail("weight_decay must be non-negative");
    if (!(cfg.clip_norm > 0.0)) fail("clip_norm must be positive");
    if (cfg.warmup < 0) fail("warmup must be non-negative");
    if (cfg.log_every < 1) fail("log_every must be at least 1");
    if (cfg.checkpoint_every < 0) fail("checkpoint_every must be non-negative");
    if (cfg.eval_every < 0) fail("eval_every must be non-negative");
    if (cfg.manip_noise_t < 0) fail("manip_noise_t must be non-negative");
}

std::string metrics_jsonl(const std::vector<MetricRecord>& log)
{
    std::string out;
    for (const MetricRecord& r : log) {
        nlohmann::ordered_json j;
        j["iteration"] = r.iteration;
        j["loss"] = r.loss.total;
        j["cls_q"] = r.loss.cls_q;
        j["cls_e"] = r.loss.cls_e;
        j["cls_d"] = r.loss.cls_d;
        j["l1"] = r.loss.l1;
        j["giou"] = r.loss.giou;
        j["grad_norm"] = r.grad_norm;
        j["wall_seconds"] = r.wall_seconds;
        if (r.val_ap50) j["val_ap50"] = *r.val_ap50;
        out += j.dump() + "\n";
    }
    return out;
}

TrainingAborted::TrainingAborted(int iteration, std::string term, ParamStore last_good)
    : std::runtime_error("non-finite " + term + " loss at iteration " + std::to_string(iteration)),
      iteration_(iteration),
      term_(std::move(term)),
      last_good_(std::move(last_good))
{
}

StageResult train_stage(const StageConfig& cfg, const TrainContext& ctx, const Dataset& data,
                        const std::optional<ParamStore>& init, const InferredBoxCache* cache,
                        const Dataset* validation)
{
    validate(cfg);
    if (data.level != cfg.level) {
        throw std::invalid_argument("training data is annotated at " + std::string(level_name(data.level)) +
                                    " but the stage trains " + std::string(level_name(cfg.level)));
    }
    if (cfg.use_manipulation != (cache != nullptr)) {
        throw std::invalid_argument(cfg.use_manipulation ? "manipulation needs an inferred-box cache"
                                                         : "a cache was given to a stage without manipulation");
    }
    if (data.images.empty()) throw std::invalid_argument("training data is empty");
    if (cfg.manip_noise_t > ctx.diffusion.timesteps) {
        throw std::invalid_argument("manip_noise_t exceeds the diffusion timestep count");
    }

    StageResult result;
    result.params = init ? *init : init_params(ctx.model, derive_seed(cfg.seed, kInitStream));
    check_shapes(result.params, ctx.model);
    if (cfg.iterations == 0) return result;

    ParamStore& params = result.params;
    params.config_fingerprint = ctx.config_fingerprint;
    params.trained_level = cfg.level;

    const HeadMask mask = mask_for(cfg.level);
    const Schedule schedule = ctx.diffusion.schedule();
    const int T = schedule.timesteps();
    const double scale = ctx.model.scale;

    std::vector<std::size_t> trainable;
    for (std::size_t i = 0; i < params.tensors().size(); ++i) {
        if (tensor_trainable(params.tensors()[i].first, mask)) trainable.push_back(i);
    }
    ParamStore m = params.zeros_like();
    ParamStore v = params.zeros_like();

    Rng rng(derive_seed(cfg.seed, kTrainStream));
    std::vector<std::size_t> order(data.images.size());
    std::iota(order.begin(), order.end(), 0);
    std::size_t cursor = order.size();

    if (!cfg.checkpoint_dir.empty()) std::filesystem::create_directories(cfg.checkpoint_dir);
    const auto save = [&](const std::string& suffix, const ParamStore& p) {
        if (cfg.checkpoint_dir.empty()) return;
        const auto path = cfg.checkpoint_dir / checkpoint_name(cfg.level, suffix);
        save_checkpoint(path, p);
        result.checkpoints.push_back(path);
    };

    const auto start = std::chrono::steady_clock::now();
    const double b1 = cfg.beta1, b2 = cfg.beta2;
    double b1_power = 1.0, b2_power = 1.0;

    for (int it = 0; it < cfg.iterations; ++it) {
        std::vector<FeatureGrid> augmented;
        augmented.reserve(static_cast<std::size_t>(cfg.batch_size));
        std::vector<TrainSample> batch;
        batch.reserve(static_cast<std::size_t>(cfg.batch_size));

        for (int b = 0; b < cfg.batch_size; ++b) {
            if (cursor == order.size()) {
                std::shuffle(order.begin(), order.end(), rng.engine());
                cursor = 0;
            }
            const SampleImage& img = data.images[order[cursor++]];

            TrainSample sample;
            sample.features = &img.features;
            sample.gts = img.gts;
            if (cfg.augment) {
                Augmented aug = random_crop_resize(img.image, img.gts, 0.8, rng);
                augmented.push_back(encode_image(aug.image, ctx.model.grid));
                sample.features = &augmented.back();
                sample.gts = std::move(aug.gts);
            }

            std::vector<Box> boxes;
            boxes.reserve(sample.gts.size());
            for (const GroundTruth& g : sample.gts) boxes.push_back(g.box);
            const PaddedBoxes padded = pad_gt_boxes(boxes, cfg.N, scale, rng);
            if (padded.truncated) {
                std::vector<GroundTruth> kept;
                for (const int src : padded.source) {
                    if (src >= 0) kept.push_back(sample.gts[static_cast<std::size_t>(src)]);
                }
                sample.gts = std::move(kept);
            }
            const int t = rng.uniform_int(1, T);
            sample.proposals = forward_noise(padded.z0, t, schedule, rng);
            if (cache) {
                const auto inferred = cache->lookup(img.id);
                BoxArray& z = sample.proposals.z;
                z = manipulate_boxes(z, inferred, scale, cfg.manip_threshold);
                const std::size_t k = inferred_row_count(inferred, z.size(), cfg.manip_threshold);
                if (cfg.manip_noise_t > 0 && k > 0) {
                    const BoxArray clean(z.end() - static_cast<std::ptrdiff_t>(k), z.end());
                    const NoisyBoxes noised = forward_noise(clean, cfg.manip_noise_t, schedule, rng);
                    std::copy(noised.z.begin(), noised.z.end(), z.end() - static_cast<std::ptrdiff_t>(k));
                }
            }
            batch.push_back(std::move(sample));
        }

        LossResult lr;
        try {
            lr = loss_gradients(params, ctx.model, batch, mask, ctx.weights);
        } catch (const NonFiniteLoss& e) {
            save("last_good", params);
            throw TrainingAborted(it + 1, e.term(), params);
        }
        if (!std::isfinite(lr.loss.total)) {
            save("last_good", params);
            throw TrainingAborted(it + 1, "total", params);
        }

        double norm2 = 0.0;
        for (const std::size_t i : trainable) {
            for (const double g : lr.grads.tensors()[i].second.values) norm2 += g * g;
        }
        const double grad_norm = std::sqrt(norm2);
        if (!std::isfinite(grad_norm)) {
            save("last_good", params);
            throw TrainingAborted(it + 1, "gradient", params);
        }
        const double clip = grad_norm > cfg.clip_norm ? cfg.clip_norm / grad_norm : 1.0;
        const double step_lr = cfg.warmup > 0 ? cfg.lr * std::min(1.0, (it + 1.0) / cfg.warmup) : cfg.lr;

        b1_power *= b1;
        b2_power *= b2;
        for (const std::size_t i : trainable) {
            std::vector<double>& p = params.tensors()[i].second.values;
            std::vector<double>& mi = m.tensors()[i].second.values;
            std::vector<double>& vi = v.tensors()[i].second.values;
            const std::vector<double>& g = lr.grads.tensors()[i].second.values;
            for (std::size_t k = 0; k < p.size(); ++k) {
                const double gk = g[k] * clip;
                mi[k] = b1 * mi[k] + (1.0 - b1) * gk;
                vi[k] = b2 * vi[k] + (1.0 - b2) * gk * gk;
                const double mhat = mi[k] / (1.0 - b1_power);
                const double vhat = vi[k] / (1.0 - b2_power);
                p[k] -= step_lr * (mhat / (std::sqrt(vhat) + 1e-8) + cfg.weight_decay * p[k]);
            }
        }

        const int done = it + 1;
        const bool eval_now = validation && cfg.eval_every > 0 && done % cfg.eval_every == 0;
        if (done == 1 || done % cfg.log_every == 0 || done == cfg.iterations || eval_now) {
            MetricRecord rec;
            rec.iteration = done;
            rec.loss = lr.loss;
            rec.grad_norm = grad_norm;
            rec.wall_seconds = seconds_since(start);
            if (eval_now) {
                const auto dets = infer_dataset(params, ctx, *validation, mask, cfg.N,
                                                derive_seed(cfg.seed, kEvalStream));
                const auto images = validation->eval_images();
                rec.val_ap50 = evaluate(dets, images, mask.deepest()).ap50;
            }
            result.log.push_back(rec);
        }
        if (cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0 && done != cfg.iterations) {
            save("iter" + std::to_string(done), params);
        }
    }
    save("final", params);
    return result;
}

std::vector<Detection> infer(const ParamStore& params, const TrainContext& ctx, const FeatureGrid& grid,
                             HeadMask mask, int N, std::uint64_t seed)
{
    if (N < 1) throw std::invalid_argument("infer: N must be at least 1");
    const DiffusionConfig& dc = ctx.diffusion;
    if (dc.sample_steps < 1) throw std::invalid_argument("infer: sample_steps must be at least 1");
    const Schedule schedule = dc.schedule();
    const int T = schedule.timesteps();
    const int S = dc.sample_steps;

    Rng rng(seed);
    NoisyBoxes current{inference_proposals(N, rng), T};
    std::vector<Detection> dets;
    for (int i = 0; i < S; ++i) {
        DecodeResult out = decode(params, ctx.model, grid, current, mask);
        if (i == S - 1) {
            dets = std::move(out.detections);
            break;
        }
        const int t_next = static_cast<int>(std::lround(static_cast<double>(T) * (S - i - 1) / S));
        current = ddim_step(current, out.z0_pred, t_next, schedule, dc.eta, rng);
        current = box_renewal(out.detections, current, dc.renewal_threshold, rng);
    }
    return class_aware_nms(dets, mask.deepest(), dc.nms_iou);
}

std::vector<std::vector<Detection>> infer_dataset(const ParamStore& params, const TrainContext& ctx,
                                                  const Dataset& data, HeadMask mask, int N, std::uint64_t seed)
{
    std::vector<std::vector<Detection>> out;
    out.reserve(data.images.size());
    for (const SampleImage& img : data.images) {
        out.push_back(infer(params, ctx, img.features, mask, N, derive_seed(seed, static_cast<std::uint64_t>(img.id))));
    }
    return out;
}

InferredBoxCache build_cache(const ParamStore& params, const TrainContext& ctx, const Dataset& data, HeadMask mask,
                             int N, std::uint64_t seed, double threshold)
{
    InferredBoxCache cache;
    const auto dets = infer_dataset(params, ctx, data, mask, N, seed);
    for (std::size_t i = 0; i < data.images.size(); ++i) {
        const std::int64_t id = data.images[i].id;
        cache.touch(id);
        for (const Detection& d : dets[i]) {
            if (d.score > threshold) cache.add(id, {d.box, d.score, mask.level()});
        }
    }
    return cache;
}

std::string_view arm_name(Arm arm)
{
    switch (arm) {
    case Arm::Full: return "full";
    case Arm::NoTransfer: return "no_transfer";
    case Arm::NoManipulation: return "no_manipulation";
    case Arm::Neither: return "neither";
    }
    return "?";
}

Arm parse_arm(std::string_view name)
{
    for (const Arm a : {Arm::Full, Arm::NoTransfer, Arm::NoManipulation, Arm::Neither}) {
        if (arm_name(a) == name) return a;
    }
    throw std::invalid_argument("unknown arm '" + std::string(name) +
                                "' (expected full, no_transfer, no_manipulation or neither)");
}

PipelinePlan make_plan(Arm arm, const StageConfig& base)
{
    PipelinePlan plan;
    plan.arm = arm;
    const bool manip = arm == Arm::Full || arm == Arm::NoTransfer;
    const bool transfer = arm == Arm::Full || arm == Arm::NoManipulation;
    for (int i = 0; i < 3; ++i) {
        StageConfig& s = plan.stages[static_cast<std::size_t>(i)];
        s = base;
        s.level = static_cast<HierarchyLevel>(i);
        s.seed = derive_seed(base.seed, static_cast<std::uint64_t>(i));
        s.use_manipulation = i > 0 && manip;
        s.use_transfer = i > 0 && transfer;
        if (!base.checkpoint_dir.empty()) s.checkpoint_dir = base.checkpoint_dir;
    }
    return plan;
}

StageInputs prepare_stage(const StageConfig& cfg, const TrainContext& ctx, const Dataset& data,
                          const ParamStore* previous, HierarchyLevel previous_level)
{
    if ((cfg.use_transfer || cfg.use_manipulation) && !previous) {
        throw std::invalid_argument("stage " + std::string(level_name(cfg.level)) +
                                    ": transfer and manipulation need a previous stage");
    }
    StageInputs in;
    in.initial = init_params(ctx.model, derive_seed(cfg.seed, kInitStream));
    if (cfg.use_transfer) in.initial = transfer_weights(*previous, in.initial).params;
    if (cfg.use_manipulation) {
        in.cache = build_cache(*previous, ctx, data, mask_for(previous_level), cfg.N,
                               derive_seed(cfg.seed, kCacheStream), cfg.manip_threshold);
    }
    return in;
}

PipelineResult run_pipeline(const PipelinePlan& plan, const TrainContext& ctx,
                            const std::array<const Dataset*, 3>& train, const Dataset* eval)
{
    for (int i = 0; i < 3; ++i) {
        const auto level = static_cast<HierarchyLevel>(i);
        const Dataset* d = train[static_cast<std::size_t>(i)];
        if (!d || d->images.empty()) {
            throw std::invalid_argument("pipeline: missing training data for level " + std::string(level_name(level)));
        }
        if (d->level != level) {
            throw std::invalid_argument("pipeline: stage " + std::string(level_name(level)) + " got data annotated at " +
                                        std::string(level_name(d->level)));
        }
        const StageConfig& s = plan.stages[static_cast<std::size_t>(i)];
        if (s.level != level) throw std::invalid_argument("pipeline: stage configs must be ordered a, b, c");
        if (i == 0 && (s.use_manipulation || s.use_transfer)) {
            throw std::invalid_argument("pipeline: the first stage has no predecessor to transfer from");
        }
        validate(s);
    }
    if (eval && eval->level != HierarchyLevel::Full) {
        throw std::invalid_argument("pipeline: the evaluation set must be fully labeled");
    }

    PipelineResult result;
    result.arm = plan.arm;
    for (int i = 0; i < 3; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        const StageConfig& cfg = plan.stages[idx];
        StageOutcome& out = result.stages[idx];
        const auto start = std::chrono::steady_clock::now();
        out.level = cfg.level;

        const StageOutcome* prev = i > 0 ? &result.stages[idx - 1] : nullptr;
        StageInputs in = prepare_stage(cfg, ctx, *train[idx], prev ? &prev->result.params : nullptr,
                                       prev ? prev->level : cfg.level);
        out.initial = std::move(in.initial);
        out.cache = std::move(in.cache);

        const std::size_t reads_before = InferredBoxCache::total_reads();
        out.result = train_stage(cfg, ctx, *train[idx], out.initial, out.cache ? &*out.cache : nullptr);
        out.cache_reads = InferredBoxCache::total_reads() - reads_before;

        if (eval) {
            const auto dets = infer_dataset(out.result.params, ctx, *eval, mask_for(cfg.level), cfg.N,
                                            derive_seed(cfg.seed, kEvalStream));
            const auto images = eval->eval_images();
            out.report = evaluate_all(dets, images);
        }
        out.seconds = seconds_since(start);
    }
    result.report = pipeline_report(result);
    return result;
}

std::string pipeline_report(const PipelineResult& result)
{
    std::ostringstream out;
    out << "arm " << arm_name(result.arm) << '\n';
    for (const StageOutcome& s : result.stages) {
        out << '\n' << "stage " << level_name(s.level) << '\n';
        char line[256];
        if (!s.result.log.empty()) {
            const LossBreakdown& l = s.result.log.back().loss;
            std::snprintf(line, sizeof(line), "final loss %.17g (cls_q %.17g cls_e %.17g cls_d %.17g l1 %.17g giou %.17g)\n",
                          l.total, l.cls_q, l.cls_e, l.cls_d, l.l1, l.giou);
            out << line;
        }
        if (s.cache) {
            std::snprintf(line, sizeof(line), "cache: %zu boxes over %zu images, %zu reads\n", s.cache->box_count(),
                          s.cache->image_count(), s.cache_reads);
            out << line;
        } else {
            out << "cache: none\n";
        }
        if (s.report) out << format_report_table(*s.report);
    }
    return out.str();
}

}  // namespace hierdet
