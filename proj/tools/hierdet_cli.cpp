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

// Command-line entry point: synthetic data generation, staged training,
// inference, evaluation, overlay rendering and annotation linting.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hierdet/config.hpp"
#include "hierdet/data.hpp"
#include "hierdet/detection_io.hpp"
#include "hierdet/evalmetrics.hpp"
#include "hierdet/render.hpp"
#include "hierdet/train.hpp"

namespace fs = std::filesystem;
using namespace hierdet;

namespace {

enum ExitCode {
    kOk = 0,
    kFailure = 1,
    kUsage = 2,
    kMissingFile = 3,
    kBadConfig = 4,
    kBadAnnotations = 5,
    kNanAbort = 6,
    kEvalFailure = 7,
};

class MissingFile : public std::runtime_error {
public:
    explicit MissingFile(const fs::path& p) : std::runtime_error("no such file or directory: " + p.string()) {}
};

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

void require_exists(const fs::path& p)
{
    if (!fs::exists(p)) throw MissingFile(p);
}

void log(const std::string& msg)
{
    std::cerr << msg << '\n';
}

/// Config used by every subcommand; flags applied afterwards override it.
RunConfig resolve_run_config(const std::optional<fs::path>& flag)
{
    RunConfig cfg;
    if (const auto path = resolve_config_path(flag)) {
        require_exists(*path);
        cfg = load_config(*path);
        log("config: " + path->string());
    }
    return cfg;
}

void log_fingerprint(const RunConfig& cfg)
{
    log("config fingerprint: " + fingerprint_hex(config_fingerprint(cfg)));
}

/// Deepest level whose category field appears on any annotation.
HierarchyLevel detect_level(const fs::path& annotations)
{
    const nlohmann::json doc = nlohmann::json::parse(read_file(annotations), nullptr, false);
    if (doc.is_discarded() || !doc.is_object() || !doc.contains("annotations") || !doc["annotations"].is_array()) {
        // Let the parser report the problem in full.
        return HierarchyLevel::Full;
    }
    HierarchyLevel level = HierarchyLevel::QuadrantOnly;
    for (const auto& a : doc["annotations"]) {
        if (!a.is_object()) continue;
        if (a.contains("category_id_3")) return HierarchyLevel::Full;
        if (a.contains("category_id_2")) level = HierarchyLevel::QuadrantEnum;
    }
    return level;
}

AnnotationSet load_set(const fs::path& path, const std::string& level_flag)
{
    require_exists(path);
    const HierarchyLevel level = level_flag == "auto" ? detect_level(path) : parse_level(level_flag);
    return load_annotations(path, level);
}

fs::path image_dir_for(const fs::path& annotations, const std::string& flag)
{
    const fs::path dir = flag.empty() ? annotations.parent_path() / "images" : fs::path(flag);
    require_exists(dir);
    return dir;
}

fs::path level_file(const fs::path& data_dir, HierarchyLevel level)
{
    return data_dir / (std::string(level_name(level)) + ".json");
}

Dataset load_level(const fs::path& data_dir, HierarchyLevel level, int grid)
{
    const fs::path file = level_file(data_dir, level);
    require_exists(file);
    const AnnotationSet set = load_annotations(file, level);
    return load_dataset(set, image_dir_for(file, ""), grid);
}

std::string image_file_name(std::int64_t id)
{
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%06lld.pgm", static_cast<long long>(id));
    return buf;
}

// ---------------------------------------------------------------- datagen

struct DatagenArgs {
    fs::path out;
    std::optional<int> count;
    std::optional<std::uint64_t> seed;
    std::optional<int> size;
    std::int64_t first_id = 1;
};

int run_datagen(const DatagenArgs& a, const RunConfig& cfg)
{
    const int count = a.count.value_or(cfg.data.train_count);
    const std::uint64_t seed = a.seed.value_or(cfg.seed);
    const int size = a.size.value_or(cfg.data.image_size);
    if (count < 1) throw UsageError("--count must be at least 1");

    fs::create_directories(a.out / "images");
    std::array<AnnotationSet, 3> sets;
    std::array<std::int64_t, 3> next_id{1, 1, 1};
    for (int l = 0; l < 3; ++l) sets[static_cast<std::size_t>(l)].level = static_cast<HierarchyLevel>(l);

    for (int k = 0; k < count; ++k) {
        const std::int64_t id = a.first_id + k;
        const SyntheticImage s = generate_layout(derive_seed(seed, static_cast<std::uint64_t>(id)), size);
        const std::string name = image_file_name(id);
        write_pgm(a.out / "images" / name, s.image);
        for (std::size_t l = 0; l < 3; ++l) {
            sets[l].images.push_back({id, size, size, name});
            auto anns = project_level(s.layout, sets[l].level, id, next_id[l]);
            next_id[l] += static_cast<std::int64_t>(anns.size());
            sets[l].annotations.insert(sets[l].annotations.end(), anns.begin(), anns.end());
        }
    }
    for (const AnnotationSet& set : sets) save_annotations(level_file(a.out, set.level), set);
    std::printf("wrote %d images at %dx%d to %s\n", count, size, size, a.out.string().c_str());
    return kOk;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
    fs::path data;
    std::string level;
    fs::path out;
    std::optional<fs::path> prev;
    bool manipulation = false;
    bool transfer = false;
    std::optional<int> iterations;
    std::optional<std::uint64_t> seed;
    std::optional<fs::path> metrics;
};

int run_train(const TrainArgs& a, RunConfig cfg)
{
    const HierarchyLevel level = parse_level(a.level);
    StageConfig stage = cfg.stages[static_cast<std::size_t>(level)];
    stage.level = level;
    stage.seed = a.seed.value_or(cfg.seed);
    if (a.iterations) stage.iterations = *a.iterations;
    stage.use_manipulation = a.manipulation;
    stage.use_transfer = a.transfer;
    if ((a.manipulation || a.transfer) && !a.prev) throw UsageError("--manipulation and --transfer need --prev");
    cfg.stages[static_cast<std::size_t>(level)] = stage;
    log_fingerprint(cfg);
    const TrainContext ctx = cfg.context();

    std::optional<ParamStore> prev;
    HierarchyLevel prev_level = level;
    if (a.prev) {
        require_exists(*a.prev);
        prev = load_checkpoint(*a.prev);
        check_shapes(*prev, ctx.model);
        if (!prev->trained_level) throw UsageError("--prev checkpoint records no trained level");
        prev_level = *prev->trained_level;
    }
    const Dataset data = load_level(a.data, level, ctx.model.grid);
    StageInputs in = prepare_stage(stage, ctx, data, prev ? &*prev : nullptr, prev_level);
    if (in.cache) log("cache: " + std::to_string(in.cache->box_count()) + " boxes");

    const StageResult r = train_stage(stage, ctx, data, in.initial, in.cache ? &*in.cache : nullptr);
    if (a.out.has_parent_path()) fs::create_directories(a.out.parent_path());
    save_checkpoint(a.out, r.params);
    if (a.metrics) write_file(*a.metrics, metrics_jsonl(r.log));
    if (!r.log.empty()) std::printf("final loss %.6f\n", r.log.back().loss.total);
    std::printf("checkpoint %s\n", a.out.string().c_str());
    return kOk;
}

// ---------------------------------------------------------------- pipeline

struct PipelineArgs {
    fs::path data;
    std::optional<fs::path> eval;
    std::string arm = "full";
    std::optional<fs::path> out;
    std::optional<int> iterations;
    std::optional<std::uint64_t> seed;
};

int run_pipeline_cmd(const PipelineArgs& a, RunConfig cfg)
{
    const Arm arm = parse_arm(a.arm);
    if (a.seed) cfg.seed = *a.seed;
    if (a.iterations) {
        cfg.train.iterations = *a.iterations;
        for (StageConfig& s : cfg.stages) s.iterations = *a.iterations;
    }
    log_fingerprint(cfg);
    const TrainContext ctx = cfg.context();
    const fs::path out = a.out.value_or(cfg.output_dir / std::string(arm_name(arm)));

    std::array<Dataset, 3> train;
    for (int l = 0; l < 3; ++l) train[static_cast<std::size_t>(l)] = load_level(a.data, static_cast<HierarchyLevel>(l), ctx.model.grid);
    std::optional<Dataset> eval;
    if (a.eval) eval = load_level(*a.eval, HierarchyLevel::Full, ctx.model.grid);

    const PipelineResult r = run_pipeline(cfg.plan(arm), ctx, {&train[0], &train[1], &train[2]}, eval ? &*eval : nullptr);

    fs::create_directories(out);
    write_file(out / "config.json", config_to_json(cfg));
    for (const StageOutcome& s : r.stages) {
        const std::string name(level_name(s.level));
        save_checkpoint(out / (name + ".ckpt"), s.result.params);
        write_file(out / (name + "_metrics.jsonl"), metrics_jsonl(s.result.log));
    }
    write_file(out / "report.txt", r.report);
    std::printf("%s", r.report.c_str());
    return kOk;
}

// ---------------------------------------------------------------- infer

struct InferArgs {
    fs::path ckpt;
    fs::path annotations;
    std::string images;
    std::string level = "auto";
    fs::path out;
    std::optional<int> N;
    std::optional<std::uint64_t> seed;
};

int run_infer(const InferArgs& a, const RunConfig& cfg)
{
    log_fingerprint(cfg);
    const TrainContext ctx = cfg.context();
    require_exists(a.ckpt);
    const ParamStore params = load_checkpoint(a.ckpt);
    check_shapes(params, ctx.model);
    const HierarchyLevel trained = params.trained_level.value_or(HierarchyLevel::QuadrantOnly);

    const AnnotationSet set = load_set(a.annotations, a.level);
    const Dataset data = load_dataset(set, image_dir_for(a.annotations, a.images), ctx.model.grid);
    const int N = a.N.value_or(cfg.stages[static_cast<std::size_t>(trained)].N);
    const auto dets = infer_dataset(params, ctx, data, mask_for(trained), N, a.seed.value_or(cfg.seed));

    std::vector<ImageDetections> out;
    for (std::size_t i = 0; i < data.images.size(); ++i) {
        const SampleImage& img = data.images[i];
        out.push_back({img.id, img.width, img.height, dets[i]});
    }
    if (a.out.has_parent_path()) fs::create_directories(a.out.parent_path());
    write_file(a.out, write_detections(out));
    std::printf("wrote detections for %zu images to %s\n", out.size(), a.out.string().c_str());
    return kOk;
}

// ---------------------------------------------------------------- eval / render

/// Detections per annotated image, in annotation-file order.
std::vector<std::vector<Detection>> detections_for(const AnnotationSet& set, const std::optional<fs::path>& file,
                                                   bool oracle)
{
    std::vector<std::vector<Detection>> out(set.images.size());
    if (oracle) {
        for (std::size_t i = 0; i < set.images.size(); ++i) {
            const auto gts = set.ground_truth(set.images[i].id);
            out[i] = oracle_detections(gts);
        }
        return out;
    }
    if (!file) throw UsageError("give --detections or --oracle");
    require_exists(*file);
    for (ImageDetections& d : parse_detections(read_file(*file))) {
        std::size_t i = 0;
        while (i < set.images.size() && set.images[i].id != d.image_id) ++i;
        if (i == set.images.size()) {
            throw EvalError("detections reference image " + std::to_string(d.image_id) + " absent from the annotations");
        }
        out[i] = std::move(d.detections);
    }
    return out;
}

struct EvalArgs {
    fs::path annotations;
    std::string level = "auto";
    std::optional<fs::path> detections;
    bool oracle = false;
    std::string format = "table";
    std::optional<fs::path> out;
};

int run_eval(const EvalArgs& a, const RunConfig& cfg)
{
    log_fingerprint(cfg);
    const AnnotationSet set = load_set(a.annotations, a.level);
    const auto dets = detections_for(set, a.detections, a.oracle);
    std::vector<EvalImage> images;
    for (const ImageRecord& rec : set.images) images.push_back({rec.id, rec.width, rec.height, set.ground_truth(rec.id)});

    // Tasks deeper than the annotation level stay undefined.
    EvalReport report;
    const HeadMask mask = mask_for(set.level);
    for (const Head h : {Head::Quadrant, Head::Enumeration, Head::Diagnosis}) {
        if (mask.active(h)) report.tasks[static_cast<std::size_t>(head_index(h))] = evaluate(dets, images, h);
    }
    const std::string text = a.format == "kv" ? format_report_kv(report) : format_report_table(report);
    if (a.out) write_file(*a.out, text);
    std::printf("%s", text.c_str());
    return kOk;
}

struct RenderArgs {
    fs::path annotations;
    std::string images;
    std::string level = "auto";
    std::optional<fs::path> detections;
    bool oracle = false;
    bool ground_truth = false;
    double min_score = 0.5;
    fs::path out;
};

int run_render(const RenderArgs& a, const RunConfig& cfg)
{
    log_fingerprint(cfg);
    const AnnotationSet set = load_set(a.annotations, a.level);
    const fs::path dir = image_dir_for(a.annotations, a.images);
    const auto dets = detections_for(set, a.detections, a.oracle);
    const HeadMask mask = mask_for(set.level);
    fs::create_directories(a.out);
    for (std::size_t i = 0; i < set.images.size(); ++i) {
        const ImageRecord& rec = set.images[i];
        const fs::path src = dir / rec.file_name;
        require_exists(src);
        std::vector<Overlay> overlays = detection_overlays(dets[i], mask, a.min_score);
        if (a.ground_truth) {
            const auto gts = set.ground_truth(rec.id);
            const auto g = ground_truth_overlays(gts);
            overlays.insert(overlays.begin(), g.begin(), g.end());
        }
        write_ppm(a.out / fs::path(rec.file_name).replace_extension(".ppm"), render_overlay(read_pgm(src), overlays));
    }
    std::printf("rendered %zu images to %s\n", set.images.size(), a.out.string().c_str());
    return kOk;
}

// ---------------------------------------------------------------- validate

struct ValidateArgs {
    fs::path annotations;
    std::string level = "auto";
    std::string images;
};

int run_validate(const ValidateArgs& a)
{
    const AnnotationSet set = load_set(a.annotations, a.level);
    if (!a.images.empty()) {
        std::vector<AnnotationIssue> issues;
        for (std::size_t i = 0; i < set.images.size(); ++i) {
            const fs::path p = fs::path(a.images) / set.images[i].file_name;
            if (!fs::exists(p)) {
                issues.push_back({"images", i, "missing image file " + p.string()});
                continue;
            }
            const GrayImage img = read_pgm(p);
            if (img.width != set.images[i].width || img.height != set.images[i].height) {
                issues.push_back({"images", i, "image file size differs from the record"});
            }
        }
        if (!issues.empty()) throw AnnotationError(std::move(issues));
    }
    std::printf("ok: %zu images, %zu annotations, level %s\n", set.images.size(), set.annotations.size(),
                std::string(level_name(set.level)).c_str());
    return kOk;
}

int fail(const char* kind, const std::string& msg, int code)
{
    std::fprintf(stderr, "error[%s]: %s\n", kind, msg.c_str());
    return code;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Hierarchical diffusion-based tooth detection"};
    app.require_subcommand(1);
    // Lets --config appear after the subcommand name too.
    app.fallthrough();
    std::optional<fs::path> config_flag;
    app.add_option("--config", config_flag, std::string("Run config (JSON); defaults to $") + kConfigEnvVar);
    const std::vector<std::string> levels{"quadrant", "quadrant_enumeration", "quadrant_enumeration_diagnosis"};
    std::vector<std::string> levels_auto = levels;
    levels_auto.push_back("auto");

    DatagenArgs dg;
    auto* datagen = app.add_subcommand("datagen", "Write a synthetic dataset annotated at all three levels");
    datagen->add_option("--out", dg.out, "Output directory")->required();
    datagen->add_option("--count", dg.count, "Number of images");
    datagen->add_option("--seed", dg.seed, "Dataset seed");
    datagen->add_option("--size", dg.size, "Image side in pixels");
    datagen->add_option("--first-id", dg.first_id, "Id of the first image");

    TrainArgs tr;
    auto* train = app.add_subcommand("train", "Train one stage");
    train->add_option("--data", tr.data, "Dataset directory written by datagen")->required();
    train->add_option("--level", tr.level, "Hierarchy level to train")->required()->check(CLI::IsMember(levels));
    train->add_option("--out", tr.out, "Checkpoint to write")->required();
    train->add_option("--prev", tr.prev, "Checkpoint of the previous stage");
    train->add_flag("--manipulation", tr.manipulation, "Mix boxes inferred by --prev into the noisy proposals");
    train->add_flag("--transfer", tr.transfer, "Initialize from --prev");
    train->add_option("--iterations", tr.iterations, "Override the stage's iteration count");
    train->add_option("--seed", tr.seed, "Override the run seed");
    train->add_option("--metrics", tr.metrics, "Write per-iteration metrics as JSON lines");

    PipelineArgs pl;
    auto* pipeline = app.add_subcommand("pipeline", "Train stages a, b and c for one ablation arm");
    pipeline->add_option("--data", pl.data, "Training dataset directory")->required();
    pipeline->add_option("--eval", pl.eval, "Held-out dataset directory for the per-stage reports");
    pipeline->add_option("--arm", pl.arm, "Ablation arm")
        ->check(CLI::IsMember({"full", "no_transfer", "no_manipulation", "neither"}));
    pipeline->add_option("--out", pl.out, "Output directory (default <output_dir>/<arm>)");
    pipeline->add_option("--iterations", pl.iterations, "Override every stage's iteration count");
    pipeline->add_option("--seed", pl.seed, "Override the run seed");

    InferArgs in;
    auto* infer_cmd = app.add_subcommand("infer", "Detect boxes with a trained checkpoint");
    infer_cmd->add_option("--ckpt", in.ckpt, "Checkpoint")->required();
    infer_cmd->add_option("--annotations", in.annotations, "Annotation file listing the images")->required();
    infer_cmd->add_option("--images", in.images, "Image directory (default: images/ next to the annotations)");
    infer_cmd->add_option("--level", in.level, "Annotation level")->check(CLI::IsMember(levels_auto));
    infer_cmd->add_option("--out", in.out, "Detections JSON to write")->required();
    infer_cmd->add_option("--N", in.N, "Proposals per image");
    infer_cmd->add_option("--seed", in.seed, "Sampling seed");

    EvalArgs ev;
    auto* eval_cmd = app.add_subcommand("eval", "Report AR, AP, AP50, AP75, AP_m and AP_l per task");
    eval_cmd->add_option("--annotations", ev.annotations, "Ground truth")->required();
    eval_cmd->add_option("--level", ev.level, "Annotation level")->check(CLI::IsMember(levels_auto));
    auto* ev_dets = eval_cmd->add_option("--detections", ev.detections, "Detections JSON");
    eval_cmd->add_flag("--oracle", ev.oracle, "Score the ground truth against itself")->excludes(ev_dets);
    eval_cmd->add_option("--format", ev.format, "table or kv")->check(CLI::IsMember({"table", "kv"}));
    eval_cmd->add_option("--out", ev.out, "Also write the report here");

    RenderArgs rn;
    auto* render = app.add_subcommand("render", "Draw boxes and Q/N/D captions onto the images");
    render->add_option("--annotations", rn.annotations, "Annotation file listing the images")->required();
    render->add_option("--images", rn.images, "Image directory (default: images/ next to the annotations)");
    render->add_option("--level", rn.level, "Annotation level")->check(CLI::IsMember(levels_auto));
    auto* rn_dets = render->add_option("--detections", rn.detections, "Detections JSON");
    render->add_flag("--oracle", rn.oracle, "Draw the ground truth as detections")->excludes(rn_dets);
    render->add_flag("--gt", rn.ground_truth, "Also outline the ground truth");
    render->add_option("--min-score", rn.min_score, "Hide detections scoring below this");
    render->add_option("--out", rn.out, "Output directory for .ppm files")->required();

    ValidateArgs va;
    auto* validate_cmd = app.add_subcommand("validate", "Lint an annotation file");
    validate_cmd->add_option("--annotations", va.annotations, "Annotation file")->required();
    validate_cmd->add_option("--level", va.level, "Declared level")->check(CLI::IsMember(levels_auto));
    validate_cmd->add_option("--images", va.images, "Also check the image files in this directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }

    const auto start = std::chrono::steady_clock::now();
    int code = kOk;
    try {
        const RunConfig cfg = resolve_run_config(config_flag);
        if (datagen->parsed()) {
            log_fingerprint(cfg);
            code = run_datagen(dg, cfg);
        } else if (train->parsed()) {
            code = run_train(tr, cfg);
        } else if (pipeline->parsed()) {
            code = run_pipeline_cmd(pl, cfg);
        } else if (infer_cmd->parsed()) {
            code = run_infer(in, cfg);
        } else if (eval_cmd->parsed()) {
            code = run_eval(ev, cfg);
        } else if (render->parsed()) {
            code = run_render(rn, cfg);
        } else if (validate_cmd->parsed()) {
            code = run_validate(va);
        }
    } catch (const MissingFile& e) {
        return fail("missing_file", e.what(), kMissingFile);
    } catch (const ConfigError& e) {
        return fail("config", e.what(), kBadConfig);
    } catch (const AnnotationError& e) {
        for (const AnnotationIssue& i : e.issues()) {
            std::fprintf(stderr, "  %s[%zu]: %s\n", i.section.c_str(), i.index, i.message.c_str());
        }
        return fail("annotations", std::to_string(e.issues().size()) + " issue(s)", kBadAnnotations);
    } catch (const TrainingAborted& e) {
        return fail("nan_abort",
                    "loss term '" + e.term() + "' stopped being finite at iteration " + std::to_string(e.iteration()),
                    kNanAbort);
    } catch (const EvalError& e) {
        return fail("eval", e.what(), kEvalFailure);
    } catch (const UsageError& e) {
        return fail("usage", e.what(), kUsage);
    } catch (const std::exception& e) {
        return fail("failure", e.what(), kFailure);
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    log("done in " + std::to_string(secs) + " s");
    return code;
}
