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

#include "hierdet/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <set>

#include <json.hpp>

#include "hierdet/image.hpp"

namespace hierdet {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

template <typename V>
void visit(V& v, DataConfig& d)
{
    v("dir", d.dir);
    v("train_count", d.train_count);
    v("eval_count", d.eval_count);
    v("image_size", d.image_size);
}

template <typename V>
void visit(V& v, ModelConfig& m)
{
    v("grid", m.grid);
    v("pool", m.pool);
    v("hidden", m.hidden);
    v("time_dim", m.time_dim);
    v("scale", m.scale);
    v("max_log_ratio", m.max_log_ratio);
}

template <typename V>
void visit(V& v, DiffusionConfig& d)
{
    v("timesteps", d.timesteps);
    v("cosine_s", d.cosine_s);
    v("sample_steps", d.sample_steps);
    v("eta", d.eta);
    v("renewal_threshold", d.renewal_threshold);
    v("nms_iou", d.nms_iou);
}

template <typename V>
void visit(V& v, LossWeights& w)
{
    v("cls", w.cls);
    v("l1", w.l1);
    v("giou", w.giou);
    v("focal_gamma", w.focal_gamma);
}

template <typename V>
void visit(V& v, StageConfig& s)
{
    v("iterations", s.iterations);
    v("batch_size", s.batch_size);
    v("lr", s.lr);
    v("N", s.N);
    v("beta1", s.beta1);
    v("beta2", s.beta2);
    v("weight_decay", s.weight_decay);
    v("clip_norm", s.clip_norm);
    v("warmup", s.warmup);
    v("augment", s.augment);
    v("manip_threshold", s.manip_threshold);
    v("manip_noise_t", s.manip_noise_t);
    v("log_every", s.log_every);
    v("checkpoint_every", s.checkpoint_every);
    v("eval_every", s.eval_every);
    v("checkpoint_dir", s.checkpoint_dir);
}

class Reader {
public:
    Reader(const json& obj, std::string path) : obj_(obj), path_(std::move(path))
    {
        if (!obj_.is_object()) throw ConfigError(path_ + ": expected an object");
    }

    void operator()(const char* key, int& out)
    {
        if (const json* j = take(key)) {
            if (!j->is_number_integer()) fail(key, "an integer");
            const auto v = j->get<std::int64_t>();
            if (v < INT32_MIN || v > INT32_MAX) fail(key, "a 32-bit integer");
            out = static_cast<int>(v);
        }
    }
    void operator()(const char* key, double& out)
    {
        if (const json* j = take(key)) {
            if (!j->is_number()) fail(key, "a number");
            out = j->get<double>();
        }
    }
    void operator()(const char* key, bool& out)
    {
        if (const json* j = take(key)) {
            if (!j->is_boolean()) fail(key, "true or false");
            out = j->get<bool>();
        }
    }
    void operator()(const char* key, std::uint64_t& out)
    {
        if (const json* j = take(key)) {
            if (!j->is_number_unsigned()) fail(key, "a non-negative integer");
            out = j->get<std::uint64_t>();
        }
    }
    void operator()(const char* key, std::filesystem::path& out)
    {
        if (const json* j = take(key)) {
            if (!j->is_string()) fail(key, "a string");
            out = j->get<std::string>();
        }
    }

    const json* section(const char* key)
    {
        const json* j = take(key);
        if (j && !j->is_object()) fail(key, "an object");
        return j;
    }

    std::string child(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

    void finish() const
    {
        for (const auto& [key, value] : obj_.items()) {
            if (!seen_.count(key)) throw ConfigError("unknown config key '" + child(key.c_str()) + "'");
        }
    }

private:
    const json* take(const char* key)
    {
        seen_.insert(key);
        const auto it = obj_.find(key);
        return it == obj_.end() ? nullptr : &*it;
    }
    [[noreturn]] void fail(const char* key, const char* expected) const
    {
        throw ConfigError("config key '" + child(key) + "' must be " + expected);
    }

    const json& obj_;
    std::string path_;
    std::set<std::string> seen_;
};

class Writer {
public:
    template <typename T>
    void operator()(const char* key, T& v)
    {
        if constexpr (std::is_same_v<T, std::filesystem::path>) {
            out[key] = v.generic_string();
        } else {
            out[key] = v;
        }
    }
    ordered_json out = ordered_json::object();
};

template <typename T>
void read_section(Reader& parent, const char* key, T& target)
{
    if (const json* j = parent.section(key)) {
        Reader r(*j, parent.child(key));
        visit(r, target);
        r.finish();
    }
}

template <typename T>
ordered_json write_section(T& target)
{
    Writer w;
    visit(w, target);
    return w.out;
}

void check(bool ok, const std::string& msg)
{
    if (!ok) throw ConfigError("config: " + msg);
}

void validate_run(const RunConfig& cfg)
{
    check(cfg.data.train_count >= 1, "data.train_count must be at least 1");
    check(cfg.data.eval_count >= 0, "data.eval_count must be non-negative");
    check(cfg.data.image_size >= 64, "data.image_size must be at least 64");
    const ModelConfig& m = cfg.model;
    check(m.grid >= 1 && m.pool >= 1 && m.hidden >= 1 && m.time_dim >= 2 && m.time_dim % 2 == 0,
          "model sizes must be positive and time_dim even");
    check(m.grid <= cfg.data.image_size, "model.grid must not exceed data.image_size");
    check(m.scale > 0.0 && m.max_log_ratio > 0.0, "model.scale and model.max_log_ratio must be positive");
    const DiffusionConfig& d = cfg.diffusion;
    check(d.timesteps >= 1, "diffusion.timesteps must be at least 1");
    check(d.cosine_s > 0.0, "diffusion.cosine_s must be positive");
    check(d.sample_steps >= 1 && d.sample_steps <= 8, "diffusion.sample_steps must lie in 1..8");
    check(d.eta >= 0.0 && d.eta <= 1.0, "diffusion.eta must lie in [0, 1]");
    check(d.nms_iou > 0.0 && d.nms_iou <= 1.0, "diffusion.nms_iou must lie in (0, 1]");
    check(cfg.loss.cls >= 0.0 && cfg.loss.l1 >= 0.0 && cfg.loss.giou >= 0.0 && cfg.loss.focal_gamma >= 0.0,
          "loss weights must be non-negative");
    try {
        validate(cfg.train);
        for (const StageConfig& s : cfg.stages) validate(s);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

}  // namespace

RunConfig::RunConfig()
{
    for (int i = 0; i < 3; ++i) {
        stages[static_cast<std::size_t>(i)] = train;
        stages[static_cast<std::size_t>(i)].level = static_cast<HierarchyLevel>(i);
    }
}

TrainContext RunConfig::context() const
{
    return {model, diffusion, loss, config_fingerprint(*this)};
}

PipelinePlan RunConfig::plan(Arm arm) const
{
    StageConfig base = train;
    base.seed = seed;
    PipelinePlan p = make_plan(arm, base);
    for (std::size_t i = 0; i < 3; ++i) {
        StageConfig s = stages[i];
        s.level = p.stages[i].level;
        s.seed = p.stages[i].seed;
        s.use_manipulation = p.stages[i].use_manipulation;
        s.use_transfer = p.stages[i].use_transfer;
        p.stages[i] = s;
    }
    return p;
}

RunConfig parse_config(const std::string& text)
{
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }

    RunConfig cfg;
    Reader root(doc, "");
    root("seed", cfg.seed);
    root("output_dir", cfg.output_dir);
    read_section(root, "data", cfg.data);
    read_section(root, "model", cfg.model);
    read_section(root, "diffusion", cfg.diffusion);
    read_section(root, "loss", cfg.loss);
    read_section(root, "train", cfg.train);

    for (int i = 0; i < 3; ++i) {
        StageConfig& s = cfg.stages[static_cast<std::size_t>(i)];
        s = cfg.train;
        s.level = static_cast<HierarchyLevel>(i);
    }
    if (const json* stages = root.section("stages")) {
        Reader r(*stages, "stages");
        for (int i = 0; i < 3; ++i) {
            const auto level = std::string(level_name(static_cast<HierarchyLevel>(i)));
            read_section(r, level.c_str(), cfg.stages[static_cast<std::size_t>(i)]);
        }
        r.finish();
    }
    root.finish();
    validate_run(cfg);
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path)
{
    if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
    return parse_config(read_file(path));
}

std::string config_to_json(const RunConfig& cfg)
{
    RunConfig c = cfg;
    ordered_json doc;
    doc["seed"] = c.seed;
    doc["output_dir"] = c.output_dir.generic_string();
    doc["data"] = write_section(c.data);
    doc["model"] = write_section(c.model);
    doc["diffusion"] = write_section(c.diffusion);
    doc["loss"] = write_section(c.loss);
    doc["train"] = write_section(c.train);
    ordered_json stages = ordered_json::object();
    for (int i = 0; i < 3; ++i) {
        stages[std::string(level_name(static_cast<HierarchyLevel>(i)))] =
            write_section(c.stages[static_cast<std::size_t>(i)]);
    }
    doc["stages"] = stages;
    return doc.dump(2) + "\n";
}

std::uint64_t config_fingerprint(const RunConfig& cfg)
{
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const unsigned char c : config_to_json(cfg)) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string fingerprint_hex(std::uint64_t fp)
{
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fp));
    return buf;
}

std::optional<std::filesystem::path> resolve_config_path(const std::optional<std::filesystem::path>& explicit_path)
{
    if (explicit_path) return explicit_path;
    if (const char* env = std::getenv(kConfigEnvVar); env && *env) return std::filesystem::path(env);
    return std::nullopt;
}

}  // namespace hierdet
