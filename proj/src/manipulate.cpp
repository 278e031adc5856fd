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

#include "hierdet/manipulate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace hierdet {

void InferredBoxCache::add(std::int64_t image_id, InferredBox box)
{
    entries_[image_id].push_back(box);
}

void InferredBoxCache::touch(std::int64_t image_id)
{
    entries_[image_id];
}

namespace {

std::atomic<std::size_t> g_total_reads{0};

}  // namespace

std::size_t InferredBoxCache::total_reads()
{
    return g_total_reads.load(std::memory_order_relaxed);
}

std::span<const InferredBox> InferredBoxCache::lookup(std::int64_t image_id) const
{
    ++reads_;
    g_total_reads.fetch_add(1, std::memory_order_relaxed);
    const auto it = entries_.find(image_id);
    if (it == entries_.end()) return {};
    return it->second;
}

std::size_t InferredBoxCache::box_count() const
{
    std::size_t n = 0;
    for (const auto& [id, boxes] : entries_) n += boxes.size();
    return n;
}

std::string InferredBoxCache::to_jsonl() const
{
    std::ostringstream out;
    for (const auto& [id, boxes] : entries_) {
        if (boxes.empty()) {
            nlohmann::ordered_json rec;
            rec["image_id"] = id;
            rec["stage"] = nullptr;
            out << rec.dump() << '\n';
            continue;
        }
        for (const InferredBox& b : boxes) {
            nlohmann::ordered_json rec;
            rec["image_id"] = id;
            rec["stage"] = level_name(b.stage);
            rec["box"] = {b.box.cx, b.box.cy, b.box.w, b.box.h};
            rec["score"] = b.score;
            out << rec.dump() << '\n';
        }
    }
    return out.str();
}

InferredBoxCache InferredBoxCache::from_jsonl(const std::string& text)
{
    InferredBoxCache cache;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const auto rec = nlohmann::json::parse(line);
            const std::int64_t id = rec.at("image_id").get<std::int64_t>();
            if (rec.at("stage").is_null()) {
                cache.touch(id);
                continue;
            }
            InferredBox b;
            b.stage = parse_level(rec.at("stage").get<std::string>());
            const auto& box = rec.at("box");
            if (!box.is_array() || box.size() != 4) throw std::runtime_error("box must have 4 numbers");
            b.box = {box[0].get<double>(), box[1].get<double>(), box[2].get<double>(), box[3].get<double>()};
            b.score = rec.at("score").get<double>();
            if (!is_valid(b.box) || !std::isfinite(b.score)) throw std::runtime_error("invalid box or score");
            cache.add(id, b);
        } catch (const std::exception& e) {
            throw std::runtime_error("cache line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return cache;
}

void InferredBoxCache::save(const std::filesystem::path& path) const
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << to_jsonl();
}

InferredBoxCache InferredBoxCache::load(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_jsonl(buf.str());
}

BoxArray manipulate_boxes(const BoxArray& noisy, std::span<const InferredBox> inferred, double scale,
                          double score_threshold)
{
    const std::size_t rows = noisy.size();

    std::vector<std::size_t> confident;
    for (std::size_t i = 0; i < inferred.size(); ++i) {
        if (inferred[i].score > score_threshold) confident.push_back(i);
    }
    if (confident.size() > rows) {
        std::stable_sort(confident.begin(), confident.end(), [&](std::size_t a, std::size_t b) {
            return inferred[a].score > inferred[b].score;
        });
        confident.resize(rows);
        std::sort(confident.begin(), confident.end());
    }

    const std::size_t k = confident.size();
    BoxArray out(noisy.begin(), noisy.begin() + static_cast<std::ptrdiff_t>(rows - k));
    for (const std::size_t i : confident) {
        out.push_back(signal_encode(inferred[i].box, scale));
    }
    return out;
}

std::size_t inferred_row_count(std::span<const InferredBox> inferred, std::size_t rows, double score_threshold)
{
    const auto n = std::count_if(inferred.begin(), inferred.end(),
                                 [&](const InferredBox& b) { return b.score > score_threshold; });
    return std::min(static_cast<std::size_t>(n), rows);
}

BoxArray inference_proposals(int rows, Rng& rng)
{
    if (rows < 1) throw std::invalid_argument("inference_proposals: proposal count must be >= 1");
    BoxArray out(static_cast<std::size_t>(rows));
    for (auto& r : out) {
        for (double& v : r) v = rng.normal();
    }
    return out;
}

}  // namespace hierdet
