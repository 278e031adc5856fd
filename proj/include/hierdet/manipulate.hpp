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

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "hierdet/diffusion.hpp"
#include "hierdet/geometry.hpp"
#include "hierdet/labels.hpp"
#include "hierdet/rng.hpp"

namespace hierdet {

/// A box produced by a finished shallower stage.
struct InferredBox {
    Box box;
    double score = 0.0;
    HierarchyLevel stage = HierarchyLevel::QuadrantOnly;

    friend bool operator==(const InferredBox&, const InferredBox&) = default;
};

/// Per-image boxes inferred by a prior stage. Lookups are counted so callers
/// can verify whether a training run consumed the cache at all.
///
/// On disk: one JSON object per line, fields in this order:
///   {"image_id": int, "stage": level name, "box": [cx, cy, w, h], "score": real}
/// Boxes are normalized center-size; records of one image are contiguous and
/// keep their in-memory order.
class InferredBoxCache {
public:
    void add(std::int64_t image_id, InferredBox box);
    /// Registers an image with no boxes so it round-trips as present-but-empty.
    void touch(std::int64_t image_id);

    /// Counted read. Unknown images yield an empty span.
    std::span<const InferredBox> lookup(std::int64_t image_id) const;

    std::size_t reads() const { return reads_; }
    /// Counted reads over every cache in the process.
    static std::size_t total_reads();
    std::size_t image_count() const { return entries_.size(); }
    std::size_t box_count() const;
    const std::map<std::int64_t, std::vector<InferredBox>>& entries() const { return entries_; }

    std::string to_jsonl() const;
    static InferredBoxCache from_jsonl(const std::string& text);
    void save(const std::filesystem::path& path) const;
    static InferredBoxCache load(const std::filesystem::path& path);

private:
    std::map<std::int64_t, std::vector<InferredBox>> entries_;
    mutable std::size_t reads_ = 0;
};

/// b_m = [b_n[:-k], b_i]: keeps the first N-k noisy rows and appends the k
/// inferred boxes scoring above `score_threshold`, signal-encoded and clean.
/// When more than N qualify, the N best by score are used (earlier entries win
/// ties). Inferred rows keep their input order.
BoxArray manipulate_boxes(const BoxArray& noisy, std::span<const InferredBox> inferred, double scale,
                          double score_threshold = 0.5);

/// Number of inferred rows manipulate_boxes appends: min(#score > threshold, rows).
std::size_t inferred_row_count(std::span<const InferredBox> inferred, std::size_t rows, double score_threshold = 0.5);

/// Proposals used at inference: pure N(0, 1) rows. Never takes a cache.
BoxArray inference_proposals(int rows, Rng& rng);

}  // namespace hierdet
