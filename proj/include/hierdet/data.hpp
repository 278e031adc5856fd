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
#include <vector>

#include "hierdet/geometry.hpp"
#include "hierdet/image.hpp"
#include "hierdet/labels.hpp"
#include "hierdet/matching.hpp"
#include "hierdet/rng.hpp"

namespace hierdet {

/// Integer pixel rectangle [x0, x1) x [y0, y1).
struct PixelRect {
    int x0 = 0;
    int y0 = 0;
    int x1 = 0;
    int y1 = 0;

    int width() const { return x1 - x0; }
    int height() const { return y1 - y0; }
    friend bool operator==(const PixelRect&, const PixelRect&) = default;
};

struct ToothSlot {
    bool present = false;
    PixelRect rect;
    int quadrant = 0;
    int enumeration = 0;
    std::optional<int> diagnosis;
};

/// Synthetic dentition: slot index = quadrant * 8 + enumeration. Quadrants
/// follow FDI as seen on a panoramic film: 1 upper-left of the image, 2
/// upper-right, 3 lower-right, 4 lower-left; tooth 1 sits next to the midline.
struct Layout {
    int width = 256;
    int height = 256;
    std::array<ToothSlot, 32> teeth;
};

/// Pixel region reserved for a quadrant.
PixelRect quadrant_region(int quadrant, int width, int height);

struct SyntheticImage {
    GrayImage image;
    Layout layout;
};

/// Deterministic per seed. Teeth lie along two arch curves with size and
/// position jitter; 0-4 teeth are missing and 1-5 carry a diagnosis, each drawn
/// with its own motif (caries: dark notch in the crown; deep caries: dark core
/// reaching into the root; periapical lesion: dark halo at the root tip;
/// impacted: tilted and dimmer).
SyntheticImage generate_layout(std::uint64_t seed, int size = 256);

/// Empty when every layout invariant holds, otherwise one message per violation.
std::vector<std::string> check_layout(const Layout& layout);

struct ImageRecord {
    std::int64_t id = 0;
    int width = 0;
    int height = 0;
    std::string file_name;

    friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

struct Annotation {
    std::int64_t id = 0;
    std::int64_t image_id = 0;
    /// Pixel [x, y, w, h] as stored on disk.
    std::array<double, 4> bbox{};
    LabelTriple label;

    friend bool operator==(const Annotation&, const Annotation&) = default;
};

/// Normalized center-size box of a pixel [x, y, w, h] rectangle.
Box normalized_box(const std::array<double, 4>& bbox, int width, int height);
std::array<double, 4> pixel_bbox(const Box& box, int width, int height);

struct AnnotationSet {
    HierarchyLevel level = HierarchyLevel::Full;
    std::vector<ImageRecord> images;
    std::vector<Annotation> annotations;

    const ImageRecord* find_image(std::int64_t id) const;
    /// Normalized ground truth of one image, in annotation order.
    std::vector<GroundTruth> ground_truth(std::int64_t image_id) const;
    /// Subset restricted to the given image ids (order of `ids`).
    AnnotationSet subset(const std::vector<std::int64_t>& ids) const;

    friend bool operator==(const AnnotationSet&, const AnnotationSet&) = default;
};

/// Annotations of one layout at a hierarchy level:
///   QuadrantOnly - one box per non-empty quadrant, the envelope of its teeth;
///   QuadrantEnum - one box per present tooth;
///   Full         - one box per diagnosed tooth.
/// Ids are assigned consecutively from `first_id`.
std::vector<Annotation> project_level(const Layout& layout, HierarchyLevel level, std::int64_t image_id,
                                      std::int64_t first_id = 1);

struct AnnotationIssue {
    std::string section;  ///< "images", "annotations" or "file"
    std::size_t index = 0;
    std::string message;
};

class AnnotationError : public std::runtime_error {
public:
    explicit AnnotationError(std::vector<AnnotationIssue> issues);
    const std::vector<AnnotationIssue>& issues() const { return issues_; }

private:
    std::vector<AnnotationIssue> issues_;
};

/// Every invariant violation of an in-memory set; empty when valid.
std::vector<AnnotationIssue> validate_annotations(const AnnotationSet& set);

/// COCO-style container: "images" [{id, width, height, file_name}] and
/// "annotations" [{id, image_id, bbox [x,y,w,h], category_id_1, category_id_2,
/// category_id_3}] with zero-based category ids. Fields deeper than `level`
/// must be absent, shallower ones present. Unknown keys are ignored. Throws
/// AnnotationError listing every offending record.
AnnotationSet parse_annotations(const std::string& text, HierarchyLevel level);
AnnotationSet load_annotations(const std::filesystem::path& path, HierarchyLevel level);

std::string write_annotations(const AnnotationSet& set);
void save_annotations(const std::filesystem::path& path, const AnnotationSet& set);

struct Split {
    std::vector<std::int64_t> train;
    std::vector<std::int64_t> val;
    std::vector<std::int64_t> test;
};

/// Deterministic shuffled split by image id; sizes by largest remainder. A
/// non-empty test split is only allowed for fully labeled sets.
Split split_manifest(const AnnotationSet& set, const std::array<double, 3>& fractions, std::uint64_t seed);

std::string write_manifest(const std::vector<std::int64_t>& ids);
std::vector<std::int64_t> parse_manifest(const std::string& text);

/// Random crop keeping at least `min_area_fraction` of the image, resized back
/// to the original size (bilinear). Boxes are mapped and clipped; boxes keeping
/// less than half their area are dropped.
struct Augmented {
    GrayImage image;
    std::vector<GroundTruth> gts;
};
Augmented random_crop_resize(const GrayImage& image, const std::vector<GroundTruth>& gts, double min_area_fraction,
                             Rng& rng);

}  // namespace hierdet
