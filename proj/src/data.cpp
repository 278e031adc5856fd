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

#include "hierdet/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

namespace hierdet {

using nlohmann::json;
using nlohmann::ordered_json;

PixelRect quadrant_region(int quadrant, int width, int height)
{
    const int mx = width / 2;
    const int my = height / 2;
    switch (quadrant) {
    case 0: return {0, 0, mx, my};
    case 1: return {mx, 0, width, my};
    case 2: return {mx, my, width, height};
    case 3: return {0, my, mx, height};
    default: throw std::invalid_argument("quadrant out of range");
    }
}

namespace {

bool upper_arch(int quadrant)
{
    return quadrant == 0 || quadrant == 1;
}

bool image_left(int quadrant)
{
    return quadrant == 0 || quadrant == 3;
}

void fill_rect(std::vector<double>& canvas, int width, const PixelRect& r, double value)
{
    for (int y = r.y0; y < r.y1; ++y) {
        for (int x = r.x0; x < r.x1; ++x) canvas[static_cast<std::size_t>(y) * width + x] = value;
    }
}

PixelRect intersect(const PixelRect& a, const PixelRect& b)
{
    PixelRect r{std::max(a.x0, b.x0), std::max(a.y0, b.y0), std::min(a.x1, b.x1), std::min(a.y1, b.y1)};
    if (r.x1 < r.x0) r.x1 = r.x0;
    if (r.y1 < r.y0) r.y1 = r.y0;
    return r;
}

void draw_tooth(std::vector<double>& canvas, int width, const ToothSlot& t)
{
    const PixelRect& r = t.rect;
    const bool upper = upper_arch(t.quadrant);
    const int h = r.height();
    const int w = r.width();
    const int crown_len = std::max(1, static_cast<int>(std::lround(0.3 * h)));
    const bool impacted = t.diagnosis == 3;
    const double dim = impacted ? 0.55 : 1.0;
    const int shear_max = impacted ? std::min(5, w / 3) : 0;

    for (int row = 0; row < h; ++row) {
        // Distance from the occlusal (crown) end of the tooth.
        const int depth = upper ? h - 1 - row : row;
        const int y = r.y0 + row;
        const int shift = impacted ? static_cast<int>(std::lround(shear_max * static_cast<double>(depth) / h)) : 0;
        int x0 = r.x0 + shift;
        int x1 = r.x1 - shear_max + shift;
        double value;
        if (depth < crown_len) {
            value = 215.0;
        } else {
            // Root tapers toward the apex.
            const double frac = static_cast<double>(depth - crown_len) / std::max(1, h - crown_len);
            const int inset = 1 + static_cast<int>(std::lround(frac * (x1 - x0) * 0.3));
            x0 += inset;
            x1 -= inset;
            value = 150.0;
        }
        for (int x = std::max(x0, r.x0); x < std::min(x1, r.x1); ++x) {
            canvas[static_cast<std::size_t>(y) * width + x] = value * dim;
        }
        if (t.enumeration >= 5 && depth >= crown_len + 4) {
            const int mid = (x0 + x1) / 2;
            for (int x = mid - 1; x <= mid; ++x) {
                if (x >= r.x0 && x < r.x1) canvas[static_cast<std::size_t>(y) * width + x] = 60.0;
            }
        }
    }

    if (!t.diagnosis || impacted) return;
    const int crown_y0 = upper ? r.y1 - crown_len : r.y0;
    const int crown_y1 = upper ? r.y1 : r.y0 + crown_len;
    switch (*t.diagnosis) {
    case 0: {
        // Small notch at the occlusal surface.
        const int nw = std::max(2, (2 * w) / 3);
        const int nh = std::min(crown_len, 16);
        const PixelRect notch = upper ? PixelRect{r.x0, r.y1 - nh, r.x0 + nw, r.y1}
                                      : PixelRect{r.x0, r.y0, r.x0 + nw, r.y0 + nh};
        fill_rect(canvas, width, intersect(notch, r), 70.0);
        break;
    }
    case 1: {
        const int cw = std::max(2, w - 4);
        const int cx0 = r.x0 + (w - cw) / 2;
        const int reach = static_cast<int>(0.55 * h);
        const PixelRect core = upper ? PixelRect{cx0, crown_y1 - reach, cx0 + cw, crown_y1 - 2}
                                     : PixelRect{cx0, crown_y0 + 2, cx0 + cw, crown_y0 + reach};
        fill_rect(canvas, width, intersect(core, r), 30.0);
        break;
    }
    case 2: {
        const double radius = 0.5 * w + 4.0;
        const double ax = 0.5 * (r.x0 + r.x1);
        const double ay = upper ? r.y0 + radius : r.y1 - radius;
        for (int y = r.y0; y < r.y1; ++y) {
            for (int x = r.x0; x < r.x1; ++x) {
                const double d = std::hypot(x + 0.5 - ax, y + 0.5 - ay);
                if (d <= radius) canvas[static_cast<std::size_t>(y) * width + x] = 10.0;
            }
        }
        break;
    }
    default: break;
    }
}

}  // namespace

SyntheticImage generate_layout(std::uint64_t seed, int size)
{
    if (size < 64) throw std::invalid_argument("generate_layout: image size must be at least 64");
    Rng rng(seed);
    const double s = size / 256.0;

    SyntheticImage out;
    Layout& layout = out.layout;
    layout.width = size;
    layout.height = size;

    for (int q = 0; q < 4; ++q) {
        for (int e = 0; e < 8; ++e) {
            ToothSlot& t = layout.teeth[static_cast<std::size_t>(q * 8 + e)];
            t.present = true;
            t.quadrant = q;
            t.enumeration = e;

            const double offset = ((e + 0.5) * 16.0 + (2.0 * rng.uniform() - 1.0)) * s;
            const double xc = image_left(q) ? size / 2.0 - offset : size / 2.0 + offset;
            const int w = static_cast<int>(std::lround((12.0 + 2.0 * rng.uniform()) * s));
            const int h = static_cast<int>(std::lround((88.0 + 12.0 * rng.uniform()) * s));
            const double curve = 10.0 * (e / 7.0) * (e / 7.0);
            const double jitter = 4.0 * rng.uniform() - 2.0;
            t.rect.x0 = static_cast<int>(std::lround(xc - w / 2.0));
            t.rect.x1 = t.rect.x0 + w;
            if (upper_arch(q)) {
                t.rect.y1 = static_cast<int>(std::lround((118.0 - curve + jitter) * s));
                t.rect.y0 = t.rect.y1 - h;
            } else {
                t.rect.y0 = static_cast<int>(std::lround((140.0 - curve + jitter) * s));
                t.rect.y1 = t.rect.y0 + h;
            }
            // Keep each tooth inside its quadrant whatever the jitter did.
            t.rect = intersect(t.rect, quadrant_region(q, size, size));
        }
    }

    std::vector<int> slots(32);
    std::iota(slots.begin(), slots.end(), 0);
    std::shuffle(slots.begin(), slots.end(), rng.engine());
    const int missing = rng.uniform_int(0, 4);
    for (int i = 0; i < missing; ++i) layout.teeth[static_cast<std::size_t>(slots[static_cast<std::size_t>(i)])].present = false;
    const int diagnosed = rng.uniform_int(1, 5);
    for (int i = 0; i < diagnosed; ++i) {
        layout.teeth[static_cast<std::size_t>(slots[static_cast<std::size_t>(missing + i)])].diagnosis =
            rng.uniform_int(0, 3);
    }

    std::vector<double> canvas(static_cast<std::size_t>(size) * size, 45.0);
    for (const ToothSlot& t : layout.teeth) {
        if (t.present) draw_tooth(canvas, size, t);
    }

    out.image = GrayImage(size, size);
    for (std::size_t i = 0; i < canvas.size(); ++i) {
        const double v = canvas[i] + 6.0 * rng.normal();
        out.image.pixels[i] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
    return out;
}

std::vector<std::string> check_layout(const Layout& layout)
{
    std::vector<std::string> issues;
    for (int q = 0; q < 4; ++q) {
        const PixelRect region = quadrant_region(q, layout.width, layout.height);
        for (int e = 0; e < 8; ++e) {
            const ToothSlot& t = layout.teeth[static_cast<std::size_t>(q * 8 + e)];
            const std::string tag = "tooth " + std::to_string(q + 1) + std::to_string(e + 1);
            if (t.quadrant != q || t.enumeration != e) issues.push_back(tag + " is stored in the wrong slot");
            if (!t.present) {
                if (t.diagnosis) issues.push_back(tag + " is missing but carries a diagnosis");
                continue;
            }
            if (t.rect.width() <= 0 || t.rect.height() <= 0) issues.push_back(tag + " has an empty box");
            if (t.rect.x0 < region.x0 || t.rect.y0 < region.y0 || t.rect.x1 > region.x1 || t.rect.y1 > region.y1) {
                issues.push_back(tag + " leaves its quadrant region");
            }
            if (t.diagnosis && (*t.diagnosis < 0 || *t.diagnosis > 3)) issues.push_back(tag + " has a bad diagnosis");
        }
    }
    return issues;
}

Box normalized_box(const std::array<double, 4>& bbox, int width, int height)
{
    return {(bbox[0] + 0.5 * bbox[2]) / width, (bbox[1] + 0.5 * bbox[3]) / height, bbox[2] / width, bbox[3] / height};
}

std::array<double, 4> pixel_bbox(const Box& box, int width, int height)
{
    return {(box.cx - 0.5 * box.w) * width, (box.cy - 0.5 * box.h) * height, box.w * width, box.h * height};
}

const ImageRecord* AnnotationSet::find_image(std::int64_t id) const
{
    for (const ImageRecord& img : images) {
        if (img.id == id) return &img;
    }
    return nullptr;
}

std::vector<GroundTruth> AnnotationSet::ground_truth(std::int64_t image_id) const
{
    const ImageRecord* img = find_image(image_id);
    if (!img) throw std::invalid_argument("unknown image id " + std::to_string(image_id));
    std::vector<GroundTruth> out;
    for (const Annotation& a : annotations) {
        if (a.image_id == image_id) out.push_back({normalized_box(a.bbox, img->width, img->height), a.label});
    }
    return out;
}

AnnotationSet AnnotationSet::subset(const std::vector<std::int64_t>& ids) const
{
    AnnotationSet out;
    out.level = level;
    const std::set<std::int64_t> keep(ids.begin(), ids.end());
    for (const std::int64_t id : ids) {
        const ImageRecord* img = find_image(id);
        if (!img) throw std::invalid_argument("unknown image id " + std::to_string(id));
        out.images.push_back(*img);
    }
    for (const Annotation& a : annotations) {
        if (keep.count(a.image_id)) out.annotations.push_back(a);
    }
    return out;
}

std::vector<Annotation> project_level(const Layout& layout, HierarchyLevel level, std::int64_t image_id,
                                      std::int64_t first_id)
{
    std::vector<Annotation> out;
    std::int64_t next_id = first_id;
    const auto emit = [&](const PixelRect& r, LabelTriple label) {
        Annotation a;
        a.id = next_id++;
        a.image_id = image_id;
        a.bbox = {static_cast<double>(r.x0), static_cast<double>(r.y0), static_cast<double>(r.width()),
                  static_cast<double>(r.height())};
        a.label = label;
        out.push_back(a);
    };

    for (int q = 0; q < 4; ++q) {
        if (level == HierarchyLevel::QuadrantOnly) {
            std::optional<PixelRect> env;
            for (int e = 0; e < 8; ++e) {
                const ToothSlot& t = layout.teeth[static_cast<std::size_t>(q * 8 + e)];
                if (!t.present) continue;
                if (!env) {
                    env = t.rect;
                } else {
                    env->x0 = std::min(env->x0, t.rect.x0);
                    env->y0 = std::min(env->y0, t.rect.y0);
                    env->x1 = std::max(env->x1, t.rect.x1);
                    env->y1 = std::max(env->y1, t.rect.y1);
                }
            }
            if (env) emit(*env, LabelTriple{q, std::nullopt, std::nullopt});
            continue;
        }
        for (int e = 0; e < 8; ++e) {
            const ToothSlot& t = layout.teeth[static_cast<std::size_t>(q * 8 + e)];
            if (!t.present) continue;
            if (level == HierarchyLevel::QuadrantEnum) {
                emit(t.rect, LabelTriple{q, e, std::nullopt});
            } else if (t.diagnosis) {
                emit(t.rect, LabelTriple{q, e, *t.diagnosis});
            }
        }
    }
    return out;
}

namespace {

std::string describe(const std::vector<AnnotationIssue>& issues)
{
    std::ostringstream out;
    out << issues.size() << " annotation problem(s)";
    for (std::size_t i = 0; i < issues.size() && i < 5; ++i) {
        out << "; " << issues[i].section << "[" << issues[i].index << "]: " << issues[i].message;
    }
    return out.str();
}

constexpr const char* kCategoryKey[3] = {"category_id_1", "category_id_2", "category_id_3"};

}  // namespace

AnnotationError::AnnotationError(std::vector<AnnotationIssue> issues)
    : std::runtime_error(describe(issues)), issues_(std::move(issues))
{
}

std::vector<AnnotationIssue> validate_annotations(const AnnotationSet& set)
{
    std::vector<AnnotationIssue> issues;
    std::set<std::int64_t> ids;
    for (std::size_t i = 0; i < set.images.size(); ++i) {
        const ImageRecord& img = set.images[i];
        if (!ids.insert(img.id).second) issues.push_back({"images", i, "duplicate image id " + std::to_string(img.id)});
        if (img.width <= 0 || img.height <= 0) issues.push_back({"images", i, "non-positive image size"});
    }
    const HeadMask mask = mask_for(set.level);
    for (std::size_t i = 0; i < set.annotations.size(); ++i) {
        const Annotation& a = set.annotations[i];
        const ImageRecord* img = set.find_image(a.image_id);
        if (!img) {
            issues.push_back({"annotations", i, "unknown image_id " + std::to_string(a.image_id)});
        } else {
            const auto& b = a.bbox;
            if (!(b[2] > 0.0 && b[3] > 0.0)) {
                issues.push_back({"annotations", i, "bbox has non-positive size"});
            } else if (b[0] < 0.0 || b[1] < 0.0 || b[0] + b[2] > img->width || b[1] + b[3] > img->height) {
                issues.push_back({"annotations", i, "bbox outside image bounds"});
            }
        }
        try {
            validate_label(a.label, mask);
        } catch (const LabelError& e) {
            issues.push_back({"annotations", i, std::string("level inconsistency: ") + e.what()});
        }
    }
    return issues;
}

AnnotationSet parse_annotations(const std::string& text, HierarchyLevel level)
{
    AnnotationSet set;
    set.level = level;
    std::vector<AnnotationIssue> issues;

    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw AnnotationError({{"file", 0, std::string("malformed JSON: ") + e.what()}});
    }
    if (!doc.is_object() || !doc.contains("images") || !doc.contains("annotations") || !doc["images"].is_array() ||
        !doc["annotations"].is_array()) {
        throw AnnotationError({{"file", 0, "expected an object with 'images' and 'annotations' arrays"}});
    }

    const auto& images = doc["images"];
    for (std::size_t i = 0; i < images.size(); ++i) {
        try {
            const auto& rec = images[i];
            ImageRecord img;
            img.id = rec.at("id").get<std::int64_t>();
            img.width = rec.at("width").get<int>();
            img.height = rec.at("height").get<int>();
            img.file_name = rec.at("file_name").get<std::string>();
            set.images.push_back(std::move(img));
        } catch (const json::exception& e) {
            issues.push_back({"images", i, std::string("schema: ") + e.what()});
        }
    }

    const HeadMask mask = mask_for(level);
    const auto& anns = doc["annotations"];
    std::vector<std::size_t> source_index;
    for (std::size_t i = 0; i < anns.size(); ++i) {
        try {
            const auto& rec = anns[i];
            Annotation a;
            a.id = rec.at("id").get<std::int64_t>();
            a.image_id = rec.at("image_id").get<std::int64_t>();
            const auto& bbox = rec.at("bbox");
            if (!bbox.is_array() || bbox.size() != 4) throw std::runtime_error("bbox must hold 4 numbers");
            for (std::size_t k = 0; k < 4; ++k) a.bbox[k] = bbox[k].get<double>();
            std::optional<int>* fields[3] = {&a.label.quadrant, &a.label.enumeration, &a.label.diagnosis};
            bool level_issue = false;
            for (const Head h : kAllHeads) {
                const char* key = kCategoryKey[head_index(h)];
                const bool has = rec.contains(key) && !rec[key].is_null();
                if (has) *fields[head_index(h)] = rec[key].get<int>();
                if (has != mask.active(h)) {
                    issues.push_back({"annotations", i,
                                      std::string("level inconsistency: ") + key +
                                          (has ? " present but the declared level is " : " missing at declared level ") +
                                          std::string(level_name(level))});
                    level_issue = true;
                }
            }
            if (level_issue) continue;
            set.annotations.push_back(a);
            source_index.push_back(i);
        } catch (const std::exception& e) {
            issues.push_back({"annotations", i, std::string("schema: ") + e.what()});
        }
    }

    for (AnnotationIssue issue : validate_annotations(set)) {
        if (issue.section == "annotations") issue.index = source_index[issue.index];
        issues.push_back(std::move(issue));
    }
    if (!issues.empty()) throw AnnotationError(std::move(issues));
    return set;
}

AnnotationSet load_annotations(const std::filesystem::path& path, HierarchyLevel level)
{
    if (!std::filesystem::exists(path)) {
        throw AnnotationError({{"file", 0, "no such file: " + path.string()}});
    }
    return parse_annotations(read_file(path), level);
}

std::string write_annotations(const AnnotationSet& set)
{
    ordered_json doc;
    doc["images"] = ordered_json::array();
    for (const ImageRecord& img : set.images) {
        ordered_json rec;
        rec["id"] = img.id;
        rec["width"] = img.width;
        rec["height"] = img.height;
        rec["file_name"] = img.file_name;
        doc["images"].push_back(rec);
    }
    doc["annotations"] = ordered_json::array();
    for (const Annotation& a : set.annotations) {
        ordered_json rec;
        rec["id"] = a.id;
        rec["image_id"] = a.image_id;
        rec["bbox"] = {a.bbox[0], a.bbox[1], a.bbox[2], a.bbox[3]};
        for (const Head h : kAllHeads) {
            if (const auto v = a.label.get(h)) rec[kCategoryKey[head_index(h)]] = *v;
        }
        doc["annotations"].push_back(rec);
    }
    ordered_json cats = ordered_json::array();
    for (int q = 0; q < 4; ++q) cats.push_back({{"id", q}, {"name", std::to_string(q + 1)}});
    doc["categories_1"] = cats;
    if (set.level != HierarchyLevel::QuadrantOnly) {
        ordered_json teeth = ordered_json::array();
        for (int e = 0; e < 8; ++e) teeth.push_back({{"id", e}, {"name", std::to_string(e + 1)}});
        doc["categories_2"] = teeth;
    }
    if (set.level == HierarchyLevel::Full) {
        ordered_json diag = ordered_json::array();
        for (int d = 0; d < 4; ++d) diag.push_back({{"id", d}, {"name", std::string(diagnosis_name(d))}});
        doc["categories_3"] = diag;
    }
    return doc.dump(1) + "\n";
}

void save_annotations(const std::filesystem::path& path, const AnnotationSet& set)
{
    write_file(path, write_annotations(set));
}

Split split_manifest(const AnnotationSet& set, const std::array<double, 3>& fractions, std::uint64_t seed)
{
    double total = 0.0;
    for (const double f : fractions) {
        if (!(f >= 0.0)) throw std::invalid_argument("split fractions must be non-negative");
        total += f;
    }
    if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("split fractions must sum to 1");
    if (fractions[2] > 0.0 && set.level != HierarchyLevel::Full) {
        throw std::invalid_argument("a test split requires fully labeled data; declared level is " +
                                    std::string(level_name(set.level)));
    }

    std::vector<std::int64_t> ids;
    for (const ImageRecord& img : set.images) ids.push_back(img.id);
    std::sort(ids.begin(), ids.end());
    Rng rng(seed);
    std::shuffle(ids.begin(), ids.end(), rng.engine());

    const double n = static_cast<double>(ids.size());
    std::array<std::size_t, 3> sizes{};
    std::array<double, 3> remainder{};
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < 3; ++i) {
        const double raw = fractions[i] * n;
        sizes[i] = static_cast<std::size_t>(std::floor(raw));
        remainder[i] = raw - std::floor(raw);
        assigned += sizes[i];
    }
    std::array<std::size_t, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
    for (std::size_t k = 0; assigned < ids.size(); ++k, ++assigned) {
        const std::size_t idx = order[k % 3];
        if (fractions[idx] == 0.0) {
            --assigned;
            continue;
        }
        ++sizes[idx];
    }

    Split out;
    auto it = ids.begin();
    out.train.assign(it, it + static_cast<std::ptrdiff_t>(sizes[0]));
    it += static_cast<std::ptrdiff_t>(sizes[0]);
    out.val.assign(it, it + static_cast<std::ptrdiff_t>(sizes[1]));
    it += static_cast<std::ptrdiff_t>(sizes[1]);
    out.test.assign(it, ids.end());
    return out;
}

std::string write_manifest(const std::vector<std::int64_t>& ids)
{
    std::string out;
    for (const std::int64_t id : ids) out += std::to_string(id) + "\n";
    return out;
}

std::vector<std::int64_t> parse_manifest(const std::string& text)
{
    std::vector<std::int64_t> ids;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::size_t used = 0;
        const long long v = std::stoll(line, &used);
        if (used != line.size()) throw std::runtime_error("bad manifest line '" + line + "'");
        ids.push_back(v);
    }
    return ids;
}

Augmented random_crop_resize(const GrayImage& image, const std::vector<GroundTruth>& gts, double min_area_fraction,
                             Rng& rng)
{
    const double frac = min_area_fraction + (1.0 - min_area_fraction) * rng.uniform();
    const double side = std::sqrt(frac);
    const double cw = image.width * side;
    const double ch = image.height * side;
    const double ox = (image.width - cw) * rng.uniform();
    const double oy = (image.height - ch) * rng.uniform();

    Augmented out;
    out.image = GrayImage(image.width, image.height);
    for (int y = 0; y < image.height; ++y) {
        const double sy = std::clamp(oy + (y + 0.5) * ch / image.height - 0.5, 0.0, image.height - 1.0);
        const int y0 = static_cast<int>(sy);
        const int y1 = std::min(y0 + 1, image.height - 1);
        const double fy = sy - y0;
        for (int x = 0; x < image.width; ++x) {
            const double sx = std::clamp(ox + (x + 0.5) * cw / image.width - 0.5, 0.0, image.width - 1.0);
            const int x0 = static_cast<int>(sx);
            const int x1 = std::min(x0 + 1, image.width - 1);
            const double fx = sx - x0;
            const double v = (1 - fy) * ((1 - fx) * image.at(x0, y0) + fx * image.at(x1, y0)) +
                             fy * ((1 - fx) * image.at(x0, y1) + fx * image.at(x1, y1));
            out.image.at(x, y) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
        }
    }

    // Normalized crop window.
    const double wx0 = ox / image.width, wy0 = oy / image.height;
    for (const GroundTruth& g : gts) {
        const BoxXyxy b = to_xyxy(g.box);
        BoxXyxy m{(b.x1 - wx0) / side, (b.y1 - wy0) / side, (b.x2 - wx0) / side, (b.y2 - wy0) / side};
        const double full = (m.x2 - m.x1) * (m.y2 - m.y1);
        m = {std::clamp(m.x1, 0.0, 1.0), std::clamp(m.y1, 0.0, 1.0), std::clamp(m.x2, 0.0, 1.0),
             std::clamp(m.y2, 0.0, 1.0)};
        const double kept = std::max(0.0, m.x2 - m.x1) * std::max(0.0, m.y2 - m.y1);
        if (full <= 0.0 || kept < 0.5 * full) continue;
        out.gts.push_back({from_xyxy(m), g.label});
    }
    return out;
}

}  // namespace hierdet
