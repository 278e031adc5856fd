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
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace hierdet {

/// The three classification heads, shallowest first.
enum class Head { Quadrant = 0, Enumeration = 1, Diagnosis = 2 };

inline constexpr std::array<Head, 3> kAllHeads{Head::Quadrant, Head::Enumeration, Head::Diagnosis};

/// Real classes per head (the background logit is not counted).
inline constexpr std::array<int, 3> kClassCount{4, 8, 4};

constexpr int class_count(Head h) { return kClassCount[static_cast<int>(h)]; }
constexpr int head_index(Head h) { return static_cast<int>(h); }

std::string_view head_name(Head h);

/// Annotation regime of a dataset: which label fields every box carries.
enum class HierarchyLevel { QuadrantOnly = 0, QuadrantEnum = 1, Full = 2 };

std::string_view level_name(HierarchyLevel level);
HierarchyLevel parse_level(std::string_view name);

class LabelError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Which heads are supervised. Only the nested combinations (1,0,0), (1,1,0)
/// and (1,1,1) can be constructed.
class HeadMask {
public:
    static HeadMask for_level(HierarchyLevel level);
    /// Throws LabelError for non-nested combinations.
    static HeadMask from_bits(bool quadrant, bool enumeration, bool diagnosis);

    bool quadrant() const { return depth_ >= 1; }
    bool enumeration() const { return depth_ >= 2; }
    bool diagnosis() const { return depth_ >= 3; }
    bool active(Head h) const { return head_index(h) < depth_; }

    /// The most specific supervised head.
    Head deepest() const { return static_cast<Head>(depth_ - 1); }
    HierarchyLevel level() const { return static_cast<HierarchyLevel>(depth_ - 1); }

    friend bool operator==(const HeadMask&, const HeadMask&) = default;

private:
    explicit HeadMask(int depth) : depth_(depth) {}
    int depth_;
};

HeadMask mask_for(HierarchyLevel level);

/// Zero-based labels. Fields are present iff the matching head is supervised.
struct LabelTriple {
    std::optional<int> quadrant;
    std::optional<int> enumeration;
    std::optional<int> diagnosis;

    std::optional<int> get(Head h) const;

    friend bool operator==(const LabelTriple&, const LabelTriple&) = default;
};

/// Throws LabelError when presence does not match the mask or an index is out
/// of range.
void validate_label(const LabelTriple& label, HeadMask mask);

std::string_view diagnosis_name(int index);
std::optional<int> diagnosis_index(std::string_view name);

/// "Q1" for quadrant-only labels, the two-digit tooth number otherwise, with the
/// diagnosis name appended when present.
std::string fdi_string(const LabelTriple& label);

}  // namespace hierdet
