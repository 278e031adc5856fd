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

#include "hierdet/labels.hpp"

namespace hierdet {

namespace {

constexpr std::array<std::string_view, 4> kDiagnosisNames{"caries", "deep caries", "periapical lesion",
                                                          "impacted"};

}  // namespace

std::string_view head_name(Head h)
{
    switch (h) {
    case Head::Quadrant: return "quadrant";
    case Head::Enumeration: return "enumeration";
    case Head::Diagnosis: return "diagnosis";
    }
    return "?";
}

std::string_view level_name(HierarchyLevel level)
{
    switch (level) {
    case HierarchyLevel::QuadrantOnly: return "quadrant";
    case HierarchyLevel::QuadrantEnum: return "quadrant_enumeration";
    case HierarchyLevel::Full: return "quadrant_enumeration_diagnosis";
    }
    return "?";
}

HierarchyLevel parse_level(std::string_view name)
{
    if (name == "quadrant" || name == "a") return HierarchyLevel::QuadrantOnly;
    if (name == "quadrant_enumeration" || name == "b") return HierarchyLevel::QuadrantEnum;
    if (name == "quadrant_enumeration_diagnosis" || name == "full" || name == "c") return HierarchyLevel::Full;
    throw LabelError("unknown hierarchy level '" + std::string(name) + "'");
}

HeadMask HeadMask::for_level(HierarchyLevel level)
{
    return HeadMask(static_cast<int>(level) + 1);
}

HeadMask HeadMask::from_bits(bool quadrant, bool enumeration, bool diagnosis)
{
    if (quadrant && enumeration && diagnosis) return HeadMask(3);
    if (quadrant && enumeration && !diagnosis) return HeadMask(2);
    if (quadrant && !enumeration && !diagnosis) return HeadMask(1);
    throw LabelError("head mask must be nested: (1,0,0), (1,1,0) or (1,1,1)");
}

HeadMask mask_for(HierarchyLevel level)
{
    return HeadMask::for_level(level);
}

std::optional<int> LabelTriple::get(Head h) const
{
    switch (h) {
    case Head::Quadrant: return quadrant;
    case Head::Enumeration: return enumeration;
    case Head::Diagnosis: return diagnosis;
    }
    return std::nullopt;
}

void validate_label(const LabelTriple& label, HeadMask mask)
{
    for (const Head h : kAllHeads) {
        const auto value = label.get(h);
        if (value.has_value() != mask.active(h)) {
            throw LabelError(std::string(head_name(h)) +
                             (value ? " label present but head is not supervised at this level"
                                    : " label missing but required at this level"));
        }
        if (value && (*value < 0 || *value >= class_count(h))) {
            throw LabelError(std::string(head_name(h)) + " label " + std::to_string(*value) + " out of range");
        }
    }
}

std::string_view diagnosis_name(int index)
{
    if (index < 0 || index >= static_cast<int>(kDiagnosisNames.size())) {
        throw LabelError("diagnosis index " + std::to_string(index) + " out of range");
    }
    return kDiagnosisNames[static_cast<std::size_t>(index)];
}

std::optional<int> diagnosis_index(std::string_view name)
{
    for (std::size_t i = 0; i < kDiagnosisNames.size(); ++i) {
        if (kDiagnosisNames[i] == name) return static_cast<int>(i);
    }
    return std::nullopt;
}

std::string fdi_string(const LabelTriple& label)
{
    if (!label.quadrant) {
        if (label.enumeration || label.diagnosis) {
            throw LabelError("label has enumeration or diagnosis without a quadrant");
        }
        throw LabelError("label has no quadrant");
    }
    if (label.diagnosis && !label.enumeration) {
        throw LabelError("label has a diagnosis without an enumeration");
    }
    const int q = *label.quadrant;
    if (q < 0 || q >= 4) throw LabelError("quadrant out of range");

    std::string out;
    if (label.enumeration) {
        const int e = *label.enumeration;
        if (e < 0 || e >= 8) throw LabelError("enumeration out of range");
        out = std::to_string(q + 1) + std::to_string(e + 1);
    } else {
        out = "Q" + std::to_string(q + 1);
    }
    if (label.diagnosis) {
        out += " ";
        out += diagnosis_name(*label.diagnosis);
    }
    return out;
}

}  // namespace hierdet
