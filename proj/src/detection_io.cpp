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

#include "hierdet/detection_io.hpp"

#include <stdexcept>

#include <json.hpp>

#include "hierdet/data.hpp"

namespace hierdet {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

bool same(const Detection& a, const Detection& b)
{
    return a.box == b.box && a.probs_q == b.probs_q && a.probs_e == b.probs_e && a.probs_d == b.probs_d &&
           a.background == b.background && a.score == b.score;
}

template <std::size_t K>
void read_array(const json& obj, const char* key, std::array<double, K>& out)
{
    const auto it = obj.find(key);
    if (it == obj.end() || !it->is_array() || it->size() != K) {
        throw std::runtime_error(std::string("detection field '") + key + "' must hold " + std::to_string(K) +
                                 " numbers");
    }
    for (std::size_t i = 0; i < K; ++i) {
        if (!(*it)[i].is_number()) throw std::runtime_error(std::string("detection field '") + key + "' is not numeric");
        out[i] = (*it)[i].get<double>();
    }
}

}  // namespace

bool operator==(const ImageDetections& a, const ImageDetections& b)
{
    if (a.image_id != b.image_id || a.width != b.width || a.height != b.height) return false;
    if (a.detections.size() != b.detections.size()) return false;
    for (std::size_t i = 0; i < a.detections.size(); ++i) {
        if (!same(a.detections[i], b.detections[i])) return false;
    }
    return true;
}

std::string write_detections(std::span<const ImageDetections> images)
{
    ordered_json arr = ordered_json::array();
    for (const ImageDetections& img : images) {
        ordered_json dets = ordered_json::array();
        for (const Detection& d : img.detections) {
            ordered_json j;
            j["box"] = {d.box.cx, d.box.cy, d.box.w, d.box.h};
            j["bbox"] = pixel_bbox(d.box, img.width, img.height);
            j["score"] = d.score;
            j["probs_q"] = d.probs_q;
            j["probs_e"] = d.probs_e;
            j["probs_d"] = d.probs_d;
            j["background"] = d.background;
            dets.push_back(std::move(j));
        }
        ordered_json e;
        e["image_id"] = img.image_id;
        e["width"] = img.width;
        e["height"] = img.height;
        e["detections"] = std::move(dets);
        arr.push_back(std::move(e));
    }
    ordered_json doc;
    doc["images"] = std::move(arr);
    return doc.dump(1) + "\n";
}

std::vector<ImageDetections> parse_detections(const std::string& text)
{
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw std::runtime_error(std::string("detections file is not valid JSON: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("images") || !doc["images"].is_array()) {
        throw std::runtime_error("detections file needs an 'images' array");
    }
    std::vector<ImageDetections> out;
    for (const json& e : doc["images"]) {
        if (!e.is_object() || !e.contains("image_id") || !e["image_id"].is_number_integer() ||
            !e.contains("detections") || !e["detections"].is_array()) {
            throw std::runtime_error("each detections entry needs an integer 'image_id' and a 'detections' array");
        }
        ImageDetections img;
        img.image_id = e["image_id"].get<std::int64_t>();
        img.width = e.value("width", 0);
        img.height = e.value("height", 0);
        for (const json& j : e["detections"]) {
            if (!j.is_object()) throw std::runtime_error("detection must be an object");
            Detection d;
            std::array<double, 4> box{};
            read_array(j, "box", box);
            d.box = {box[0], box[1], box[2], box[3]};
            if (!j.contains("score") || !j["score"].is_number()) throw std::runtime_error("detection needs a 'score'");
            d.score = j["score"].get<double>();
            read_array(j, "probs_q", d.probs_q);
            read_array(j, "probs_e", d.probs_e);
            read_array(j, "probs_d", d.probs_d);
            read_array(j, "background", d.background);
            img.detections.push_back(d);
        }
        out.push_back(std::move(img));
    }
    return out;
}

std::vector<Detection> oracle_detections(std::span<const GroundTruth> gts)
{
    std::vector<Detection> out;
    for (const GroundTruth& g : gts) {
        Detection d;
        d.box = g.box;
        d.score = 1.0;
        d.probs_q.fill(1.0 / 4.0);
        d.probs_e.fill(1.0 / 8.0);
        d.probs_d.fill(1.0 / 4.0);
        if (g.label.quadrant) {
            d.probs_q.fill(0.0);
            d.probs_q[static_cast<std::size_t>(*g.label.quadrant)] = 1.0;
        }
        if (g.label.enumeration) {
            d.probs_e.fill(0.0);
            d.probs_e[static_cast<std::size_t>(*g.label.enumeration)] = 1.0;
        }
        if (g.label.diagnosis) {
            d.probs_d.fill(0.0);
            d.probs_d[static_cast<std::size_t>(*g.label.diagnosis)] = 1.0;
        }
        out.push_back(d);
    }
    return out;
}

}  // namespace hierdet
