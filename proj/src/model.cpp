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

#include "hierdet/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Dense>

#include "hierdet/rng.hpp"

namespace hierdet {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using ConstVectorMap = Eigen::Map<const Eigen::RowVectorXd>;

// Output columns: box deltas, then the three heads (K real logits + background).
constexpr int kBoxCols = 4;
constexpr std::array<int, 3> kHeadRows{5, 9, 5};
constexpr std::array<int, 3> kHeadOffset{4, 9, 18};
constexpr int kOutCols = 23;

constexpr std::string_view kTrunkNames[] = {"roi_mlp.0.weight", "roi_mlp.0.bias", "roi_mlp.1.weight",
                                            "roi_mlp.1.bias", "box_head.weight", "box_head.bias"};

struct RowInput {
    const FeatureGrid* grid;
    Box proposal;
    int t;
};

struct Forward {
    RowMatrix x;
    RowMatrix h1;
    RowMatrix h2;
    RowMatrix out;
};

ConstMatrixMap as_matrix(const Tensor& t)
{
    return ConstMatrixMap(t.values.data(), static_cast<Eigen::Index>(t.shape[0]),
                          static_cast<Eigen::Index>(t.shape[1]));
}

ConstVectorMap as_row(const Tensor& t)
{
    return ConstVectorMap(t.values.data(), static_cast<Eigen::Index>(t.values.size()));
}

RowMatrix stacked_head_weights(const ParamStore& params, int hidden)
{
    RowMatrix w(kOutCols, hidden);
    w.topRows(kBoxCols) = as_matrix(params.at("box_head.weight"));
    for (const Head h : kAllHeads) {
        w.middleRows(kHeadOffset[head_index(h)], kHeadRows[head_index(h)]) = as_matrix(params.at(head_weight_name(h)));
    }
    return w;
}

Eigen::RowVectorXd stacked_head_bias(const ParamStore& params)
{
    Eigen::RowVectorXd b(kOutCols);
    b.head(kBoxCols) = as_row(params.at("box_head.bias"));
    for (const Head h : kAllHeads) {
        b.segment(kHeadOffset[head_index(h)], kHeadRows[head_index(h)]) = as_row(params.at(head_bias_name(h)));
    }
    return b;
}

Forward run_forward(const ParamStore& params, const ModelConfig& cfg, const std::vector<RowInput>& rows)
{
    const int pooled = cfg.pool * cfg.pool * kFeatureChannels;
    Forward f;
    f.x.resize(static_cast<Eigen::Index>(rows.size()), cfg.input_dim());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        double* dst = f.x.row(static_cast<Eigen::Index>(r)).data();
        roi_pool_into(*rows[r].grid, rows[r].proposal, cfg.pool, std::span<double>(dst, static_cast<std::size_t>(pooled)));
        const auto emb = time_embedding(rows[r].t, cfg.time_dim);
        std::copy(emb.begin(), emb.end(), dst + pooled);
    }

    f.h1 = (f.x * as_matrix(params.at("roi_mlp.0.weight")).transpose()).rowwise() + as_row(params.at("roi_mlp.0.bias"));
    f.h1 = f.h1.cwiseMax(0.0);
    f.h2 = (f.h1 * as_matrix(params.at("roi_mlp.1.weight")).transpose()).rowwise() + as_row(params.at("roi_mlp.1.bias"));
    f.h2 = f.h2.cwiseMax(0.0);
    f.out = (f.h2 * stacked_head_weights(params, cfg.hidden).transpose()).rowwise() + stacked_head_bias(params);
    return f;
}

Box apply_deltas(const Box& p, const double* d, double clip)
{
    return {p.cx + d[0] * p.w, p.cy + d[1] * p.h, p.w * std::exp(std::min(d[2], clip)),
            p.h * std::exp(std::min(d[3], clip))};
}

double log_sum_exp(const double* z, int n)
{
    const double m = *std::max_element(z, z + n);
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += std::exp(z[i] - m);
    return m + std::log(s);
}

Detection make_detection(const double* out, const Box& proposal, HeadMask mask, double clip, bool clamp)
{
    Detection d;
    const Box raw = apply_deltas(proposal, out, clip);
    d.box = clamp ? clamp_box(raw) : raw;
    for (const Head h : kAllHeads) {
        const int hi = head_index(h);
        const int k = class_count(h);
        const double* z = out + kHeadOffset[hi];
        const double lse_k = log_sum_exp(z, k);
        const double lse_all = log_sum_exp(z, k + 1);
        double* probs = h == Head::Quadrant ? d.probs_q.data() : h == Head::Enumeration ? d.probs_e.data()
                                                                                         : d.probs_d.data();
        for (int c = 0; c < k; ++c) probs[c] = std::exp(z[c] - lse_k);
        d.background[hi] = std::exp(z[k] - lse_all);
    }
    const Head deep = mask.deepest();
    const auto p = d.probs(deep);
    d.score = (1.0 - d.background[head_index(deep)]) * *std::max_element(p.begin(), p.end());
    return d;
}

/// Focal term on logits z[0..n) with target y. Accumulates the gradient
/// scaled by `coef` into dz and returns the loss value.
double focal_with_gradient(const double* z, int n, int y, double gamma, double coef, double* dz)
{
    const double lse = log_sum_exp(z, n);
    const double logp = z[y] - lse;
    const double p = std::exp(logp);
    const double one_minus = 1.0 - p;
    const double loss = -std::pow(one_minus, gamma) * logp;
    const double g = gamma * std::pow(one_minus, gamma - 1.0) * p * logp - std::pow(one_minus, gamma);
    for (int j = 0; j < n; ++j) {
        const double pj = std::exp(z[j] - lse);
        dz[j] += coef * g * ((j == y ? 1.0 : 0.0) - pj);
    }
    return loss;
}

double sign(double v)
{
    return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
}

void add_tensor(ParamStore& store, const char* name, std::vector<std::size_t> shape)
{
    store.add(name, Tensor(std::move(shape)));
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> dims) : shape(std::move(dims))
{
    std::size_t n = 1;
    for (const std::size_t d : shape) n *= d;
    values.assign(n, 0.0);
}

void ParamStore::add(std::string name, Tensor t)
{
    if (contains(name)) throw std::invalid_argument("duplicate tensor " + name);
    tensors_.emplace_back(std::move(name), std::move(t));
}

bool ParamStore::contains(std::string_view name) const
{
    return std::any_of(tensors_.begin(), tensors_.end(), [&](const auto& p) { return p.first == name; });
}

Tensor& ParamStore::at(std::string_view name)
{
    for (auto& [n, t] : tensors_) {
        if (n == name) return t;
    }
    throw std::invalid_argument("no tensor named " + std::string(name));
}

const Tensor& ParamStore::at(std::string_view name) const
{
    for (const auto& [n, t] : tensors_) {
        if (n == name) return t;
    }
    throw std::invalid_argument("no tensor named " + std::string(name));
}

std::size_t ParamStore::parameter_count() const
{
    std::size_t n = 0;
    for (const auto& [name, t] : tensors_) n += t.size();
    return n;
}

ParamStore ParamStore::zeros_like() const
{
    ParamStore out;
    for (const auto& [name, t] : tensors_) out.add(name, Tensor(t.shape));
    return out;
}

std::string_view head_weight_name(Head h)
{
    switch (h) {
    case Head::Quadrant: return "head_q.weight";
    case Head::Enumeration: return "head_e.weight";
    case Head::Diagnosis: return "head_d.weight";
    }
    return "";
}

std::string_view head_bias_name(Head h)
{
    switch (h) {
    case Head::Quadrant: return "head_q.bias";
    case Head::Enumeration: return "head_e.bias";
    case Head::Diagnosis: return "head_d.bias";
    }
    return "";
}

bool is_trunk_tensor(std::string_view name)
{
    return std::find(std::begin(kTrunkNames), std::end(kTrunkNames), name) != std::end(kTrunkNames);
}

ParamStore init_params(const ModelConfig& cfg, std::uint64_t seed)
{
    const auto d = static_cast<std::size_t>(cfg.input_dim());
    const auto h = static_cast<std::size_t>(cfg.hidden);
    ParamStore p;
    add_tensor(p, "roi_mlp.0.weight", {h, d});
    add_tensor(p, "roi_mlp.0.bias", {h});
    add_tensor(p, "roi_mlp.1.weight", {h, h});
    add_tensor(p, "roi_mlp.1.bias", {h});
    add_tensor(p, "box_head.weight", {4, h});
    add_tensor(p, "box_head.bias", {4});
    for (const Head hd : kAllHeads) {
        const auto rows = static_cast<std::size_t>(class_count(hd) + 1);
        p.add(std::string(head_weight_name(hd)), Tensor({rows, h}));
        p.add(std::string(head_bias_name(hd)), Tensor({rows}));
    }

    Rng rng(seed);
    for (const char* name : {"roi_mlp.0.weight", "roi_mlp.1.weight"}) {
        Tensor& t = p.at(name);
        const double limit = std::sqrt(6.0 / static_cast<double>(t.shape[0] + t.shape[1]));
        for (double& v : t.values) v = (2.0 * rng.uniform() - 1.0) * limit;
    }
    return p;
}

void check_shapes(const ParamStore& params, const ModelConfig& cfg)
{
    const ParamStore expected = init_params(cfg, 0);
    for (const auto& [name, t] : expected.tensors()) {
        if (!params.contains(name)) throw std::invalid_argument("parameter store lacks tensor " + name);
        if (params.at(name).shape != t.shape) {
            throw std::invalid_argument("tensor " + name + " has a shape that does not match the model config");
        }
    }
    if (params.tensors().size() != expected.tensors().size()) {
        throw std::invalid_argument("parameter store has unexpected tensors");
    }
}

std::vector<double> time_embedding(int t, int dim)
{
    std::vector<double> out(static_cast<std::size_t>(dim), 0.0);
    const int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * i / half);
        out[static_cast<std::size_t>(i)] = std::sin(t * freq);
        out[static_cast<std::size_t>(half + i)] = std::cos(t * freq);
    }
    return out;
}

DecodeResult decode(const ParamStore& params, const ModelConfig& cfg, const FeatureGrid& grid,
                    const NoisyBoxes& proposals, HeadMask mask)
{
    check_shapes(params, cfg);
    if (grid.channels() != kFeatureChannels) throw std::invalid_argument("decode: feature grid has wrong channel count");

    std::vector<RowInput> rows;
    rows.reserve(proposals.z.size());
    for (const BoxRow& z : proposals.z) rows.push_back({&grid, signal_decode(z, cfg.scale), proposals.t});
    const Forward f = run_forward(params, cfg, rows);

    DecodeResult out;
    out.detections.reserve(rows.size());
    out.z0_pred.reserve(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        out.detections.push_back(
            make_detection(f.out.row(static_cast<Eigen::Index>(r)).data(), rows[r].proposal, mask, cfg.max_log_ratio, true));
        out.z0_pred.push_back(signal_encode(out.detections.back().box, cfg.scale));
    }
    return out;
}

std::vector<Detection> predict_for_loss(const ParamStore& params, const ModelConfig& cfg, const TrainSample& sample,
                                        HeadMask mask)
{
    std::vector<RowInput> rows;
    for (const BoxRow& z : sample.proposals.z) {
        rows.push_back({sample.features, signal_decode(z, cfg.scale), sample.proposals.t});
    }
    const Forward f = run_forward(params, cfg, rows);
    std::vector<Detection> dets;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        dets.push_back(make_detection(f.out.row(static_cast<Eigen::Index>(r)).data(), rows[r].proposal, mask,
                                      cfg.max_log_ratio, false));
    }
    return dets;
}

LossResult loss_gradients(const ParamStore& params, const ModelConfig& cfg, std::span<const TrainSample> batch,
                          HeadMask mask, const LossWeights& weights, const std::vector<MatchResult>* fixed_matches)
{
    check_shapes(params, cfg);
    if (batch.empty()) throw std::invalid_argument("loss_gradients: empty batch");
    if (fixed_matches && fixed_matches->size() != batch.size()) {
        throw std::invalid_argument("loss_gradients: fixed matches do not cover the batch");
    }

    std::vector<RowInput> rows;
    std::vector<std::size_t> offsets;
    for (const TrainSample& s : batch) {
        offsets.push_back(rows.size());
        for (const BoxRow& z : s.proposals.z) rows.push_back({s.features, signal_decode(z, cfg.scale), s.proposals.t});
    }
    const Forward f = run_forward(params, cfg, rows);
    // Matching cannot order non-finite costs, so diverged outputs stop here.
    if (!f.out.allFinite()) throw NonFiniteLoss("forward", "non-finite decoder output");
    RowMatrix d_out = RowMatrix::Zero(f.out.rows(), kOutCols);

    const double batch_size = static_cast<double>(batch.size());
    const Head deep = mask.deepest();
    const double gamma = weights.focal_gamma;

    LossResult result;
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const TrainSample& s = batch[b];
        const std::size_t n = s.proposals.z.size();
        const std::size_t off = offsets[b];

        std::vector<Detection> dets;
        dets.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            dets.push_back(make_detection(f.out.row(static_cast<Eigen::Index>(off + i)).data(), rows[off + i].proposal,
                                          mask, cfg.max_log_ratio, false));
        }
        MatchResult m = fixed_matches ? (*fixed_matches)[b] : match(dets, s.gts, mask, weights);

        const double norm = std::max<double>(1.0, static_cast<double>(s.gts.size()));
        const double coef = 1.0 / (norm * batch_size);
        double cls[3] = {0.0, 0.0, 0.0};
        double l1 = 0.0;
        double giou_term = 0.0;

        std::vector<int> matched_gt(n, -1);
        for (const auto& [p, g] : m.pairs) matched_gt[p] = static_cast<int>(g);

        for (std::size_t i = 0; i < n; ++i) {
            const double* out = f.out.row(static_cast<Eigen::Index>(off + i)).data();
            double* dout = d_out.row(static_cast<Eigen::Index>(off + i)).data();
            const int g = matched_gt[i];

            // Deepest head: (K+1)-way with background as the target of unmatched rows.
            {
                const int hi = head_index(deep);
                const int k = class_count(deep);
                const int target = g >= 0 ? *s.gts[static_cast<std::size_t>(g)].label.get(deep) : k;
                cls[hi] += focal_with_gradient(out + kHeadOffset[hi], k + 1, target, gamma, weights.cls * coef,
                                               dout + kHeadOffset[hi]);
            }
            if (g < 0) continue;
            const GroundTruth& gt = s.gts[static_cast<std::size_t>(g)];

            for (const Head h : kAllHeads) {
                if (!mask.active(h) || h == deep) continue;
                const int hi = head_index(h);
                cls[hi] += focal_with_gradient(out + kHeadOffset[hi], class_count(h), *gt.label.get(h), gamma,
                                               weights.cls * coef, dout + kHeadOffset[hi]);
            }

            const Box& prop = rows[off + i].proposal;
            const Box pred = apply_deltas(prop, out, cfg.max_log_ratio);
            const std::array<double, 4> pv{pred.cx, pred.cy, pred.w, pred.h};
            const std::array<double, 4> gv{gt.box.cx, gt.box.cy, gt.box.w, gt.box.h};
            const GiouGradient gg = giou_with_gradient(pred, gt.box);
            std::array<double, 4> d_box{};
            for (int c = 0; c < 4; ++c) {
                l1 += std::abs(pv[c] - gv[c]);
                d_box[c] = weights.l1 * coef * sign(pv[c] - gv[c]) - weights.giou * coef * gg.d_a[c];
            }
            giou_term += 1.0 - gg.value;

            dout[0] += d_box[0] * prop.w;
            dout[1] += d_box[1] * prop.h;
            if (out[2] < cfg.max_log_ratio) dout[2] += d_box[2] * pred.w;
            if (out[3] < cfg.max_log_ratio) dout[3] += d_box[3] * pred.h;
        }

        LossBreakdown lb;
        lb.cls_q = cls[0] / norm;
        lb.cls_e = cls[1] / norm;
        lb.cls_d = cls[2] / norm;
        lb.l1 = l1 / norm;
        lb.giou = giou_term / norm;
        lb.total = weights.cls * (lb.cls_q + lb.cls_e + lb.cls_d) + weights.l1 * lb.l1 + weights.giou * lb.giou;

        const std::pair<const char*, double> terms[] = {{"cls_q", lb.cls_q}, {"cls_e", lb.cls_e}, {"cls_d", lb.cls_d},
                                                        {"l1", lb.l1},       {"giou", lb.giou}};
        for (const auto& [name, v] : terms) {
            if (!std::isfinite(v)) {
                throw NonFiniteLoss(name, std::string("non-finite loss term ") + name + " in batch image " +
                                              std::to_string(b));
            }
        }

        result.loss.cls_q += lb.cls_q / batch_size;
        result.loss.cls_e += lb.cls_e / batch_size;
        result.loss.cls_d += lb.cls_d / batch_size;
        result.loss.l1 += lb.l1 / batch_size;
        result.loss.giou += lb.giou / batch_size;
        result.loss.total += lb.total / batch_size;
        result.matches.push_back(std::move(m));
    }

    // Backward through heads and trunk.
    const RowMatrix w_heads = stacked_head_weights(params, cfg.hidden);
    const RowMatrix d_w_heads = d_out.transpose() * f.h2;
    const Eigen::RowVectorXd d_b_heads = d_out.colwise().sum();

    RowMatrix d_h2 = d_out * w_heads;
    d_h2 = d_h2.cwiseProduct((f.h2.array() > 0.0).cast<double>().matrix());
    const RowMatrix d_w1 = d_h2.transpose() * f.h1;
    const Eigen::RowVectorXd d_b1 = d_h2.colwise().sum();

    RowMatrix d_h1 = d_h2 * as_matrix(params.at("roi_mlp.1.weight"));
    d_h1 = d_h1.cwiseProduct((f.h1.array() > 0.0).cast<double>().matrix());
    const RowMatrix d_w0 = d_h1.transpose() * f.x;
    const Eigen::RowVectorXd d_b0 = d_h1.colwise().sum();

    result.grads = params.zeros_like();
    const auto store = [&](const char* name, const auto& m) {
        Tensor& t = result.grads.at(name);
        Eigen::Map<RowMatrix>(t.values.data(), m.rows(), m.cols()) = m;
    };
    store("roi_mlp.0.weight", d_w0);
    store("roi_mlp.0.bias", d_b0);
    store("roi_mlp.1.weight", d_w1);
    store("roi_mlp.1.bias", d_b1);
    store("box_head.weight", d_w_heads.topRows(kBoxCols));
    store("box_head.bias", d_b_heads.head(kBoxCols));
    for (const Head h : kAllHeads) {
        const int hi = head_index(h);
        store(std::string(head_weight_name(h)).c_str(), d_w_heads.middleRows(kHeadOffset[hi], kHeadRows[hi]));
        store(std::string(head_bias_name(h)).c_str(), d_b_heads.segment(kHeadOffset[hi], kHeadRows[hi]));
    }
    return result;
}

TransferResult transfer_weights(const ParamStore& src, const ParamStore& dst)
{
    for (const std::string_view name : kTrunkNames) {
        if (!src.contains(name) || !dst.contains(name) || src.at(name).shape != dst.at(name).shape) {
            throw std::invalid_argument("transfer_weights: incompatible trunk tensor " + std::string(name));
        }
    }
    TransferResult out;
    out.params = dst;
    const int src_depth = src.trained_level ? static_cast<int>(*src.trained_level) + 1 : 0;

    for (auto& [name, tensor] : out.params.tensors()) {
        bool copy = is_trunk_tensor(name);
        for (const Head h : kAllHeads) {
            if (head_index(h) < src_depth && (name == head_weight_name(h) || name == head_bias_name(h))) {
                copy = src.contains(name) && src.at(name).shape == tensor.shape;
            }
        }
        if (copy) {
            tensor = src.at(name);
            out.copied.push_back(name);
        }
    }
    out.params.trained_level = src.trained_level;
    return out;
}

}  // namespace hierdet
