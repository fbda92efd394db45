#include "dlsr/search_space.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace dlsr {
namespace {

constexpr std::array<OperationSpec, kNumOps> kRegistry{{
    {"conv1x1", 1, OpKind::plain, 1},
    {"conv3x3", 3, OpKind::plain, 1},
    {"conv5x5", 5, OpKind::plain, 1},
    {"conv7x7", 7, OpKind::plain, 1},
    {"sepconv3x3", 3, OpKind::separable, 1},
    {"sepconv5x5", 5, OpKind::separable, 1},
    {"sepconv7x7", 7, OpKind::separable, 1},
    {"dilconv3x3", 3, OpKind::dilated, 2},
    {"dilconv5x5", 5, OpKind::dilated, 2},
}};

}  // namespace

std::span<const OperationSpec> operation_registry() { return kRegistry; }

const OperationSpec& find_operation(std::string_view name) {
    return kRegistry[static_cast<std::size_t>(operation_index(name))];
}

int operation_index(std::string_view name) {
    for (std::size_t i = 0; i < kRegistry.size(); ++i)
        if (kRegistry[i].name == name) return static_cast<int>(i);
    throw std::invalid_argument("unknown operation '" + std::string(name) + "'");
}

void SupernetConfig::validate() const {
    if (channels < 1) throw std::invalid_argument("channels must be positive");
    if (num_cells < 1) throw std::invalid_argument("num_cells must be positive");
    if (scale < 2 || scale > 4) throw std::invalid_argument("scale must be 2, 3 or 4");
    if (distill_num < 1 || distill_den < 1 || distill_num > distill_den)
        throw std::invalid_argument("distill ratio must lie in (0, 1]");
    if ((channels * distill_num) % distill_den != 0)
        throw std::invalid_argument("channels x distill_ratio must be an integer");
    if (esa_reduction < 1 || channels % esa_reduction != 0)
        throw std::invalid_argument("channels must be divisible by esa_reduction");
    if (stage4_kernel < 1 || stage4_kernel % 2 == 0) throw std::invalid_argument("stage4_kernel must be odd");
}

ArchParams ArchParams::zeros(const SupernetConfig& cfg) {
    ArchParams a;
    a.alpha = ag::Var(Tensor({cfg.num_mixed_layers(), kNumOps}, 0.0), true);
    for (int j = 0; j < cfg.num_cells; ++j) a.beta.emplace_back(Tensor({j + 1}, 0.0), true);
    return a;
}

void ArchParams::validate(const SupernetConfig& cfg) const {
    if (!alpha.defined() || alpha.shape() != Shape{cfg.num_mixed_layers(), kNumOps})
        throw std::invalid_argument("alpha must be [" + std::to_string(cfg.num_mixed_layers()) + " x 9]");
    if (!alpha.value().all_finite()) throw std::invalid_argument("alpha has non-finite entries");
    if (beta.size() != static_cast<std::size_t>(cfg.num_cells))
        throw std::invalid_argument("beta must have one group per cell");
    for (int j = 0; j < cfg.num_cells; ++j) {
        const auto& b = beta[static_cast<std::size_t>(j)];
        if (b.shape() != Shape{j + 1})
            throw std::invalid_argument("beta[" + std::to_string(j) + "] must have length " + std::to_string(j + 1));
        if (!b.value().all_finite()) throw std::invalid_argument("beta has non-finite entries");
    }
}

void ArchParams::collect(ParamList& out) const {
    out.add("arch.alpha", alpha);
    for (std::size_t j = 0; j < beta.size(); ++j) out.add("arch.beta." + std::to_string(j), beta[j]);
}

// ---------------------------------------------------------------------------

CandidateOp::CandidateOp(const OperationSpec& spec, int channels, Rng& rng)
    : spec_(&find_operation(spec.name)), channels_(channels) {
    if (channels < 1) throw std::invalid_argument("operation channels must be >= 1");
    const int k = spec_->kernel;
    switch (spec_->kind) {
        case OpKind::plain:
            layers_.push_back(Conv2d::same(channels, channels, k, false, rng));
            break;
        case OpKind::separable:
            for (int rep = 0; rep < 2; ++rep) {
                layers_.push_back(Conv2d::same(channels, channels, k, false, rng, 1, channels));
                layers_.push_back(Conv2d::same(channels, channels, 1, false, rng));
            }
            break;
        case OpKind::dilated:
            layers_.push_back(Conv2d::same(channels, channels, k, false, rng, spec_->dilation, channels));
            layers_.push_back(Conv2d::same(channels, channels, 1, false, rng));
            break;
    }
}

ag::Var CandidateOp::operator()(const ag::Var& x) const {
    ag::Var y = x;
    for (const auto& layer : layers_) y = layer(y);
    return y;
}

std::size_t CandidateOp::weight_count() const {
    std::size_t n = 0;
    for (const auto& layer : layers_) n += layer.weight().value().numel();
    return n;
}

void CandidateOp::collect(ParamList& out, const std::string& prefix) const {
    static constexpr std::array<const char*, 4> kSepNames{"dw1", "pw1", "dw2", "pw2"};
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const std::string leaf = spec_->kind == OpKind::plain ? "conv" : kSepNames[i];
        layers_[i].collect(out, prefix + std::string(spec_->name) + "." + leaf);
    }
}

CandidateOp instantiate_operation(const OperationSpec& spec, int channels, Rng& rng) {
    return CandidateOp(spec, channels, rng);
}

MixedLayer::MixedLayer(std::span<const int> op_indices, int channels, Rng& rng) : channels_(channels) {
    if (op_indices.empty()) throw std::invalid_argument("mixed layer needs at least one op");
    for (int idx : op_indices) {
        if (idx < 0 || idx >= kNumOps) throw std::invalid_argument("op index out of range");
        ops_.emplace_back(kRegistry[static_cast<std::size_t>(idx)], channels, rng);
    }
}

ag::Var MixedLayer::operator()(const ag::Var& x, const ag::Var& op_weights) const {
    if (x.value().rank() != 4 || x.shape()[1] != channels_)
        throw std::invalid_argument("mixed layer: expected " + std::to_string(channels_) + " channels, got " +
                                    shape_string(x.shape()));
    if (!op_weights.defined()) {
        if (ops_.size() != 1) throw std::invalid_argument("mixed layer with several ops needs weights");
        return ops_.front()(x);
    }
    std::vector<ag::Var> outs;
    outs.reserve(ops_.size());
    for (const auto& op : ops_) outs.push_back(op(x));
    return ag::weighted_sum(outs, op_weights);
}

void MixedLayer::collect(ParamList& out, const std::string& prefix) const {
    for (const auto& op : ops_) op.collect(out, prefix);
}

ag::Var mixed_layer_forward(const MixedLayer& layer, const ag::Var& alpha_row_logits, const ag::Var& x) {
    if (!alpha_row_logits.value().all_finite()) throw std::invalid_argument("alpha row must be finite");
    return layer(x, ag::softmax(alpha_row_logits));
}

ag::Var mrb_forward(const MixedLayer& layer, const ag::Var& op_weights, const ag::Var& x) {
    return ag::relu(ag::add(x, layer(x, op_weights)));
}

// ---------------------------------------------------------------------------

Esa::Esa(int channels, int reduced, Rng& rng)
    : conv1_(Conv2d::same(channels, reduced, 1, true, rng)),
      conv_f_(Conv2d::same(reduced, reduced, 1, true, rng)),
      conv2_(reduced, reduced, 3, ConvGeometry{2, 0, 1, 1}, true, rng),
      conv_max_(Conv2d::same(reduced, reduced, 3, true, rng)),
      conv3_(Conv2d::same(reduced, reduced, 3, true, rng)),
      conv3b_(Conv2d::same(reduced, reduced, 3, true, rng)),
      conv4_(Conv2d::same(reduced, channels, 1, true, rng)) {}

ag::Var Esa::operator()(const ag::Var& x) const {
    const int h = x.shape()[2];
    const int w = x.shape()[3];
    if (h < 3 || w < 3) throw std::invalid_argument("ESA needs spatial size >= 3, got " + shape_string(x.shape()));
    ag::Var c1_ = conv1_(x);
    ag::Var c1 = conv2_(c1_);
    ag::Var v_max = ag::max_pool2d(c1, 7, 3);
    ag::Var v_range = ag::relu(conv_max_(v_max));
    ag::Var c3 = ag::relu(conv3_(v_range));
    c3 = conv3b_(c3);
    c3 = ag::upsample_bilinear(c3, h, w);
    ag::Var cf = conv_f_(c1_);
    ag::Var m = ag::sigmoid(conv4_(ag::add(c3, cf)));
    return ag::mul(x, m);
}

void Esa::collect(ParamList& out, const std::string& prefix) const {
    conv1_.collect(out, prefix + "conv1");
    conv_f_.collect(out, prefix + "conv_f");
    conv2_.collect(out, prefix + "conv2");
    conv_max_.collect(out, prefix + "conv_max");
    conv3_.collect(out, prefix + "conv3");
    conv3b_.collect(out, prefix + "conv3b");
    conv4_.collect(out, prefix + "conv4");
}

Cell::Cell(const SupernetConfig& cfg, const std::array<std::vector<int>, kMixedLayersPerCell>& stage_ops, Rng& rng)
    : channels_(cfg.channels) {
    const int c = cfg.channels;
    const int d = cfg.distilled_channels();
    for (int i = 0; i < kMixedLayersPerCell; ++i) {
        distill_[static_cast<std::size_t>(i)] = Conv2d::same(c, d, 1, true, rng);
        stages_[static_cast<std::size_t>(i)] = MixedLayer(stage_ops[static_cast<std::size_t>(i)], c, rng);
    }
    distill_[3] = Conv2d::same(c, d, cfg.stage4_kernel, true, rng);
    fuse_ = Conv2d::same(4 * d, c, 1, true, rng);
    esa_ = Esa(c, cfg.esa_channels(), rng);
}

ag::Var Cell::operator()(const ag::Var& x, std::span<const ag::Var> stage_weights) const {
    if (x.value().rank() != 4 || x.shape()[1] != channels_)
        throw std::invalid_argument("cell: expected " + std::to_string(channels_) + " channels, got " +
                                    shape_string(x.shape()));
    if (!stage_weights.empty() && stage_weights.size() != kMixedLayersPerCell)
        throw std::invalid_argument("cell: need one weight vector per mixed layer");
    std::vector<ag::Var> distilled;
    ag::Var cur = x;
    for (std::size_t i = 0; i < kMixedLayersPerCell; ++i) {
        distilled.push_back(distill_[i](cur));
        cur = mrb_forward(stages_[i], stage_weights.empty() ? ag::Var() : stage_weights[i], cur);
    }
    distilled.push_back(distill_[3](cur));
    ag::Var fused = fuse_(ag::concat_channels(distilled));
    return ag::add(x, esa_(fused));
}

void Cell::collect(ParamList& out, const std::string& prefix) const {
    for (std::size_t i = 0; i < kMixedLayersPerCell; ++i) {
        distill_[i].collect(out, prefix + "distill" + std::to_string(i + 1));
        stages_[i].collect(out, prefix + "mrb" + std::to_string(i + 1) + ".");
    }
    distill_[3].collect(out, prefix + "distill4");
    fuse_.collect(out, prefix + "fuse");
    esa_.collect(out, prefix + "esa.");
}

ag::Var cell_forward(const Cell& cell, const ag::Var& x, std::span<const ag::Var> stage_weights) {
    return cell(x, stage_weights);
}

ag::Var aggregate_cell_input(std::span<const ag::Var> predecessor_feats, const ag::Var& beta_logits,
                             const Conv2d& aggregator) {
    if (predecessor_feats.empty()) throw std::invalid_argument("aggregate: no predecessor features");
    if (beta_logits.value().rank() != 1 ||
        static_cast<std::size_t>(beta_logits.shape()[0]) != predecessor_feats.size())
        throw std::invalid_argument("aggregate: beta length " + shape_string(beta_logits.shape()) +
                                    " does not match " + std::to_string(predecessor_feats.size()) + " predecessors");
    for (const auto& f : predecessor_feats)
        if (f.shape() != predecessor_feats.front().shape())
            throw std::invalid_argument("aggregate: predecessor feature shapes differ");
    ag::Var w = ag::softmax(beta_logits);
    std::vector<ag::Var> parts;
    for (std::size_t i = 0; i < predecessor_feats.size(); ++i)
        parts.push_back(ag::scale_by(predecessor_feats[i], w, static_cast<int>(i)));
    return aggregator(ag::concat_channels(parts));
}

NetworkTopology NetworkTopology::full(int num_cells) {
    NetworkTopology t;
    t.relaxed = true;
    std::vector<int> all(kNumOps);
    std::iota(all.begin(), all.end(), 0);
    for (int j = 0; j < num_cells; ++j) {
        t.cell_ops.push_back({all, all, all});
        std::vector<int> preds(static_cast<std::size_t>(j + 1));
        std::iota(preds.begin(), preds.end(), 0);
        t.connections.push_back(preds);
    }
    return t;
}

// ---------------------------------------------------------------------------

SrNetwork::SrNetwork(const SupernetConfig& cfg, NetworkTopology topology, std::uint64_t seed)
    : cfg_(cfg), topology_(std::move(topology)) {
    cfg_.validate();
    const int n = cfg_.num_cells;
    if (topology_.cell_ops.size() != static_cast<std::size_t>(n) ||
        topology_.connections.size() != static_cast<std::size_t>(n))
        throw std::invalid_argument("topology does not match num_cells");
    for (int j = 0; j < n; ++j) {
        const auto& conn = topology_.connections[static_cast<std::size_t>(j)];
        if (conn.empty()) throw std::invalid_argument("cell " + std::to_string(j) + " has no input connection");
        for (int p : conn)
            if (p < 0 || p > j) throw std::invalid_argument("cell " + std::to_string(j) + " reads invalid predecessor");
        if (topology_.relaxed && conn.size() != static_cast<std::size_t>(j + 1))
            throw std::invalid_argument("relaxed topology must connect every predecessor");
    }

    Rng rng(seed);
    const int c = cfg_.channels;
    stem_ = Conv2d::same(3, c, 3, true, rng);
    for (int j = 0; j < n; ++j) {
        const int fan = static_cast<int>(topology_.connections[static_cast<std::size_t>(j)].size());
        aggregators_.push_back(Conv2d::same(fan * c, c, 1, true, rng));
        cells_.emplace_back(cfg_, topology_.cell_ops[static_cast<std::size_t>(j)], rng);
    }
    fusion_reduce_ = Conv2d::same(n * c, c, 1, true, rng);
    fusion_smooth_ = Conv2d::same(c, c, 3, true, rng);
    upsampler_ = Conv2d::same(c, 3 * cfg_.scale * cfg_.scale, 3, true, rng);
    if (topology_.relaxed) arch_ = ArchParams::zeros(cfg_);

    stem_.collect(weights_, "stem");
    for (int j = 0; j < n; ++j) {
        const std::string idx = std::to_string(j);
        aggregators_[static_cast<std::size_t>(j)].collect(weights_, "aggregators." + idx);
        cells_[static_cast<std::size_t>(j)].collect(weights_, "cells." + idx + ".");
    }
    fusion_reduce_.collect(weights_, "fusion.reduce");
    fusion_smooth_.collect(weights_, "fusion.smooth");
    upsampler_.collect(weights_, std::string(kTailPrefix) + "upsample");
}

ag::Var SrNetwork::forward(const ag::Var& lr) const {
    if (lr.value().rank() != 4 || lr.shape()[1] != 3)
        throw std::invalid_argument("network input must be [N,3,H,W], got " + shape_string(lr.shape()));
    const ag::Var stem = stem_(lr);
    std::vector<ag::Var> feats{stem};
    std::vector<ag::Var> cell_outputs;
    for (std::size_t j = 0; j < cells_.size(); ++j) {
        const auto& conn = topology_.connections[j];
        std::vector<ag::Var> preds;
        for (int p : conn) preds.push_back(feats[static_cast<std::size_t>(p)]);
        ag::Var input;
        std::vector<ag::Var> stage_weights;
        if (topology_.relaxed) {
            input = aggregate_cell_input(preds, arch_.beta[j], aggregators_[j]);
            for (int s = 0; s < kMixedLayersPerCell; ++s)
                stage_weights.push_back(
                    ag::softmax_row(arch_.alpha, static_cast<int>(j) * kMixedLayersPerCell + s));
        } else {
            input = aggregators_[j](preds.size() == 1 ? preds.front() : ag::concat_channels(preds));
        }
        ag::Var out = cells_[j](input, stage_weights);
        feats.push_back(out);
        cell_outputs.push_back(out);
    }
    ag::Var fused = fusion_smooth_(fusion_reduce_(ag::concat_channels(cell_outputs)));
    return ag::pixel_shuffle(upsampler_(ag::add(fused, stem)), cfg_.scale);
}

Tensor SrNetwork::upscale(const Tensor& lr) const {
    ag::NoGradGuard guard;
    if (lr.rank() == 3) {
        Tensor batch = lr.reshaped({1, lr.dim(0), lr.dim(1), lr.dim(2)});
        Tensor out = forward(ag::constant(std::move(batch))).value();
        return out.reshaped({out.dim(1), out.dim(2), out.dim(3)});
    }
    return forward(ag::constant(lr)).value();
}

ParamList SrNetwork::arch_parameters() const {
    ParamList out;
    if (topology_.relaxed) arch_.collect(out);
    return out;
}

ParamList SrNetwork::all_parameters() const {
    ParamList out = weights_;
    out.append(arch_parameters());
    return out;
}

void SrNetwork::reinitialize_tail(std::uint64_t seed) {
    Rng rng(seed);
    upsampler_.reinitialize(rng);
}

SrNetwork make_supernet(const SupernetConfig& cfg, std::uint64_t seed) {
    return SrNetwork(cfg, NetworkTopology::full(cfg.num_cells), seed);
}

}  // namespace dlsr
