#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dlsr/autograd.hpp"
#include "dlsr/layers.hpp"

namespace dlsr {

enum class OpKind { plain, separable, dilated };

struct OperationSpec {
    std::string_view name;
    int kernel;
    OpKind kind;
    int dilation;
};

inline constexpr int kNumOps = 9;
inline constexpr int kMixedLayersPerCell = 3;

// The nine candidate operations, in canonical (tie-break) order.
std::span<const OperationSpec> operation_registry();
// Throws std::invalid_argument naming the unknown op.
const OperationSpec& find_operation(std::string_view name);
int operation_index(std::string_view name);

struct SupernetConfig {
    int channels = 48;
    int num_cells = 6;
    int scale = 2;
    int distill_num = 1;  // distillation ratio numerator
    int distill_den = 2;  // ... and denominator
    int esa_reduction = 4;
    int stage4_kernel = 3;  // kernel of the last distillation conv

    int distilled_channels() const { return channels * distill_num / distill_den; }
    int esa_channels() const { return channels / esa_reduction; }
    int num_mixed_layers() const { return num_cells * kMixedLayersPerCell; }
    void validate() const;
    bool operator==(const SupernetConfig&) const = default;
};

// Continuous architecture parameters. alpha: [cells*3, 9]; beta[j]: [j+1].
struct ArchParams {
    ag::Var alpha;
    std::vector<ag::Var> beta;

    static ArchParams zeros(const SupernetConfig& cfg);
    void validate(const SupernetConfig& cfg) const;
    void collect(ParamList& out) const;
};

// One candidate operation instantiated for a channel count; all ops are bias-free and size preserving.
class CandidateOp {
public:
    CandidateOp(const OperationSpec& spec, int channels, Rng& rng);

    ag::Var operator()(const ag::Var& x) const;
    const OperationSpec& spec() const { return *spec_; }
    std::size_t weight_count() const;
    void collect(ParamList& out, const std::string& prefix) const;

private:
    const OperationSpec* spec_;
    int channels_;
    std::vector<Conv2d> layers_;
};

CandidateOp instantiate_operation(const OperationSpec& spec, int channels, Rng& rng);

// A mixed layer over a set of candidates. With a single candidate and no weights it is a plain op.
class MixedLayer {
public:
    MixedLayer() = default;
    MixedLayer(std::span<const int> op_indices, int channels, Rng& rng);

    // op_weights: softmax probabilities (1-D, one per candidate) or undefined for a single op.
    ag::Var operator()(const ag::Var& x, const ag::Var& op_weights) const;
    const std::vector<CandidateOp>& ops() const { return ops_; }
    int channels() const { return channels_; }
    void collect(ParamList& out, const std::string& prefix) const;

private:
    int channels_ = 0;
    std::vector<CandidateOp> ops_;
};

ag::Var mixed_layer_forward(const MixedLayer& layer, const ag::Var& alpha_row_logits, const ag::Var& x);
ag::Var mrb_forward(const MixedLayer& layer, const ag::Var& op_weights, const ag::Var& x);

// Enhanced spatial attention gate.
class Esa {
public:
    Esa() = default;
    Esa(int channels, int reduced, Rng& rng);
    ag::Var operator()(const ag::Var& x) const;
    void collect(ParamList& out, const std::string& prefix) const;

private:
    Conv2d conv1_, conv_f_, conv2_, conv_max_, conv3_, conv3b_, conv4_;
};

// Distillation cell: three MRBs, four distillation branches, 1x1 fusion, ESA, outer residual.
class Cell {
public:
    Cell(const SupernetConfig& cfg, const std::array<std::vector<int>, kMixedLayersPerCell>& stage_ops, Rng& rng);

    // stage_weights: empty, or three 1-D softmax vectors (one per MRB).
    ag::Var operator()(const ag::Var& x, std::span<const ag::Var> stage_weights) const;
    const std::array<MixedLayer, kMixedLayersPerCell>& stages() const { return stages_; }
    void collect(ParamList& out, const std::string& prefix) const;

private:
    int channels_;
    std::array<MixedLayer, kMixedLayersPerCell> stages_;
    std::array<Conv2d, 4> distill_;
    Conv2d fuse_;
    Esa esa_;
};

ag::Var cell_forward(const Cell& cell, const ag::Var& x, std::span<const ag::Var> stage_weights = {});

// softmax(beta_j)-weighted concat of predecessor features through a 1x1 aggregator.
ag::Var aggregate_cell_input(std::span<const ag::Var> predecessor_feats, const ag::Var& beta_logits,
                             const Conv2d& aggregator);

// Which ops each mixed layer holds and which predecessors each cell reads.
struct NetworkTopology {
    std::vector<std::array<std::vector<int>, kMixedLayersPerCell>> cell_ops;
    std::vector<std::vector<int>> connections;  // predecessor indices, 0 = stem
    bool relaxed = false;                       // true: alpha/beta weighting (supernet)

    static NetworkTopology full(int num_cells);
};

// Super-network (relaxed) or derived network (discrete), sharing head, cells and tail.
class SrNetwork {
public:
    SrNetwork(const SupernetConfig& cfg, NetworkTopology topology, std::uint64_t seed);
    SrNetwork(const SrNetwork&) = delete;
    SrNetwork& operator=(const SrNetwork&) = delete;
    SrNetwork(SrNetwork&&) = default;
    SrNetwork& operator=(SrNetwork&&) = default;

    ag::Var forward(const ag::Var& lr) const;
    Tensor upscale(const Tensor& lr) const;

    const SupernetConfig& config() const { return cfg_; }
    const NetworkTopology& topology() const { return topology_; }
    bool is_supernet() const { return topology_.relaxed; }

    const ParamList& weights() const { return weights_; }
    ParamList arch_parameters() const;
    ParamList all_parameters() const;
    ArchParams& arch() { return arch_; }
    const ArchParams& arch() const { return arch_; }
    const std::vector<Cell>& cells() const { return cells_; }

    // Tail parameter names start with this prefix.
    static constexpr std::string_view kTailPrefix = "tail.";
    void reinitialize_tail(std::uint64_t seed);

private:
    SupernetConfig cfg_;
    NetworkTopology topology_;
    Conv2d stem_;
    std::vector<Conv2d> aggregators_;
    std::vector<Cell> cells_;
    Conv2d fusion_reduce_;
    Conv2d fusion_smooth_;
    Conv2d upsampler_;
    ArchParams arch_;
    ParamList weights_;
};

SrNetwork make_supernet(const SupernetConfig& cfg, std::uint64_t seed);

}  // namespace dlsr
