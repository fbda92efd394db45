#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dlsr/data.hpp"
#include "dlsr/genotype.hpp"
#include "dlsr/losses.hpp"
#include "dlsr/optim.hpp"
#include "dlsr/search_space.hpp"

namespace dlsr {

// Raised when a loss or gradient stops being finite.
class NonFiniteError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SearchConfig {
    int total_steps = 2000;
    int warmup_steps = 200;
    int batch_size = 64;
    int hr_patch_size = 64;
    double train_fraction = 0.8;
    double lr_theta = 3e-4;
    double lr_arch = 3e-4;
    double beta1_theta = 0.9;
    double beta2_theta = 0.999;
    double beta1_arch = 0.5;
    double beta2_arch = 0.999;
    double weight_decay = 1e-8;
    std::vector<int> snapshot_steps;  // empty: 25%, 50% and 75% of total_steps
    int checkpoint_every = 0;         // 0: checkpoint only at the end of the run
    std::uint64_t seed = 0;

    std::vector<int> resolved_snapshot_steps() const;
    void validate() const;
};

// Deterministic disjoint split; the training share is round(fraction * n).
std::pair<std::vector<SourceImage>, std::vector<SourceImage>> split_dataset(std::vector<SourceImage> dataset,
                                                                            double train_fraction,
                                                                            std::uint64_t seed);

// Shannon entropy (nats) of softmax over each row of alpha.
std::vector<double> snapshot_entropy(const Tensor& alpha);

// Forward + loss on a batch without touching gradients.
LossTerms evaluate_batch(const SrNetwork& net, const Batch& batch, const LossWeights& weights,
                         const LoGKernel& kernel);

// One Adam step on theta (network weights) only; returns the pre-update loss terms.
LossTerms theta_step(SrNetwork& net, const Batch& train, const LossWeights& weights, Adam& optimizer,
                     const LoGKernel& kernel);

// Gradient of the batch loss w.r.t. the architecture parameters, in arch_parameters() order.
std::vector<Tensor> arch_gradient(SrNetwork& net, const Batch& batch, const LossWeights& weights,
                                  const LoGKernel& kernel);

struct ArchStepResult {
    LossTerms train;
    LossTerms valid;
    std::vector<Tensor> gradient;  // grad L_tr + lambda * grad L_val
};

// One Adam step on alpha/beta using grad L_tr + lambda * grad L_val.
ArchStepResult arch_step(SrNetwork& net, const Batch& train, const Batch& valid, const LossWeights& weights,
                         Adam& optimizer, const LoGKernel& kernel);

struct StepLog {
    int step = 0;
    bool warmup = true;
    double train_loss = 0.0;  // total loss of the theta step
    double l1 = 0.0;
    double hfen = 0.0;
    double param = 0.0;
    double valid_loss = 0.0;  // NaN during warm-up
    double entropy_mean = 0.0;
    double entropy_min = 0.0;
    double entropy_max = 0.0;
};

std::string step_log_json(const StepLog& log);

struct Snapshot {
    int step = 0;
    Genotype genotype;
};

struct SearchState {
    int step = 0;
    std::vector<Snapshot> snapshots;
    std::vector<StepLog> log;
};

// Bi-level search loop. Owns the supernet, both optimizers and the train/valid batch streams.
class Searcher {
public:
    Searcher(const SupernetConfig& net_cfg, const SearchConfig& cfg, const LossWeights& weights,
             std::vector<SourceImage> dataset);
    Searcher(const Searcher&) = delete;
    Searcher& operator=(const Searcher&) = delete;

    // One iteration (theta step, then arch step once past warm-up). Snapshots are taken at the configured steps.
    StepLog step();
    // Runs to total_steps. With a non-empty out_dir, writes log.jsonl, genotype files and checkpoints there;
    // on failure a checkpoint is written before the error propagates.
    const SearchState& run(const std::string& out_dir = {}, const std::function<void(const StepLog&)>& on_step = {});

    void save(const std::string& path) const;
    // Restores weights, architecture, optimizers, streams, snapshots and the step counter.
    void load(const std::string& path);

    SrNetwork& network() { return net_; }
    const SrNetwork& network() const { return net_; }
    const SearchState& state() const { return state_; }
    const SearchConfig& config() const { return cfg_; }
    const std::vector<SourceImage>& train_set() const { return *train_; }
    const std::vector<SourceImage>& valid_set() const { return *valid_; }
    Genotype current_genotype() const;

    // Opaque text stored alongside checkpoints (the CLI puts the resolved run config here).
    void set_provenance(std::string text) { provenance_ = std::move(text); }

private:
    using Split = std::pair<std::vector<SourceImage>, std::vector<SourceImage>>;
    Searcher(const SupernetConfig& net_cfg, const SearchConfig& cfg, const LossWeights& weights, Split split);

    SupernetConfig net_cfg_;
    SearchConfig cfg_;
    LossWeights weights_;
    LoGKernel kernel_;
    std::unique_ptr<std::vector<SourceImage>> train_;
    std::unique_ptr<std::vector<SourceImage>> valid_;
    SrNetwork net_;
    Adam theta_opt_;
    Adam arch_opt_;
    BatchStream train_stream_;
    BatchStream valid_stream_;
    std::vector<int> snapshot_steps_;
    SearchState state_;
    std::string provenance_;
};

SearchState run_search(const SearchConfig& cfg, const SupernetConfig& net_cfg, const LossWeights& weights,
                       std::vector<SourceImage> dataset, const std::string& out_dir = {});

// Rebuilds the architecture parameters stored in a search checkpoint and extracts its genotype.
Genotype genotype_from_checkpoint(const std::string& path);

}  // namespace dlsr
