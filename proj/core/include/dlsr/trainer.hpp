#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "dlsr/data.hpp"
#include "dlsr/genotype.hpp"
#include "dlsr/losses.hpp"
#include "dlsr/optim.hpp"

namespace dlsr {

struct TrainConfig {
    int total_steps = 5000;
    int batch_size = 32;
    double lr_init = 3e-4;
    int lr_halve_every = 1000;
    std::map<int, int> hr_patch_sizes{{2, 128}, {3, 192}, {4, 256}};
    std::string init_from;  // optional warm-start checkpoint
    int checkpoint_every = 0;
    double weight_decay = 1e-8;
    std::uint64_t seed = 0;

    // Learning rate used by (1-based) step: lr_init * 0.5^floor((step - 1) / lr_halve_every).
    double lr_at(int step) const;
    int patch_for(int scale) const;
    void validate() const;
};

struct TrainStepLog {
    int step = 0;
    double lr = 0.0;
    double loss = 0.0;
    double l1 = 0.0;
    double hfen = 0.0;
};

std::string train_log_json(const TrainStepLog& log);

// Retrains a derived network from scratch with L1 + mu * HFEN (the parameter term is always off).
class Trainer {
public:
    Trainer(Genotype genotype, const SupernetConfig& base, const TrainConfig& cfg, const LossWeights& weights,
            std::vector<SourceImage> dataset);
    Trainer(const Trainer&) = delete;
    Trainer& operator=(const Trainer&) = delete;

    TrainStepLog step();
    // Runs to total_steps, writing train_log.jsonl and model.ckpt under out_dir when given.
    void run(const std::string& out_dir = {}, const std::function<void(const TrainStepLog&)>& on_step = {});

    // Weights, optimizer, batch stream and step counter. load() rejects a different genotype.
    void save(const std::string& path) const;
    void load(const std::string& path);
    // Loads network weights from a trained checkpoint. When the stored scale differs, the tail is
    // re-initialised instead; any other shape mismatch is rejected with the layer name.
    void warm_start(const std::string& path);

    SrNetwork& network() { return net_; }
    const SrNetwork& network() const { return net_; }
    const Genotype& genotype() const { return genotype_; }
    const TrainConfig& config() const { return cfg_; }
    int steps_done() const { return step_; }
    const std::vector<TrainStepLog>& log() const { return log_; }

    void set_provenance(std::string text) { provenance_ = std::move(text); }

private:
    Genotype genotype_;
    SupernetConfig net_cfg_;
    TrainConfig cfg_;
    LossWeights weights_;
    LoGKernel kernel_;
    std::unique_ptr<std::vector<SourceImage>> data_;
    SrNetwork net_;
    Adam opt_;
    BatchStream stream_;
    int step_ = 0;
    std::vector<TrainStepLog> log_;
    std::string provenance_;
};

// Builds, optionally warm-starts, and trains the derived network; returns the final checkpoint path
// (empty when out_dir is empty).
std::string train(const Genotype& genotype, const SupernetConfig& base, const TrainConfig& cfg,
                  const LossWeights& weights, std::vector<SourceImage> dataset, const std::string& out_dir);

// Rebuilds the trained derived network stored in a checkpoint.
SrNetwork load_trained_network(const std::string& path);

}  // namespace dlsr
