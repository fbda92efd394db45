#include "dlsr/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "dlsr/checkpoint.hpp"
#include "dlsr/search.hpp"

namespace dlsr {
namespace {

constexpr std::uint64_t kStreamSalt = 0x747261696e5f7374ULL;

std::vector<SourceImage>* require_data(std::vector<SourceImage>* data) {
    if (data->empty()) throw std::invalid_argument("training dataset is empty");
    return data;
}

AdamConfig adam_for(const TrainConfig& cfg) {
    AdamConfig a;
    a.lr = cfg.lr_init;
    a.weight_decay = cfg.weight_decay;
    return a;
}

bool starts_with(const std::string& s, std::string_view prefix) { return s.compare(0, prefix.size(), prefix) == 0; }

}  // namespace

double TrainConfig::lr_at(int step) const {
    if (step < 1) throw std::invalid_argument("steps are 1-based");
    return lr_init * std::pow(0.5, static_cast<double>((step - 1) / lr_halve_every));
}

int TrainConfig::patch_for(int scale) const {
    auto it = hr_patch_sizes.find(scale);
    if (it == hr_patch_sizes.end()) throw std::invalid_argument("no training patch size for scale " + std::to_string(scale));
    return it->second;
}

void TrainConfig::validate() const {
    if (total_steps < 1) throw std::invalid_argument("train.total_steps must be positive");
    if (lr_halve_every < 1) throw std::invalid_argument("train.lr_halve_every must be positive");
    if (batch_size < 1) throw std::invalid_argument("train.batch_size must be positive");
    if (!(lr_init > 0.0)) throw std::invalid_argument("train.lr_init must be positive");
    if (weight_decay < 0.0) throw std::invalid_argument("train.weight_decay must be non-negative");
    if (checkpoint_every < 0) throw std::invalid_argument("train.checkpoint_every must be non-negative");
    for (const auto& [s, p] : hr_patch_sizes)
        if (s < 1 || p < s || p % s != 0)
            throw std::invalid_argument("train patch size " + std::to_string(p) + " invalid for scale " +
                                        std::to_string(s));
}

std::string train_log_json(const TrainStepLog& log) {
    nlohmann::ordered_json j;
    j["step"] = log.step;
    j["lr"] = log.lr;
    j["loss"] = log.loss;
    j["l1"] = log.l1;
    j["hfen"] = log.hfen;
    return j.dump();
}

Trainer::Trainer(Genotype genotype, const SupernetConfig& base, const TrainConfig& cfg, const LossWeights& weights,
                 std::vector<SourceImage> dataset)
    : genotype_((genotype.validate(), std::move(genotype))),
      net_cfg_(config_for(genotype_, base)),
      cfg_((cfg.validate(), cfg)),
      weights_(weights),
      kernel_(LoGKernel::make()),
      data_(std::make_unique<std::vector<SourceImage>>(std::move(dataset))),
      net_(build_derived_network(genotype_, base, cfg.seed)),
      opt_(net_.weights(), adam_for(cfg)),
      stream_(require_data(data_.get()), cfg.batch_size, cfg.patch_for(genotype_.scale), genotype_.scale,
              cfg.seed ^ kStreamSalt) {
    weights_.gamma = 0.0;
    weights_.validate();
}

TrainStepLog Trainer::step() {
    const int s = step_ + 1;
    opt_.set_lr(cfg_.lr_at(s));
    const Batch batch = stream_.next();
    LossTerms t;
    try {
        t = theta_step(net_, batch, weights_, opt_, kernel_);
    } catch (const NonFiniteError& e) {
        throw NonFiniteError("train step " + std::to_string(s) + ": " + e.what());
    }
    step_ = s;
    TrainStepLog log{s, opt_.lr(), t.total.value()[0], t.l1, t.hfen};
    log_.push_back(log);
    return log;
}

void Trainer::run(const std::string& out_dir, const std::function<void(const TrainStepLog&)>& on_step) {
    namespace fs = std::filesystem;
    std::ofstream log_file;
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        log_file.open(fs::path(out_dir) / "train_log.jsonl", step_ == 0 ? std::ios::trunc : std::ios::app);
        if (!log_file) throw std::runtime_error("cannot write log in '" + out_dir + "'");
    }
    const auto ckpt_path = (fs::path(out_dir) / "model.ckpt").string();
    while (step_ < cfg_.total_steps) {
        TrainStepLog log;
        try {
            log = step();
        } catch (...) {
            if (!out_dir.empty()) save((fs::path(out_dir) / "abort.ckpt").string());
            throw;
        }
        if (log_file.is_open()) log_file << train_log_json(log) << '\n' << std::flush;
        if (!out_dir.empty() && cfg_.checkpoint_every > 0 && log.step % cfg_.checkpoint_every == 0) save(ckpt_path);
        if (on_step) on_step(log);
    }
    if (!out_dir.empty()) save(ckpt_path);
}

void Trainer::save(const std::string& path) const {
    Checkpoint ck;
    ck.kind = "train";
    ck.step = step_;
    ck.config_json = provenance_;
    ck.genotype_json = serialize(genotype_);
    store_supernet_config(ck, net_cfg_);
    store_params(ck, net_.weights(), "net.");
    store_optimizer(ck, opt_, "opt");
    ck.blobs["stream.train"] = stream_.save_state();
    save_checkpoint(path, ck);
}

void Trainer::load(const std::string& path) {
    const Checkpoint ck = load_checkpoint(path);
    if (ck.kind != "train") throw CheckpointError("'" + path + "' is a " + ck.kind + " checkpoint, not a training one");
    if (parse_genotype(ck.genotype_json) != genotype_) throw CheckpointError("checkpoint genotype differs from the run's");
    if (!(supernet_config_from(ck) == net_cfg_)) throw CheckpointError("checkpoint network configuration differs");
    restore_params(ck, net_.weights(), "net.");
    restore_optimizer(ck, opt_, "opt");
    auto it = ck.blobs.find("stream.train");
    if (it == ck.blobs.end()) throw CheckpointError("checkpoint '" + path + "' lacks the batch stream state");
    stream_.load_state(it->second);
    step_ = static_cast<int>(ck.step);
    log_.clear();
}

void Trainer::warm_start(const std::string& path) {
    const Checkpoint ck = load_checkpoint(path);
    if (ck.kind != "train") throw CheckpointError("'" + path + "' is a " + ck.kind + " checkpoint, not a training one");
    const bool new_scale = supernet_config_from(ck).scale != net_cfg_.scale;
    restore_params(ck, net_.weights(), "net.", [new_scale](const std::string& name) {
        return new_scale && starts_with(name, SrNetwork::kTailPrefix);
    });
    if (new_scale) net_.reinitialize_tail(cfg_.seed);
}

std::string train(const Genotype& genotype, const SupernetConfig& base, const TrainConfig& cfg,
                  const LossWeights& weights, std::vector<SourceImage> dataset, const std::string& out_dir) {
    Trainer trainer(genotype, base, cfg, weights, std::move(dataset));
    if (!cfg.init_from.empty()) trainer.warm_start(cfg.init_from);
    trainer.run(out_dir);
    return out_dir.empty() ? std::string() : (std::filesystem::path(out_dir) / "model.ckpt").string();
}

SrNetwork load_trained_network(const std::string& path) {
    const Checkpoint ck = load_checkpoint(path);
    if (ck.kind != "train") throw CheckpointError("'" + path + "' is a " + ck.kind + " checkpoint, not a training one");
    const Genotype g = parse_genotype(ck.genotype_json);
    SrNetwork net = build_derived_network(g, supernet_config_from(ck), 0);
    restore_params(ck, net.weights(), "net.");
    return net;
}

}  // namespace dlsr
