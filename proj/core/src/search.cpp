#include "dlsr/search.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <numeric>

#include "dlsr/checkpoint.hpp"

namespace dlsr {
namespace {

constexpr std::uint64_t kTrainStreamSalt = 0x7472616e5f737472ULL;
constexpr std::uint64_t kValidStreamSalt = 0x76616c69645f7374ULL;

ag::Var alpha_of(const SrNetwork& net) { return net.is_supernet() ? net.arch().alpha : ag::Var(); }

LossTerms batch_loss(const SrNetwork& net, const Batch& batch, const LossWeights& weights, const LoGKernel& kernel) {
    const ag::Var sr = net.forward(ag::constant(batch.lr));
    return total_loss(sr, batch.hr, alpha_of(net), net.config().channels, weights, kernel);
}

double value_of(const LossTerms& t) { return t.total.value()[0]; }

std::string describe(const LossTerms& t) {
    return "total=" + std::to_string(value_of(t)) + " l1=" + std::to_string(t.l1) +
           " hfen=" + std::to_string(t.hfen) + " L_P=" + std::to_string(t.param);
}

// Enables gradients on exactly one parameter group and clears all stale gradients.
void isolate(SrNetwork& net, bool theta) {
    const ParamList arch = net.arch_parameters();
    net.weights().set_requires_grad(theta);
    arch.set_requires_grad(!theta);
    net.weights().zero_grad();
    arch.zero_grad();
}

void release(SrNetwork& net) {
    const ParamList arch = net.arch_parameters();
    net.weights().set_requires_grad(true);
    arch.set_requires_grad(true);
    net.weights().zero_grad();
    arch.zero_grad();
}

std::vector<Tensor> gradients_of(const ParamList& params) {
    std::vector<Tensor> out;
    for (const auto& p : params.items()) out.push_back(p.var.has_grad() ? p.var.grad() : Tensor(p.var.shape(), 0.0));
    return out;
}

AdamConfig adam(double lr, double b1, double b2, double wd) {
    AdamConfig c;
    c.lr = lr;
    c.beta1 = b1;
    c.beta2 = b2;
    c.weight_decay = wd;
    return c;
}

}  // namespace

std::vector<int> SearchConfig::resolved_snapshot_steps() const {
    if (!snapshot_steps.empty()) return snapshot_steps;
    return {total_steps / 4, total_steps / 2, 3 * total_steps / 4};
}

void SearchConfig::validate() const {
    if (total_steps < 1) throw std::invalid_argument("search.total_steps must be positive");
    if (warmup_steps < 0 || warmup_steps >= total_steps)
        throw std::invalid_argument("search.warmup_steps must be in [0, total_steps)");
    if (batch_size < 1) throw std::invalid_argument("search.batch_size must be positive");
    if (hr_patch_size < 1) throw std::invalid_argument("search patch size must be positive");
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw std::invalid_argument("train_fraction must lie strictly between 0 and 1");
    if (!(lr_theta > 0.0) || !(lr_arch > 0.0)) throw std::invalid_argument("search learning rates must be positive");
    if (weight_decay < 0.0) throw std::invalid_argument("search.weight_decay must be non-negative");
    if (checkpoint_every < 0) throw std::invalid_argument("search.checkpoint_every must be non-negative");
    for (int s : resolved_snapshot_steps())
        if (s <= warmup_steps || s > total_steps)
            throw std::invalid_argument("snapshot step " + std::to_string(s) + " outside (warmup_steps, total_steps]");
}

std::pair<std::vector<SourceImage>, std::vector<SourceImage>> split_dataset(std::vector<SourceImage> dataset,
                                                                            double train_fraction,
                                                                            std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw std::invalid_argument("train_fraction must lie strictly between 0 and 1");
    const std::size_t n = dataset.size();
    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
    if (n_train == 0 || n_train >= n)
        throw std::invalid_argument("split of " + std::to_string(n) + " images at fraction " +
                                    std::to_string(train_fraction) + " leaves an empty side");
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    std::sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::sort(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
    std::pair<std::vector<SourceImage>, std::vector<SourceImage>> out;
    for (std::size_t i = 0; i < n; ++i) (i < n_train ? out.first : out.second).push_back(std::move(dataset[idx[i]]));
    return out;
}

std::vector<double> snapshot_entropy(const Tensor& alpha) {
    if (alpha.rank() != 2) throw std::invalid_argument("snapshot_entropy expects [layers, ops]");
    const int rows = alpha.dim(0), cols = alpha.dim(1);
    std::vector<double> out(rows);
    for (int r = 0; r < rows; ++r) {
        const double* row = alpha.data() + static_cast<std::size_t>(r) * cols;
        const double m = *std::max_element(row, row + cols);
        double z = 0.0;
        for (int c = 0; c < cols; ++c) z += std::exp(row[c] - m);
        double h = 0.0;
        for (int c = 0; c < cols; ++c) {
            const double p = std::exp(row[c] - m) / z;
            if (p > 0.0) h -= p * std::log(p);
        }
        out[r] = h;
    }
    return out;
}

LossTerms evaluate_batch(const SrNetwork& net, const Batch& batch, const LossWeights& weights,
                         const LoGKernel& kernel) {
    ag::NoGradGuard guard;
    return batch_loss(net, batch, weights, kernel);
}

LossTerms theta_step(SrNetwork& net, const Batch& train, const LossWeights& weights, Adam& optimizer,
                     const LoGKernel& kernel) {
    isolate(net, true);
    LossTerms t = batch_loss(net, train, weights, kernel);
    if (!std::isfinite(value_of(t))) {
        release(net);
        throw NonFiniteError("non-finite training loss (" + describe(t) + ")");
    }
    t.total.backward();
    optimizer.step();
    release(net);
    return t;
}

std::vector<Tensor> arch_gradient(SrNetwork& net, const Batch& batch, const LossWeights& weights,
                                  const LoGKernel& kernel) {
    if (!net.is_supernet()) throw std::invalid_argument("arch_gradient needs a supernet");
    isolate(net, false);
    batch_loss(net, batch, weights, kernel).total.backward();
    auto g = gradients_of(net.arch_parameters());
    release(net);
    return g;
}

ArchStepResult arch_step(SrNetwork& net, const Batch& train, const Batch& valid, const LossWeights& weights,
                         Adam& optimizer, const LoGKernel& kernel) {
    if (!net.is_supernet()) throw std::invalid_argument("arch_step needs a supernet");
    isolate(net, false);
    ArchStepResult r;
    r.train = batch_loss(net, train, weights, kernel);
    r.valid = batch_loss(net, valid, weights, kernel);
    ag::add(r.train.total, ag::mul_scalar(r.valid.total, weights.lambda_val)).backward();
    r.gradient = gradients_of(net.arch_parameters());
    const bool finite = std::all_of(r.gradient.begin(), r.gradient.end(), [](const Tensor& g) { return g.all_finite(); });
    if (!finite || !std::isfinite(value_of(r.valid))) {
        release(net);
        throw NonFiniteError("non-finite architecture gradient (train " + describe(r.train) + "; valid " +
                             describe(r.valid) + ")");
    }
    optimizer.step();
    release(net);
    return r;
}

std::string step_log_json(const StepLog& log) {
    nlohmann::ordered_json j;
    j["step"] = log.step;
    j["phase"] = log.warmup ? "warmup" : "search";
    j["L_tr"] = log.train_loss;
    j["l1"] = log.l1;
    j["hfen"] = log.hfen;
    j["L_P"] = log.param;
    if (std::isnan(log.valid_loss))
        j["L_val"] = nullptr;
    else
        j["L_val"] = log.valid_loss;
    j["entropy"] = {{"mean", log.entropy_mean}, {"min", log.entropy_min}, {"max", log.entropy_max}};
    return j.dump();
}

namespace {
std::pair<std::vector<SourceImage>, std::vector<SourceImage>> checked_split(std::vector<SourceImage> dataset,
                                                                            const SearchConfig& cfg) {
    cfg.validate();
    if (dataset.empty()) throw std::invalid_argument("search dataset is empty");
    return split_dataset(std::move(dataset), cfg.train_fraction, cfg.seed);
}
}  // namespace

Searcher::Searcher(const SupernetConfig& net_cfg, const SearchConfig& cfg, const LossWeights& weights,
                   std::vector<SourceImage> dataset)
    : Searcher(net_cfg, cfg, weights, checked_split(std::move(dataset), cfg)) {}

Searcher::Searcher(const SupernetConfig& net_cfg, const SearchConfig& cfg, const LossWeights& weights, Split split)
    : net_cfg_(net_cfg),
      cfg_(cfg),
      weights_(weights),
      kernel_(LoGKernel::make()),
      train_(std::make_unique<std::vector<SourceImage>>(std::move(split.first))),
      valid_(std::make_unique<std::vector<SourceImage>>(std::move(split.second))),
      net_(make_supernet(net_cfg, cfg.seed)),
      theta_opt_(net_.weights(), adam(cfg.lr_theta, cfg.beta1_theta, cfg.beta2_theta, cfg.weight_decay)),
      arch_opt_(net_.arch_parameters(), adam(cfg.lr_arch, cfg.beta1_arch, cfg.beta2_arch, cfg.weight_decay)),
      train_stream_(train_.get(), cfg.batch_size, cfg.hr_patch_size, net_cfg.scale, cfg.seed ^ kTrainStreamSalt),
      valid_stream_(valid_.get(), cfg.batch_size, cfg.hr_patch_size, net_cfg.scale, cfg.seed ^ kValidStreamSalt),
      snapshot_steps_(cfg.resolved_snapshot_steps()) {
    weights_.validate();
}

Genotype Searcher::current_genotype() const { return extract_genotype(net_.arch(), net_cfg_); }

StepLog Searcher::step() {
    if (state_.step >= cfg_.total_steps) throw std::logic_error("search already finished");
    const int s = state_.step + 1;
    StepLog log;
    log.step = s;
    log.warmup = s <= cfg_.warmup_steps;
    log.valid_loss = std::numeric_limits<double>::quiet_NaN();

    const Batch train = train_stream_.next();
    LossTerms t;
    try {
        t = theta_step(net_, train, weights_, theta_opt_, kernel_);
    } catch (const NonFiniteError& e) {
        throw NonFiniteError("step " + std::to_string(s) + ": " + e.what());
    }
    log.train_loss = value_of(t);
    log.l1 = t.l1;
    log.hfen = t.hfen;
    log.param = t.param;

    if (!log.warmup) {
        const Batch valid = valid_stream_.next();
        try {
            log.valid_loss = value_of(arch_step(net_, train, valid, weights_, arch_opt_, kernel_).valid);
        } catch (const NonFiniteError& e) {
            throw NonFiniteError("step " + std::to_string(s) + ": " + e.what());
        }
    }

    const auto h = snapshot_entropy(net_.arch().alpha.value());
    log.entropy_mean = std::accumulate(h.begin(), h.end(), 0.0) / static_cast<double>(h.size());
    log.entropy_min = *std::min_element(h.begin(), h.end());
    log.entropy_max = *std::max_element(h.begin(), h.end());

    state_.step = s;
    if (std::find(snapshot_steps_.begin(), snapshot_steps_.end(), s) != snapshot_steps_.end())
        state_.snapshots.push_back({s, current_genotype()});
    state_.log.push_back(log);
    return log;
}

const SearchState& Searcher::run(const std::string& out_dir, const std::function<void(const StepLog&)>& on_step) {
    namespace fs = std::filesystem;
    std::ofstream log_file;
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        log_file.open(fs::path(out_dir) / "log.jsonl", state_.step == 0 ? std::ios::trunc : std::ios::app);
        if (!log_file) throw std::runtime_error("cannot write log in '" + out_dir + "'");
    }
    const auto ckpt_path = (fs::path(out_dir) / "search.ckpt").string();
    while (state_.step < cfg_.total_steps) {
        const std::size_t snapshots_before = state_.snapshots.size();
        StepLog log;
        try {
            log = step();
        } catch (...) {
            if (!out_dir.empty()) save((fs::path(out_dir) / "abort.ckpt").string());
            throw;
        }
        if (log_file.is_open()) log_file << step_log_json(log) << '\n' << std::flush;
        if (!out_dir.empty() && state_.snapshots.size() > snapshots_before) {
            const Snapshot& snap = state_.snapshots.back();
            save_genotype(snap.genotype,
                          (fs::path(out_dir) / ("genotype_step" + std::to_string(snap.step) + ".json")).string());
        }
        if (!out_dir.empty() && cfg_.checkpoint_every > 0 && log.step % cfg_.checkpoint_every == 0) save(ckpt_path);
        if (on_step) on_step(log);
    }
    if (!out_dir.empty()) {
        save(ckpt_path);
        save_genotype(current_genotype(), (fs::path(out_dir) / "genotype.json").string());
    }
    return state_;
}

void Searcher::save(const std::string& path) const {
    Checkpoint ck;
    ck.kind = "search";
    ck.step = state_.step;
    ck.config_json = provenance_;
    store_supernet_config(ck, net_cfg_);
    store_params(ck, net_.weights(), "net.");
    store_params(ck, net_.arch_parameters());
    store_optimizer(ck, theta_opt_, "opt.theta");
    store_optimizer(ck, arch_opt_, "opt.arch");
    ck.blobs["stream.train"] = train_stream_.save_state();
    ck.blobs["stream.valid"] = valid_stream_.save_state();
    nlohmann::json snaps = nlohmann::json::array();
    for (const auto& s : state_.snapshots) snaps.push_back({{"step", s.step}, {"genotype", serialize(s.genotype)}});
    ck.blobs["snapshots"] = snaps.dump();
    save_checkpoint(path, ck);
}

void Searcher::load(const std::string& path) {
    const Checkpoint ck = load_checkpoint(path);
    if (ck.kind != "search") throw CheckpointError("'" + path + "' is a " + ck.kind + " checkpoint, not a search one");
    if (!(supernet_config_from(ck) == net_cfg_)) throw CheckpointError("checkpoint supernet configuration differs");
    restore_params(ck, net_.weights(), "net.");
    restore_params(ck, net_.arch_parameters());
    restore_optimizer(ck, theta_opt_, "opt.theta");
    restore_optimizer(ck, arch_opt_, "opt.arch");
    try {
        train_stream_.load_state(ck.blobs.at("stream.train"));
        valid_stream_.load_state(ck.blobs.at("stream.valid"));
        state_ = SearchState{};
        state_.step = static_cast<int>(ck.step);
        for (const auto& s : nlohmann::json::parse(ck.blobs.at("snapshots")))
            state_.snapshots.push_back({s.at("step").get<int>(), parse_genotype(s.at("genotype").get<std::string>())});
    } catch (const std::out_of_range&) {
        throw CheckpointError("checkpoint '" + path + "' lacks search state");
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError("corrupt snapshot list in '" + path + "': " + e.what());
    }
}

SearchState run_search(const SearchConfig& cfg, const SupernetConfig& net_cfg, const LossWeights& weights,
                       std::vector<SourceImage> dataset, const std::string& out_dir) {
    Searcher searcher(net_cfg, cfg, weights, std::move(dataset));
    return searcher.run(out_dir);
}

Genotype genotype_from_checkpoint(const std::string& path) {
    const Checkpoint ck = load_checkpoint(path);
    if (ck.kind == "train") return parse_genotype(ck.genotype_json);
    if (ck.kind != "search") throw CheckpointError("unknown checkpoint kind '" + ck.kind + "'");
    const SupernetConfig cfg = supernet_config_from(ck);
    ArchParams arch = ArchParams::zeros(cfg);
    ParamList params;
    arch.collect(params);
    restore_params(ck, params);
    return extract_genotype(arch, cfg);
}

}  // namespace dlsr
