#include "dlsr/config.hpp"

#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>
#include <stdexcept>

namespace dlsr {
namespace {

using nlohmann::json;

class Section {
public:
    Section(const json& root, const std::string& name) : name_(name) {
        if (!root.contains(name)) return;
        obj_ = &root.at(name);
        if (!obj_->is_object()) throw std::invalid_argument("config section '" + name + "' must be an object");
    }

    template <class T>
    void read(const char* key, T& out) {
        seen_.insert(key);
        if (!obj_ || !obj_->contains(key)) return;
        try {
            out = obj_->at(key).get<T>();
        } catch (const json::exception&) {
            throw std::invalid_argument("config field '" + name_ + "." + key + "' has the wrong type");
        }
    }

    void patch_sizes(const char* key, std::map<int, int>& out) {
        seen_.insert(key);
        if (!obj_ || !obj_->contains(key)) return;
        const json& m = obj_->at(key);
        if (!m.is_object()) throw std::invalid_argument("config field '" + name_ + "." + key + "' must be an object");
        out.clear();
        for (const auto& [k, v] : m.items()) {
            try {
                out[std::stoi(k)] = v.get<int>();
            } catch (const std::exception&) {
                throw std::invalid_argument("config field '" + name_ + "." + key + "' needs integer scales and sizes");
            }
        }
    }

    void finish() const {
        if (!obj_) return;
        for (const auto& [k, v] : obj_->items())
            if (!seen_.count(k)) throw std::invalid_argument("unknown config key '" + name_ + "." + k + "'");
    }

private:
    std::string name_;
    const json* obj_ = nullptr;
    std::set<std::string> seen_;
};

}  // namespace

void RunConfig::resolve() {
    supernet.scale = data.scale;
    search.hr_patch_size = data.patch_size;
    search.train_fraction = data.train_fraction;
    supernet.validate();
    search.validate();
    train.validate();
    loss.validate();
    if (data.patch_size % data.scale != 0)
        throw std::invalid_argument("data.patch_size must be divisible by data.scale");
    if (data.hr_dir.empty() && data.synthetic_count < 2)
        throw std::invalid_argument("data.synthetic_count must be at least 2");
}

void RunConfig::set_seed(std::uint64_t seed) {
    data.seed = seed;
    search.seed = seed;
    train.seed = seed;
}

RunConfig parse_run_config(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("config is not valid JSON: ") + e.what());
    }
    if (!root.is_object()) throw std::invalid_argument("config must be a JSON object");
    for (const auto& [k, v] : root.items())
        if (k != "supernet" && k != "search" && k != "train" && k != "data" && k != "loss")
            throw std::invalid_argument("unknown config section '" + k + "'");

    RunConfig cfg;
    Section sn(root, "supernet");
    sn.read("channels", cfg.supernet.channels);
    sn.read("num_cells", cfg.supernet.num_cells);
    sn.read("distill_num", cfg.supernet.distill_num);
    sn.read("distill_den", cfg.supernet.distill_den);
    sn.read("esa_reduction", cfg.supernet.esa_reduction);
    sn.read("stage4_kernel", cfg.supernet.stage4_kernel);
    sn.finish();

    Section se(root, "search");
    se.read("total_steps", cfg.search.total_steps);
    se.read("warmup_steps", cfg.search.warmup_steps);
    se.read("batch_size", cfg.search.batch_size);
    se.read("lr_theta", cfg.search.lr_theta);
    se.read("lr_arch", cfg.search.lr_arch);
    se.read("beta1_theta", cfg.search.beta1_theta);
    se.read("beta2_theta", cfg.search.beta2_theta);
    se.read("beta1_arch", cfg.search.beta1_arch);
    se.read("beta2_arch", cfg.search.beta2_arch);
    se.read("weight_decay", cfg.search.weight_decay);
    se.read("snapshot_steps", cfg.search.snapshot_steps);
    se.read("checkpoint_every", cfg.search.checkpoint_every);
    se.read("seed", cfg.search.seed);
    se.finish();

    Section tr(root, "train");
    tr.read("total_steps", cfg.train.total_steps);
    tr.read("batch_size", cfg.train.batch_size);
    tr.read("lr_init", cfg.train.lr_init);
    tr.read("lr_halve_every", cfg.train.lr_halve_every);
    tr.patch_sizes("hr_patch_sizes", cfg.train.hr_patch_sizes);
    tr.read("init_from", cfg.train.init_from);
    tr.read("checkpoint_every", cfg.train.checkpoint_every);
    tr.read("weight_decay", cfg.train.weight_decay);
    tr.read("seed", cfg.train.seed);
    tr.finish();

    Section da(root, "data");
    da.read("hr_dir", cfg.data.hr_dir);
    da.read("scale", cfg.data.scale);
    da.read("patch_size", cfg.data.patch_size);
    da.read("train_fraction", cfg.data.train_fraction);
    da.read("seed", cfg.data.seed);
    da.read("synthetic_count", cfg.data.synthetic_count);
    da.read("synthetic_size", cfg.data.synthetic_size);
    da.finish();

    Section lo(root, "loss");
    lo.read("lambda", cfg.loss.lambda_val);
    lo.read("mu", cfg.loss.mu);
    lo.read("gamma", cfg.loss.gamma);
    lo.finish();
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str());
}

std::string to_json(const RunConfig& c) {
    nlohmann::ordered_json j;
    j["supernet"] = {{"channels", c.supernet.channels},
                     {"num_cells", c.supernet.num_cells},
                     {"distill_num", c.supernet.distill_num},
                     {"distill_den", c.supernet.distill_den},
                     {"esa_reduction", c.supernet.esa_reduction},
                     {"stage4_kernel", c.supernet.stage4_kernel}};
    j["search"] = {{"total_steps", c.search.total_steps},
                   {"warmup_steps", c.search.warmup_steps},
                   {"batch_size", c.search.batch_size},
                   {"lr_theta", c.search.lr_theta},
                   {"lr_arch", c.search.lr_arch},
                   {"beta1_theta", c.search.beta1_theta},
                   {"beta2_theta", c.search.beta2_theta},
                   {"beta1_arch", c.search.beta1_arch},
                   {"beta2_arch", c.search.beta2_arch},
                   {"weight_decay", c.search.weight_decay},
                   {"snapshot_steps", c.search.resolved_snapshot_steps()},
                   {"checkpoint_every", c.search.checkpoint_every},
                   {"seed", c.search.seed}};
    nlohmann::ordered_json patches;
    for (const auto& [s, p] : c.train.hr_patch_sizes) patches[std::to_string(s)] = p;
    j["train"] = {{"total_steps", c.train.total_steps},
                  {"batch_size", c.train.batch_size},
                  {"lr_init", c.train.lr_init},
                  {"lr_halve_every", c.train.lr_halve_every},
                  {"hr_patch_sizes", patches},
                  {"init_from", c.train.init_from},
                  {"checkpoint_every", c.train.checkpoint_every},
                  {"weight_decay", c.train.weight_decay},
                  {"seed", c.train.seed}};
    j["data"] = {{"hr_dir", c.data.hr_dir},
                 {"scale", c.data.scale},
                 {"patch_size", c.data.patch_size},
                 {"train_fraction", c.data.train_fraction},
                 {"seed", c.data.seed},
                 {"synthetic_count", c.data.synthetic_count},
                 {"synthetic_size", c.data.synthetic_size}};
    j["loss"] = {{"lambda", c.loss.lambda_val}, {"mu", c.loss.mu}, {"gamma", c.loss.gamma}};
    return j.dump(2) + "\n";
}

std::vector<SourceImage> load_data(const DataConfig& data) {
    if (!data.hr_dir.empty()) return load_dataset(data.hr_dir, data.scale);
    return synthesize_dataset(data.synthetic_count, data.synthetic_size, data.synthetic_size, data.scale, data.seed);
}

}  // namespace dlsr
