#include "dlsr/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <json.hpp>

namespace dlsr {
namespace {

constexpr char kMagic[8] = {'D', 'L', 'S', 'R', 'C', 'K', 'P', 'T'};

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return &t;
    return nullptr;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    nlohmann::json header;
    header["kind"] = ckpt.kind;
    header["step"] = ckpt.step;
    header["config"] = ckpt.config_json;
    header["genotype"] = ckpt.genotype_json;
    header["blobs"] = ckpt.blobs;
    header["counters"] = ckpt.counters;
    nlohmann::json list = nlohmann::json::array();
    for (const auto& [name, t] : ckpt.tensors) list.push_back({{"name", name}, {"shape", t.shape()}});
    header["tensors"] = list;
    const std::string text = header.dump();

    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw CheckpointError("cannot write checkpoint '" + path + "'");
        out.write(kMagic, sizeof kMagic);
        const std::uint32_t version = kCheckpointVersion;
        const std::uint64_t len = text.size();
        out.write(reinterpret_cast<const char*>(&version), sizeof version);
        out.write(reinterpret_cast<const char*>(&len), sizeof len);
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        for (const auto& [name, t] : ckpt.tensors)
            out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(double)));
        if (!out) throw CheckpointError("failed writing checkpoint '" + path + "'");
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint '" + path + "'");
    char magic[8];
    std::uint32_t version = 0;
    std::uint64_t len = 0;
    in.read(magic, sizeof magic);
    in.read(reinterpret_cast<char*>(&version), sizeof version);
    in.read(reinterpret_cast<char*>(&len), sizeof len);
    if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) throw CheckpointError("'" + path + "' is not a checkpoint");
    if (version != kCheckpointVersion)
        throw CheckpointError("checkpoint '" + path + "' has version " + std::to_string(version) + ", expected " +
                              std::to_string(kCheckpointVersion));
    if (len > (1u << 30)) throw CheckpointError("corrupt checkpoint header in '" + path + "'");
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    if (!in) throw CheckpointError("truncated checkpoint '" + path + "'");

    Checkpoint ckpt;
    try {
        const auto header = nlohmann::json::parse(text);
        ckpt.kind = header.at("kind").get<std::string>();
        ckpt.step = header.at("step").get<std::int64_t>();
        ckpt.config_json = header.at("config").get<std::string>();
        ckpt.genotype_json = header.at("genotype").get<std::string>();
        ckpt.blobs = header.at("blobs").get<std::map<std::string, std::string>>();
        ckpt.counters = header.at("counters").get<std::map<std::string, std::int64_t>>();
        for (const auto& entry : header.at("tensors")) {
            Tensor t(entry.at("shape").get<Shape>());
            in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(double)));
            if (!in) throw CheckpointError("truncated checkpoint '" + path + "'");
            ckpt.put(entry.at("name").get<std::string>(), std::move(t));
        }
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError("corrupt checkpoint header in '" + path + "': " + e.what());
    }
    return ckpt;
}

void store_params(Checkpoint& ckpt, const ParamList& params, const std::string& prefix) {
    for (const auto& p : params.items()) ckpt.put(prefix + p.name, p.var.value());
}

void restore_params(const Checkpoint& ckpt, const ParamList& params, const std::string& prefix,
                    const std::function<bool(const std::string&)>& skip) {
    for (const auto& p : params.items()) {
        if (skip && skip(p.name)) continue;
        const Tensor* t = ckpt.find(prefix + p.name);
        if (!t) throw CheckpointError("checkpoint has no tensor for '" + p.name + "'");
        if (t->shape() != p.var.shape())
            throw CheckpointError("shape mismatch for '" + p.name + "': checkpoint " + shape_string(t->shape()) +
                                  ", network " + shape_string(p.var.shape()));
        ag::Var v = p.var;
        v.mutable_value() = *t;
    }
}

namespace {
std::int64_t counter(const Checkpoint& ckpt, const std::string& name) {
    auto it = ckpt.counters.find(name);
    if (it == ckpt.counters.end()) throw CheckpointError("checkpoint lacks '" + name + "'");
    return it->second;
}
}  // namespace

void store_supernet_config(Checkpoint& ckpt, const SupernetConfig& cfg) {
    ckpt.counters["supernet.channels"] = cfg.channels;
    ckpt.counters["supernet.num_cells"] = cfg.num_cells;
    ckpt.counters["supernet.scale"] = cfg.scale;
    ckpt.counters["supernet.distill_num"] = cfg.distill_num;
    ckpt.counters["supernet.distill_den"] = cfg.distill_den;
    ckpt.counters["supernet.esa_reduction"] = cfg.esa_reduction;
    ckpt.counters["supernet.stage4_kernel"] = cfg.stage4_kernel;
}

SupernetConfig supernet_config_from(const Checkpoint& ckpt) {
    SupernetConfig cfg;
    cfg.channels = static_cast<int>(counter(ckpt, "supernet.channels"));
    cfg.num_cells = static_cast<int>(counter(ckpt, "supernet.num_cells"));
    cfg.scale = static_cast<int>(counter(ckpt, "supernet.scale"));
    cfg.distill_num = static_cast<int>(counter(ckpt, "supernet.distill_num"));
    cfg.distill_den = static_cast<int>(counter(ckpt, "supernet.distill_den"));
    cfg.esa_reduction = static_cast<int>(counter(ckpt, "supernet.esa_reduction"));
    cfg.stage4_kernel = static_cast<int>(counter(ckpt, "supernet.stage4_kernel"));
    return cfg;
}

void store_optimizer(Checkpoint& ckpt, const Adam& opt, const std::string& prefix) {
    const auto& items = opt.params().items();
    const AdamState& s = opt.state();
    ckpt.counters[prefix + ".steps"] = s.steps;
    for (std::size_t i = 0; i < items.size(); ++i) {
        ckpt.put(prefix + ".m." + items[i].name, s.m[i]);
        ckpt.put(prefix + ".v." + items[i].name, s.v[i]);
    }
}

void restore_optimizer(const Checkpoint& ckpt, Adam& opt, const std::string& prefix) {
    auto it = ckpt.counters.find(prefix + ".steps");
    if (it == ckpt.counters.end()) throw CheckpointError("checkpoint has no optimizer state '" + prefix + "'");
    AdamState s;
    s.steps = it->second;
    for (const auto& p : opt.params().items()) {
        const Tensor* m = ckpt.find(prefix + ".m." + p.name);
        const Tensor* v = ckpt.find(prefix + ".v." + p.name);
        if (!m || !v) throw CheckpointError("checkpoint has no optimizer moments for '" + p.name + "'");
        s.m.push_back(*m);
        s.v.push_back(*v);
    }
    try {
        opt.load_state(std::move(s));
    } catch (const std::invalid_argument& e) {
        throw CheckpointError(e.what());
    }
}

}  // namespace dlsr
