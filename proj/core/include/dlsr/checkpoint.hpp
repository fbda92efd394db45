#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dlsr/layers.hpp"
#include "dlsr/optim.hpp"
#include "dlsr/search_space.hpp"

namespace dlsr {

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

// On disk: "DLSRCKPT", u32 version, u64 header length, JSON header, then raw doubles per tensor.
struct Checkpoint {
    std::string kind;           // "search" or "train"
    std::int64_t step = 0;
    std::string config_json;    // resolved run configuration
    std::string genotype_json;  // canonical genotype text, empty for supernet checkpoints
    std::map<std::string, std::string> blobs;  // named text: batch-stream states, snapshots
    std::map<std::string, std::int64_t> counters;
    std::vector<std::pair<std::string, Tensor>> tensors;

    const Tensor* find(const std::string& name) const;
    void put(std::string name, Tensor t) { tensors.emplace_back(std::move(name), std::move(t)); }
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

void store_params(Checkpoint& ckpt, const ParamList& params, const std::string& prefix = {});
// Copies stored values into params. Missing tensors or shape mismatches throw CheckpointError naming the
// parameter; names accepted by `skip` are left untouched.
void restore_params(const Checkpoint& ckpt, const ParamList& params, const std::string& prefix = {},
                    const std::function<bool(const std::string&)>& skip = {});

// Network hyper-parameters are stored as "supernet.*" counters.
void store_supernet_config(Checkpoint& ckpt, const SupernetConfig& cfg);
SupernetConfig supernet_config_from(const Checkpoint& ckpt);

void store_optimizer(Checkpoint& ckpt, const Adam& opt, const std::string& prefix);
void restore_optimizer(const Checkpoint& ckpt, Adam& opt, const std::string& prefix);

}  // namespace dlsr
