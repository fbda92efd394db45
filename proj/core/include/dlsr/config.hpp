#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dlsr/data.hpp"
#include "dlsr/losses.hpp"
#include "dlsr/search.hpp"
#include "dlsr/search_space.hpp"
#include "dlsr/trainer.hpp"

namespace dlsr {

struct DataConfig {
    std::string hr_dir;  // empty: use a synthetic dataset
    int scale = 2;
    int patch_size = 64;  // HR patch size used by the search
    double train_fraction = 0.8;
    std::uint64_t seed = 0;
    int synthetic_count = 20;
    int synthetic_size = 96;
};

// Everything a run needs. JSON sections: supernet, search, train, data, loss.
struct RunConfig {
    SupernetConfig supernet;
    SearchConfig search;
    TrainConfig train;
    DataConfig data;
    LossWeights loss;

    // Copies the data descriptor into the network and search settings, then validates every section.
    void resolve();
    // Uses one seed for data synthesis, splitting, search and training.
    void set_seed(std::uint64_t seed);
};

// Missing fields keep their defaults; unknown keys are rejected.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);
std::string to_json(const RunConfig& cfg);

// Loads hr_dir, or synthesises synthetic_count square images when hr_dir is empty.
std::vector<SourceImage> load_data(const DataConfig& data);

}  // namespace dlsr
