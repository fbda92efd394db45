#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "dlsr/search_space.hpp"

namespace dlsr {

class GenotypeParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Discrete architecture: op triple per cell plus kept predecessor indices (0 = stem).
struct Genotype {
    std::vector<std::array<std::string, kMixedLayersPerCell>> cells;
    std::vector<std::vector<int>> connections;
    int channels = 48;
    int num_cells = 6;
    int scale = 2;

    void validate() const;
    bool operator==(const Genotype&) const = default;
};

// Argmax over alpha rows; top-2 (top-1 for cell 0) over beta; ties go to the lowest index.
Genotype extract_genotype(const ArchParams& arch, const SupernetConfig& cfg);

std::string serialize(const Genotype& g);
Genotype parse_genotype(const std::string& text);
Genotype load_genotype(const std::string& path);
void save_genotype(const Genotype& g, const std::string& path);

// Same op triple in every cell; connections default to {j-1, j} (top-2 of the latest predecessors).
Genotype uniform_genotype(const std::array<std::string, kMixedLayersPerCell>& ops, int channels, int num_cells,
                          int scale);

NetworkTopology derived_topology(const Genotype& g);
// cfg supplies distillation/ESA settings; channels, cells and scale come from the genotype.
SrNetwork build_derived_network(const Genotype& g, const SupernetConfig& cfg, std::uint64_t seed);
SupernetConfig config_for(const Genotype& g, SupernetConfig base = {});

// Total candidate-op parameter mass of the chosen ops.
std::int64_t candidate_op_params(const Genotype& g);

}  // namespace dlsr
