#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dlsr/genotype.hpp"
#include "dlsr/search_space.hpp"

namespace dlsr {

struct HrDims {
    int height = 720;
    int width = 1280;
};

struct LayerCost {
    std::string name;
    std::int64_t params = 0;
    std::int64_t multiadds = 0;
};

struct ComplexityReport {
    std::int64_t total_params = 0;
    std::int64_t total_multiadds = 0;
    std::vector<LayerCost> per_layer;
    HrDims hr_dims;
    int scale = 2;
};

std::int64_t op_params(const OperationSpec& spec, int channels);
// Rejects hr dims not divisible by scale.
std::int64_t op_multiadds(const OperationSpec& spec, int channels, HrDims hr, int scale);

ComplexityReport network_complexity(const SupernetConfig& cfg, const NetworkTopology& topology, HrDims hr);
ComplexityReport genotype_complexity(const Genotype& g, const SupernetConfig& cfg, HrDims hr = {});
ComplexityReport supernet_complexity(const SupernetConfig& cfg, HrDims hr = {});

struct Cardinality {
    std::uint64_t per_cell_ops = 0;          // 9^3
    std::uint64_t factorial_convention = 0;  // 9^3 x (num_cells - 1)!
    std::uint64_t top2_convention = 0;       // 9^3 x prod_j C(j+1, 2)
};

Cardinality search_space_cardinality(const SupernetConfig& cfg);

std::string format_complexity_table(const ComplexityReport& report);

}  // namespace dlsr
