#include "dlsr/genotype.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "dlsr/complexity.hpp"

namespace dlsr {

void Genotype::validate() const {
    if (channels < 1) throw std::invalid_argument("genotype: channels must be positive");
    if (scale < 2 || scale > 4) throw std::invalid_argument("genotype: scale must be 2, 3 or 4");
    if (num_cells < 1) throw std::invalid_argument("genotype: num_cells must be positive");
    if (cells.size() != static_cast<std::size_t>(num_cells) || connections.size() != static_cast<std::size_t>(num_cells))
        throw std::invalid_argument("genotype: cells/connections length must equal num_cells");
    for (const auto& triple : cells)
        for (const auto& name : triple) operation_index(name);
    for (int j = 0; j < num_cells; ++j) {
        const auto& conn = connections[static_cast<std::size_t>(j)];
        const std::size_t expected = std::min<std::size_t>(2, static_cast<std::size_t>(j) + 1);
        if (conn.size() != expected)
            throw std::invalid_argument("genotype: cell " + std::to_string(j) + " must keep " +
                                        std::to_string(expected) + " connection(s)");
        for (std::size_t i = 0; i < conn.size(); ++i) {
            if (conn[i] < 0 || conn[i] > j)
                throw std::invalid_argument("genotype: cell " + std::to_string(j) + " has invalid predecessor " +
                                            std::to_string(conn[i]));
            if (i > 0 && conn[i] <= conn[i - 1])
                throw std::invalid_argument("genotype: connections must be sorted and unique");
        }
    }
}

Genotype extract_genotype(const ArchParams& arch, const SupernetConfig& cfg) {
    arch.validate(cfg);
    Genotype g;
    g.channels = cfg.channels;
    g.num_cells = cfg.num_cells;
    g.scale = cfg.scale;
    const Tensor& alpha = arch.alpha.value();
    const auto registry = operation_registry();
    for (int j = 0; j < cfg.num_cells; ++j) {
        std::array<std::string, kMixedLayersPerCell> triple;
        for (int s = 0; s < kMixedLayersPerCell; ++s) {
            const double* row = alpha.data() + static_cast<std::size_t>(j * kMixedLayersPerCell + s) * kNumOps;
            int best = 0;
            for (int o = 1; o < kNumOps; ++o)
                if (row[o] > row[best]) best = o;
            triple[static_cast<std::size_t>(s)] = std::string(registry[static_cast<std::size_t>(best)].name);
        }
        g.cells.push_back(triple);

        const Tensor& beta = arch.beta[static_cast<std::size_t>(j)].value();
        std::vector<int> order(beta.numel());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            return beta[static_cast<std::size_t>(a)] > beta[static_cast<std::size_t>(b)];
        });
        order.resize(std::min<std::size_t>(2, order.size()));
        std::sort(order.begin(), order.end());
        g.connections.push_back(order);
    }
    return g;
}

std::string serialize(const Genotype& g) {
    g.validate();
    std::ostringstream os;
    os << "{\n  \"cells\": [\n";
    for (std::size_t j = 0; j < g.cells.size(); ++j) {
        os << "    [";
        for (std::size_t s = 0; s < g.cells[j].size(); ++s) os << (s ? ", " : "") << '"' << g.cells[j][s] << '"';
        os << ']' << (j + 1 < g.cells.size() ? "," : "") << '\n';
    }
    os << "  ],\n  \"connections\": [\n";
    for (std::size_t j = 0; j < g.connections.size(); ++j) {
        os << "    [";
        for (std::size_t i = 0; i < g.connections[j].size(); ++i) os << (i ? ", " : "") << g.connections[j][i];
        os << ']' << (j + 1 < g.connections.size() ? "," : "") << '\n';
    }
    os << "  ],\n";
    os << "  \"channels\": " << g.channels << ",\n";
    os << "  \"num_cells\": " << g.num_cells << ",\n";
    os << "  \"scale\": " << g.scale << "\n}\n";
    return os.str();
}

Genotype parse_genotype(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw GenotypeParseError(std::string("genotype: malformed JSON: ") + e.what());
    }
    auto require = [&](const char* key) -> const nlohmann::json& {
        if (!doc.is_object() || !doc.contains(key))
            throw GenotypeParseError(std::string("genotype: missing field '") + key + "'");
        return doc.at(key);
    };
    Genotype g;
    try {
        g.channels = require("channels").get<int>();
        g.num_cells = require("num_cells").get<int>();
        g.scale = require("scale").get<int>();
        const auto& cells = require("cells");
        if (!cells.is_array()) throw GenotypeParseError("genotype: 'cells' must be an array");
        for (const auto& triple : cells) {
            if (!triple.is_array() || triple.size() != kMixedLayersPerCell)
                throw GenotypeParseError("genotype: each cell must list exactly 3 operations");
            std::array<std::string, kMixedLayersPerCell> ops;
            for (std::size_t s = 0; s < kMixedLayersPerCell; ++s) {
                if (!triple[s].is_string()) throw GenotypeParseError("genotype: operation names must be strings");
                ops[s] = triple[s].get<std::string>();
                try {
                    operation_index(ops[s]);
                } catch (const std::invalid_argument&) {
                    throw GenotypeParseError("genotype: unknown operation '" + ops[s] + "'");
                }
            }
            g.cells.push_back(ops);
        }
        const auto& conns = require("connections");
        if (!conns.is_array()) throw GenotypeParseError("genotype: 'connections' must be an array");
        for (const auto& c : conns) g.connections.push_back(c.get<std::vector<int>>());
    } catch (const nlohmann::json::exception& e) {
        throw GenotypeParseError(std::string("genotype: wrong field type: ") + e.what());
    }
    try {
        g.validate();
    } catch (const std::invalid_argument& e) {
        throw GenotypeParseError(e.what());
    }
    return g;
}

Genotype load_genotype(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open genotype file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_genotype(ss.str());
}

void save_genotype(const Genotype& g, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write genotype file '" + path + "'");
    out << serialize(g);
}

Genotype uniform_genotype(const std::array<std::string, kMixedLayersPerCell>& ops, int channels, int num_cells,
                          int scale) {
    Genotype g;
    g.channels = channels;
    g.num_cells = num_cells;
    g.scale = scale;
    for (int j = 0; j < num_cells; ++j) {
        g.cells.push_back(ops);
        if (j == 0)
            g.connections.push_back({0});
        else
            g.connections.push_back({j - 1, j});
    }
    g.validate();
    return g;
}

NetworkTopology derived_topology(const Genotype& g) {
    g.validate();
    NetworkTopology t;
    t.relaxed = false;
    for (int j = 0; j < g.num_cells; ++j) {
        std::array<std::vector<int>, kMixedLayersPerCell> stages;
        for (int s = 0; s < kMixedLayersPerCell; ++s)
            stages[static_cast<std::size_t>(s)] = {operation_index(g.cells[static_cast<std::size_t>(j)][static_cast<std::size_t>(s)])};
        t.cell_ops.push_back(stages);
        t.connections.push_back(g.connections[static_cast<std::size_t>(j)]);
    }
    return t;
}

SupernetConfig config_for(const Genotype& g, SupernetConfig base) {
    base.channels = g.channels;
    base.num_cells = g.num_cells;
    base.scale = g.scale;
    return base;
}

SrNetwork build_derived_network(const Genotype& g, const SupernetConfig& cfg, std::uint64_t seed) {
    return SrNetwork(config_for(g, cfg), derived_topology(g), seed);
}

std::int64_t candidate_op_params(const Genotype& g) {
    std::int64_t total = 0;
    for (const auto& triple : g.cells)
        for (const auto& name : triple) total += op_params(find_operation(name), g.channels);
    return total;
}

}  // namespace dlsr
