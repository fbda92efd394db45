#include "dlsr/complexity.hpp"

#include <algorithm>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace dlsr {
namespace {

struct Grid {
    std::int64_t h, w;
    std::int64_t area() const { return h * w; }
};

class ReportBuilder {
public:
    explicit ReportBuilder(ComplexityReport& r) : r_(r) {}

    void conv(const std::string& name, std::int64_t cin, std::int64_t cout, std::int64_t k, bool bias, Grid out,
              std::int64_t groups = 1) {
        const std::int64_t weights = (cin / groups) * cout * k * k;
        add(name, weights + (bias ? cout : 0), weights * out.area());
    }

    void add(const std::string& name, std::int64_t params, std::int64_t multiadds) {
        r_.per_layer.push_back({name, params, multiadds});
        r_.total_params += params;
        r_.total_multiadds += multiadds;
    }

private:
    ComplexityReport& r_;
};

std::int64_t valid_out(std::int64_t n, std::int64_t k, std::int64_t stride) { return (n - k) / stride + 1; }

std::int64_t pooled(std::int64_t n, std::int64_t k, std::int64_t stride) {
    return n <= k ? 1 : (n - k) / stride + 1;
}

Grid lr_grid(HrDims hr, int scale) {
    if (hr.height <= 0 || hr.width <= 0) throw std::invalid_argument("hr dims must be positive");
    if (hr.height % scale != 0 || hr.width % scale != 0)
        throw std::invalid_argument("hr dims " + std::to_string(hr.height) + "x" + std::to_string(hr.width) +
                                    " not divisible by scale " + std::to_string(scale));
    return {hr.height / scale, hr.width / scale};
}

std::uint64_t checked_mul(std::uint64_t a, std::uint64_t b) {
    if (b != 0 && a > std::numeric_limits<std::uint64_t>::max() / b)
        throw std::overflow_error("search space cardinality overflows 64 bits");
    return a * b;
}

}  // namespace

std::int64_t op_params(const OperationSpec& spec, int channels) {
    const std::int64_t c = channels;
    const std::int64_t k2 = static_cast<std::int64_t>(spec.kernel) * spec.kernel;
    switch (spec.kind) {
        case OpKind::plain: return k2 * c * c;
        case OpKind::separable: return 2 * (k2 * c + c * c);
        case OpKind::dilated: return k2 * c + c * c;
    }
    return 0;
}

std::int64_t op_multiadds(const OperationSpec& spec, int channels, HrDims hr, int scale) {
    return op_params(spec, channels) * lr_grid(hr, scale).area();
}

ComplexityReport network_complexity(const SupernetConfig& cfg, const NetworkTopology& topology, HrDims hr) {
    cfg.validate();
    ComplexityReport report;
    report.hr_dims = hr;
    report.scale = cfg.scale;
    ReportBuilder b(report);

    const Grid lr = lr_grid(hr, cfg.scale);
    const std::int64_t c = cfg.channels;
    const std::int64_t d = cfg.distilled_channels();
    const std::int64_t f = cfg.esa_channels();
    if (lr.h < 3 || lr.w < 3) throw std::invalid_argument("LR grid too small for ESA");
    const Grid g1{valid_out(lr.h, 3, 2), valid_out(lr.w, 3, 2)};
    const Grid gp{pooled(g1.h, 7, 3), pooled(g1.w, 7, 3)};

    b.conv("stem", 3, c, 3, true, lr);
    for (int j = 0; j < cfg.num_cells; ++j) {
        const std::string cell = "cells." + std::to_string(j) + ".";
        const auto fan = static_cast<std::int64_t>(topology.connections.at(static_cast<std::size_t>(j)).size());
        b.conv("aggregators." + std::to_string(j), fan * c, c, 1, true, lr);
        const auto& stages = topology.cell_ops.at(static_cast<std::size_t>(j));
        for (int s = 0; s < kMixedLayersPerCell; ++s) {
            b.conv(cell + "distill" + std::to_string(s + 1), c, d, 1, true, lr);
            for (int op : stages[static_cast<std::size_t>(s)]) {
                const OperationSpec& spec = operation_registry()[static_cast<std::size_t>(op)];
                const std::int64_t p = op_params(spec, cfg.channels);
                b.add(cell + "mrb" + std::to_string(s + 1) + "." + std::string(spec.name), p, p * lr.area());
            }
        }
        b.conv(cell + "distill4", c, d, cfg.stage4_kernel, true, lr);
        b.conv(cell + "fuse", 4 * d, c, 1, true, lr);
        b.conv(cell + "esa.conv1", c, f, 1, true, lr);
        b.conv(cell + "esa.conv_f", f, f, 1, true, lr);
        b.conv(cell + "esa.conv2", f, f, 3, true, g1);
        b.conv(cell + "esa.conv_max", f, f, 3, true, gp);
        b.conv(cell + "esa.conv3", f, f, 3, true, gp);
        b.conv(cell + "esa.conv3b", f, f, 3, true, gp);
        b.conv(cell + "esa.conv4", f, c, 1, true, lr);
    }
    b.conv("fusion.reduce", static_cast<std::int64_t>(cfg.num_cells) * c, c, 1, true, lr);
    b.conv("fusion.smooth", c, c, 3, true, lr);
    b.conv("tail.upsample", c, 3LL * cfg.scale * cfg.scale, 3, true, lr);
    return report;
}

ComplexityReport genotype_complexity(const Genotype& g, const SupernetConfig& cfg, HrDims hr) {
    g.validate();
    const SupernetConfig resolved = config_for(g, cfg);
    return network_complexity(resolved, derived_topology(g), hr);
}

ComplexityReport supernet_complexity(const SupernetConfig& cfg, HrDims hr) {
    return network_complexity(cfg, NetworkTopology::full(cfg.num_cells), hr);
}

Cardinality search_space_cardinality(const SupernetConfig& cfg) {
    if (cfg.num_cells < 1) throw std::invalid_argument("num_cells must be >= 1");
    Cardinality out;
    out.per_cell_ops = static_cast<std::uint64_t>(kNumOps) * kNumOps * kNumOps;
    std::uint64_t factorial = 1;
    for (int k = 2; k <= cfg.num_cells - 1; ++k) factorial = checked_mul(factorial, static_cast<std::uint64_t>(k));
    out.factorial_convention = checked_mul(out.per_cell_ops, factorial);
    std::uint64_t choices = 1;
    for (int j = 1; j < cfg.num_cells; ++j) {
        const std::uint64_t preds = static_cast<std::uint64_t>(j) + 1;
        choices = checked_mul(choices, preds * (preds - 1) / 2);
    }
    out.top2_convention = checked_mul(out.per_cell_ops, choices);
    return out;
}

std::string format_complexity_table(const ComplexityReport& report) {
    std::size_t width = 5;
    for (const auto& l : report.per_layer) width = std::max(width, l.name.size());
    std::ostringstream os;
    os << std::left << std::setw(static_cast<int>(width)) << "layer" << "  " << std::right << std::setw(12)
       << "params" << "  " << std::setw(16) << "multi-adds" << '\n';
    os << std::string(width + 32, '-') << '\n';
    for (const auto& l : report.per_layer)
        os << std::left << std::setw(static_cast<int>(width)) << l.name << "  " << std::right << std::setw(12)
           << l.params << "  " << std::setw(16) << l.multiadds << '\n';
    os << std::string(width + 32, '-') << '\n';
    os << std::left << std::setw(static_cast<int>(width)) << "total" << "  " << std::right << std::setw(12)
       << report.total_params << "  " << std::setw(16) << report.total_multiadds << '\n';
    os << std::fixed << std::setprecision(1) << "params " << report.total_params / 1000.0 << " K, multi-adds "
       << std::setprecision(2) << report.total_multiadds / 1e9 << " G at " << report.hr_dims.width << 'x'
       << report.hr_dims.height << " (x" << report.scale << ")\n";
    return os.str();
}

}  // namespace dlsr
