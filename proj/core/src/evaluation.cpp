#include "dlsr/evaluation.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "dlsr/image_io.hpp"

namespace dlsr {
namespace {

struct Plane {
    int h = 0;
    int w = 0;
    const double* data = nullptr;
};

Plane single_channel(const Tensor& t, const char* op) {
    if (t.rank() == 2) return {t.dim(0), t.dim(1), t.data()};
    if (t.rank() == 3 && t.dim(0) == 1) return {t.dim(1), t.dim(2), t.data()};
    throw std::invalid_argument(std::string(op) + ": expected a single-channel image, got " + shape_string(t.shape()));
}

std::vector<double> gaussian_window(int size, double sigma) {
    std::vector<double> g(size);
    double total = 0.0;
    for (int i = 0; i < size; ++i) {
        const double d = i - (size - 1) / 2.0;
        g[i] = std::exp(-d * d / (2.0 * sigma * sigma));
        total += g[i];
    }
    for (double& v : g) v /= total;
    return g;
}

// Valid-region separable filtering of an h x w plane.
std::vector<double> filter_valid(const std::vector<double>& in, int h, int w, const std::vector<double>& g) {
    const int k = static_cast<int>(g.size());
    const int oh = h - k + 1, ow = w - k + 1;
    std::vector<double> tmp(static_cast<std::size_t>(h) * ow);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < k; ++i) acc += g[i] * in[static_cast<std::size_t>(y) * w + x + i];
            tmp[static_cast<std::size_t>(y) * ow + x] = acc;
        }
    std::vector<double> out(static_cast<std::size_t>(oh) * ow);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < k; ++i) acc += g[i] * tmp[static_cast<std::size_t>(y + i) * ow + x];
            out[static_cast<std::size_t>(y) * ow + x] = acc;
        }
    return out;
}

std::string format_double(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (std::isnan(v)) return "nan";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

nlohmann::json number_or_sentinel(double v) {
    if (std::isfinite(v)) return v;
    return format_double(v);
}

Tensor clamp01(Tensor t) {
    for (double& v : t.values()) v = std::clamp(v, 0.0, 1.0);
    return t;
}

void finalize(EvalReport& r) {
    const double n = static_cast<double>(r.per_image.size());
    r.mean_psnr = r.mean_ssim = r.mean_hfen = 0.0;
    if (r.per_image.empty()) return;
    for (const auto& m : r.per_image) {
        r.mean_psnr += m.psnr;
        r.mean_ssim += m.ssim;
        r.mean_hfen += m.hfen;
    }
    r.mean_psnr /= n;
    r.mean_ssim /= n;
    r.mean_hfen /= n;
}

ImageMetrics measure(const SrModel& model, const SourceImage& src, int scale, const LoGKernel& kernel) {
    const Tensor sr = clamp01(model(src.lr));
    if (sr.shape() != src.hr.shape())
        throw std::runtime_error("model output " + shape_string(sr.shape()) + " does not match HR " +
                                 shape_string(src.hr.shape()));
    const Tensor ys = rgb_to_y(sr);
    const Tensor yh = rgb_to_y(src.hr);
    return {src.id, psnr(ys, yh, scale), ssim(ys, yh), hfen_metric(ys, yh, kernel)};
}

}  // namespace

Tensor rgb_to_y(const Tensor& rgb) {
    if (rgb.rank() != 3 || rgb.dim(0) != 3)
        throw std::invalid_argument("rgb_to_y: expected [3,H,W], got " + shape_string(rgb.shape()));
    const int h = rgb.dim(1), w = rgb.dim(2);
    Tensor y({1, h, w});
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            y.at(0, i, j) =
                (65.481 * rgb.at(0, i, j) + 128.553 * rgb.at(1, i, j) + 24.966 * rgb.at(2, i, j) + 16.0) / 255.0;
    return y;
}

double psnr(const Tensor& a, const Tensor& b, int border_crop) {
    if (a.shape() != b.shape())
        throw std::invalid_argument("psnr: shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
    if (a.rank() != 3) throw std::invalid_argument("psnr: expected CHW images");
    const int c = a.dim(0), h = a.dim(1), w = a.dim(2);
    if (border_crop < 0 || 2 * border_crop >= std::min(h, w))
        throw std::invalid_argument("psnr: border crop " + std::to_string(border_crop) + " too large for " +
                                    shape_string(a.shape()));
    double sse = 0.0;
    std::size_t count = 0;
    for (int ch = 0; ch < c; ++ch)
        for (int y = border_crop; y < h - border_crop; ++y)
            for (int x = border_crop; x < w - border_crop; ++x) {
                const double d = a.at(ch, y, x) - b.at(ch, y, x);
                sse += d * d;
                ++count;
            }
    const double mse = sse / static_cast<double>(count);
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

double ssim(const Tensor& a, const Tensor& b) {
    const Plane pa = single_channel(a, "ssim");
    const Plane pb = single_channel(b, "ssim");
    if (pa.h != pb.h || pa.w != pb.w) throw std::invalid_argument("ssim: shape mismatch");
    constexpr int kWin = 11;
    if (pa.h < kWin || pa.w < kWin)
        throw std::invalid_argument("ssim: image " + std::to_string(pa.h) + "x" + std::to_string(pa.w) +
                                    " smaller than the 11x11 window");
    const std::size_t n = static_cast<std::size_t>(pa.h) * pa.w;
    std::vector<double> va(pa.data, pa.data + n), vb(pb.data, pb.data + n), aa(n), bb(n), ab(n);
    for (std::size_t i = 0; i < n; ++i) {
        aa[i] = va[i] * va[i];
        bb[i] = vb[i] * vb[i];
        ab[i] = va[i] * vb[i];
    }
    const auto g = gaussian_window(kWin, 1.5);
    const auto mu_a = filter_valid(va, pa.h, pa.w, g);
    const auto mu_b = filter_valid(vb, pa.h, pa.w, g);
    const auto e_aa = filter_valid(aa, pa.h, pa.w, g);
    const auto e_bb = filter_valid(bb, pa.h, pa.w, g);
    const auto e_ab = filter_valid(ab, pa.h, pa.w, g);
    constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    double total = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
        const double ma = mu_a[i], mb = mu_b[i];
        const double var_a = e_aa[i] - ma * ma;
        const double var_b = e_bb[i] - mb * mb;
        const double cov = e_ab[i] - ma * mb;
        total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
    }
    return total / static_cast<double>(mu_a.size());
}

double hfen_metric(const Tensor& a, const Tensor& b, const LoGKernel& kernel) {
    const Plane pa = single_channel(a, "hfen");
    const Plane pb = single_channel(b, "hfen");
    if (pa.h != pb.h || pa.w != pb.w) throw std::invalid_argument("hfen: shape mismatch");
    const Tensor la = log_filter(ag::constant(a.reshaped({1, 1, pa.h, pa.w})), kernel).value();
    const Tensor lb = log_filter(ag::constant(b.reshaped({1, 1, pb.h, pb.w})), kernel).value();
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < la.numel(); ++i) {
        num += (la[i] - lb[i]) * (la[i] - lb[i]);
        den += lb[i] * lb[i];
    }
    if (den == 0.0) return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return std::sqrt(num / den);
}

SrModel bicubic_model(int scale) {
    return [scale](const Tensor& lr) { return bicubic_upsample(lr, scale); };
}

SrModel network_model(const SrNetwork& net) {
    return [&net](const Tensor& lr) { return net.upscale(lr); };
}

EvalReport evaluate_images(const SrModel& model, const std::vector<SourceImage>& images, int scale,
                           std::string model_name) {
    EvalReport r;
    r.model = std::move(model_name);
    r.scale = scale;
    const LoGKernel kernel = LoGKernel::make();
    for (const auto& src : images) r.per_image.push_back(measure(model, src, scale, kernel));
    finalize(r);
    return r;
}

EvalReport evaluate_model(const SrModel& model, const std::string& hr_dir, int scale, std::string model_name) {
    EvalReport r;
    r.model = std::move(model_name);
    r.scale = scale;
    const LoGKernel kernel = LoGKernel::make();
    for (const auto& path : list_images(hr_dir)) {
        SourceImage src;
        try {
            src = make_source(std::filesystem::path(path).stem().string(), load_image(path), scale);
        } catch (const std::exception& e) {
            std::cerr << "warning: skipping " << path << ": " << e.what() << '\n';
            r.skipped.push_back(path + ": " + e.what());
            continue;
        }
        r.per_image.push_back(measure(model, src, scale, kernel));
    }
    finalize(r);
    return r;
}

HrDims hr_dims_for_scale(int scale) {
    HrDims d;
    d.height -= d.height % scale;
    d.width -= d.width % scale;
    return d;
}

EvalReport evaluate_model(const SrNetwork& net, const std::string& hr_dir, std::string model_name) {
    EvalReport r = evaluate_model(network_model(net), hr_dir, net.config().scale, std::move(model_name));
    const ComplexityReport c =
        network_complexity(net.config(), net.topology(), hr_dims_for_scale(net.config().scale));
    r.params = c.total_params;
    r.multiadds = c.total_multiadds;
    return r;
}

std::string report_to_json(const EvalReport& r) {
    nlohmann::ordered_json j;
    j["model"] = r.model;
    j["scale"] = r.scale;
    j["params"] = r.params;
    j["multiadds_720p"] = r.multiadds;
    j["mean"] = {{"psnr", number_or_sentinel(r.mean_psnr)},
                 {"ssim", number_or_sentinel(r.mean_ssim)},
                 {"hfen", number_or_sentinel(r.mean_hfen)}};
    auto images = nlohmann::ordered_json::array();
    for (const auto& m : r.per_image)
        images.push_back({{"name", m.name},
                          {"psnr", number_or_sentinel(m.psnr)},
                          {"ssim", number_or_sentinel(m.ssim)},
                          {"hfen", number_or_sentinel(m.hfen)}});
    j["images"] = images;
    j["skipped"] = r.skipped;
    return j.dump(2) + "\n";
}

std::string scatter_csv(const std::vector<ScatterEntry>& entries) {
    if (entries.empty()) throw std::invalid_argument("scatter data needs at least one entry");
    std::ostringstream os;
    os << "name,params_K,multiadds_G,psnr_dB\n";
    for (const auto& e : entries) {
        if (e.name.find_first_of(",\n\"") != std::string::npos)
            throw std::invalid_argument("scatter entry name '" + e.name + "' contains a CSV delimiter");
        os << e.name << ',' << format_double(e.params_k) << ',' << format_double(e.multiadds_g) << ','
           << format_double(e.psnr_db) << '\n';
    }
    return os.str();
}

void emit_scatter_data(const std::vector<ScatterEntry>& entries, const std::string& path) {
    const std::string text = scatter_csv(entries);
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << text;
}

std::vector<ScatterEntry> parse_scatter_csv(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line) || line != "name,params_K,multiadds_G,psnr_dB")
        throw std::invalid_argument("scatter CSV: unexpected header");
    auto parse_num = [](const std::string& s) {
        if (s == "inf") return std::numeric_limits<double>::infinity();
        double v = 0.0;
        auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (res.ec != std::errc() || res.ptr != s.data() + s.size())
            throw std::invalid_argument("scatter CSV: bad number '" + s + "'");
        return v;
    };
    std::vector<ScatterEntry> out;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cols;
        std::stringstream ls(line);
        std::string col;
        while (std::getline(ls, col, ',')) cols.push_back(col);
        if (cols.size() != 4) throw std::invalid_argument("scatter CSV: expected 4 columns in '" + line + "'");
        out.push_back({cols[0], parse_num(cols[1]), parse_num(cols[2]), parse_num(cols[3])});
    }
    return out;
}

ScatterEntry scatter_entry(const EvalReport& report) {
    return {report.model, report.params / 1e3, report.multiadds / 1e9, report.mean_psnr};
}

}  // namespace dlsr
