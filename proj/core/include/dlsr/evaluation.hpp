#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dlsr/complexity.hpp"
#include "dlsr/data.hpp"
#include "dlsr/losses.hpp"
#include "dlsr/search_space.hpp"
#include "dlsr/tensor.hpp"

namespace dlsr {

// BT.601 studio-swing luma of a [3,H,W] image in [0,1]; returns [1,H,W].
Tensor rgb_to_y(const Tensor& rgb);

// 10 log10(1 / MSE) over all channels after shaving `border_crop` pixels per side.
// Identical inputs give +infinity.
double psnr(const Tensor& a, const Tensor& b, int border_crop);

// Mean SSIM over the valid region: 11x11 Gaussian window (sigma 1.5), K1 0.01, K2 0.03, range 1.
// Inputs are single-channel ([1,H,W] or [H,W]).
double ssim(const Tensor& a, const Tensor& b);

// ||LoG(a) - LoG(b)||_2 / ||LoG(b)||_2 on single-channel images.
double hfen_metric(const Tensor& a, const Tensor& b, const LoGKernel& kernel = LoGKernel::make());

// Maps a CHW LR image to a CHW SR image.
using SrModel = std::function<Tensor(const Tensor&)>;

SrModel bicubic_model(int scale);
SrModel network_model(const SrNetwork& net);

struct ImageMetrics {
    std::string name;
    double psnr = 0.0;
    double ssim = 0.0;
    double hfen = 0.0;
};

struct EvalReport {
    std::string model;
    int scale = 2;
    std::vector<ImageMetrics> per_image;
    std::vector<std::string> skipped;  // "path: reason"
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
    double mean_hfen = 0.0;
    std::int64_t params = 0;
    std::int64_t multiadds = 0;  // at 720p HR
};

// Metrics on the Y channel of the clamped model output, border crop = scale.
EvalReport evaluate_images(const SrModel& model, const std::vector<SourceImage>& images, int scale,
                           std::string model_name = "model");
// Reads every PNG/BMP in hr_dir; unreadable files are skipped with a warning and listed in the report.
EvalReport evaluate_model(const SrModel& model, const std::string& hr_dir, int scale,
                          std::string model_name = "model");
// As above, with the network's complexity at 720p attached.
EvalReport evaluate_model(const SrNetwork& net, const std::string& hr_dir, std::string model_name = "model");

// 720p rounded down to a multiple of the scale (x3 does not divide 1280).
HrDims hr_dims_for_scale(int scale);

std::string report_to_json(const EvalReport& report);

struct ScatterEntry {
    std::string name;
    double params_k = 0.0;
    double multiadds_g = 0.0;
    double psnr_db = 0.0;
};

// CSV with header name,params_K,multiadds_G,psnr_dB; numbers use shortest round-trip formatting.
std::string scatter_csv(const std::vector<ScatterEntry>& entries);
void emit_scatter_data(const std::vector<ScatterEntry>& entries, const std::string& path);
std::vector<ScatterEntry> parse_scatter_csv(const std::string& text);
ScatterEntry scatter_entry(const EvalReport& report);

}  // namespace dlsr
