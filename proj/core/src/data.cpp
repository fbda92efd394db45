#include "dlsr/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "dlsr/image_io.hpp"

namespace dlsr {
namespace {

double cubic(double x) {
    constexpr double a = -0.5;
    const double ax = std::abs(x);
    if (ax <= 1.0) return ((a + 2.0) * ax - (a + 3.0)) * ax * ax + 1.0;
    if (ax < 2.0) return ((a * ax - 5.0 * a) * ax + 8.0 * a) * ax - 4.0 * a;
    return 0.0;
}

struct Taps {
    std::vector<int> index;
    std::vector<double> weight;
    int per_output = 0;
};

Taps resample_taps(int in, int out) {
    const double ratio = static_cast<double>(in) / out;
    const double stretch = ratio > 1.0 ? ratio : 1.0;
    const double half_width = 2.0 * stretch;
    const int count = static_cast<int>(std::ceil(2.0 * half_width)) + 2;
    Taps t;
    t.per_output = count;
    t.index.resize(static_cast<std::size_t>(out) * count);
    t.weight.resize(static_cast<std::size_t>(out) * count);
    for (int o = 0; o < out; ++o) {
        const double center = (o + 0.5) * ratio - 0.5;
        const int left = static_cast<int>(std::floor(center - half_width));
        double total = 0.0;
        for (int k = 0; k < count; ++k) {
            const int j = left + k;
            const double w = cubic((center - j) / stretch) / stretch;
            t.index[static_cast<std::size_t>(o) * count + k] = std::clamp(j, 0, in - 1);
            t.weight[static_cast<std::size_t>(o) * count + k] = w;
            total += w;
        }
        for (int k = 0; k < count; ++k) t.weight[static_cast<std::size_t>(o) * count + k] /= total;
    }
    return t;
}

void require_image(const Tensor& img, const char* op) {
    if (img.rank() != 3) throw std::invalid_argument(std::string(op) + ": expected CHW image, got " + shape_string(img.shape()));
}

}  // namespace

Tensor bicubic_resize(const Tensor& img, int out_h, int out_w) {
    require_image(img, "bicubic_resize");
    if (out_h < 1 || out_w < 1) throw std::invalid_argument("bicubic_resize: invalid output size");
    const int c = img.dim(0), h = img.dim(1), w = img.dim(2);
    const Taps th = resample_taps(h, out_h);
    const Taps tw = resample_taps(w, out_w);
    Tensor tmp({c, h, out_w});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < out_w; ++x) {
                double acc = 0.0;
                for (int k = 0; k < tw.per_output; ++k) {
                    const std::size_t t = static_cast<std::size_t>(x) * tw.per_output + k;
                    acc += tw.weight[t] * img.at(ch, y, tw.index[t]);
                }
                tmp.at(ch, y, x) = acc;
            }
    Tensor out({c, out_h, out_w});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < out_h; ++y)
            for (int x = 0; x < out_w; ++x) {
                double acc = 0.0;
                for (int k = 0; k < th.per_output; ++k) {
                    const std::size_t t = static_cast<std::size_t>(y) * th.per_output + k;
                    acc += th.weight[t] * tmp.at(ch, th.index[t], x);
                }
                out.at(ch, y, x) = acc;
            }
    return out;
}

Tensor bicubic_downsample(const Tensor& img, int scale) {
    require_image(img, "bicubic_downsample");
    if (scale < 1) throw std::invalid_argument("bicubic_downsample: scale must be >= 1");
    if (img.dim(1) % scale != 0 || img.dim(2) % scale != 0)
        throw std::invalid_argument("bicubic_downsample: dims " + shape_string(img.shape()) +
                                    " not divisible by scale " + std::to_string(scale));
    if (scale == 1) return img;
    return bicubic_resize(img, img.dim(1) / scale, img.dim(2) / scale);
}

Tensor bicubic_upsample(const Tensor& img, int scale) {
    require_image(img, "bicubic_upsample");
    if (scale < 1) throw std::invalid_argument("bicubic_upsample: scale must be >= 1");
    if (scale == 1) return img;
    return bicubic_resize(img, img.dim(1) * scale, img.dim(2) * scale);
}

Tensor augment_image(const Tensor& img, int code) {
    require_image(img, "augment");
    if (code < 0 || code > 7) throw std::invalid_argument("augment: code must be in 0..7, got " + std::to_string(code));
    Tensor cur = img;
    for (int q = 0; q < code % 4; ++q) {
        const int c = cur.dim(0), h = cur.dim(1), w = cur.dim(2);
        Tensor rot({c, w, h});
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < w; ++y)
                for (int x = 0; x < h; ++x) rot.at(ch, y, x) = cur.at(ch, x, w - 1 - y);
        cur = std::move(rot);
    }
    if (code >= 4) {
        const int c = cur.dim(0), h = cur.dim(1), w = cur.dim(2);
        Tensor flip({c, h, w});
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) flip.at(ch, y, x) = cur.at(ch, y, w - 1 - x);
        cur = std::move(flip);
    }
    return cur;
}

SourceImage make_source(std::string id, Tensor hr, int scale) {
    require_image(hr, "make_source");
    const int h = hr.dim(1) - hr.dim(1) % scale;
    const int w = hr.dim(2) - hr.dim(2) % scale;
    if (h < scale || w < scale) throw std::invalid_argument("image '" + id + "' smaller than the scale factor");
    if (h != hr.dim(1) || w != hr.dim(2)) {
        Tensor cropped({hr.dim(0), h, w});
        for (int c = 0; c < hr.dim(0); ++c)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) cropped.at(c, y, x) = hr.at(c, y, x);
        hr = std::move(cropped);
    }
    Tensor lr = bicubic_downsample(hr, scale);
    for (double& v : lr.values()) v = std::clamp(v, 0.0, 1.0);
    return {std::move(id), std::move(hr), std::move(lr)};
}

SRSample augment(const SRSample& sample, int code) {
    return {augment_image(sample.hr_patch, code), augment_image(sample.lr_patch, code), sample.source_id};
}

namespace {
Tensor crop(const Tensor& img, int y0, int x0, int h, int w) {
    Tensor out({img.dim(0), h, w});
    for (int c = 0; c < img.dim(0); ++c)
        for (int y = 0; y < h; ++y) {
            const double* src = &img.at(c, y0 + y, x0);
            std::copy(src, src + w, &out.at(c, y, 0));
        }
    return out;
}
}  // namespace

SRSample sample_patch(const SourceImage& src, int hr_patch_size, int scale, Rng& rng) {
    if (hr_patch_size < scale || hr_patch_size % scale != 0)
        throw std::invalid_argument("patch size " + std::to_string(hr_patch_size) + " not divisible by scale " +
                                    std::to_string(scale));
    const int lp = hr_patch_size / scale;
    if (src.lr.dim(1) < lp || src.lr.dim(2) < lp)
        throw std::invalid_argument("image '" + src.id + "' " + shape_string(src.hr.shape()) + " smaller than patch " +
                                    std::to_string(hr_patch_size));
    std::uniform_int_distribution<int> dy(0, src.lr.dim(1) - lp);
    std::uniform_int_distribution<int> dx(0, src.lr.dim(2) - lp);
    const int ly = dy(rng);
    const int lx = dx(rng);
    return {crop(src.hr, ly * scale, lx * scale, hr_patch_size, hr_patch_size), crop(src.lr, ly, lx, lp, lp), src.id};
}

BatchStream::BatchStream(const std::vector<SourceImage>* dataset, int batch_size, int hr_patch_size, int scale,
                         std::uint64_t seed, bool augment)
    : dataset_(dataset), batch_size_(batch_size), hr_patch_size_(hr_patch_size), scale_(scale), augment_(augment),
      rng_(seed) {
    if (!dataset_ || dataset_->empty()) throw std::invalid_argument("batch stream: dataset is empty");
    if (batch_size_ < 1) throw std::invalid_argument("batch stream: batch size must be positive");
}

std::size_t BatchStream::next_index() {
    if (cursor_ >= order_.size()) {
        order_.resize(dataset_->size());
        for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
        std::shuffle(order_.begin(), order_.end(), rng_);
        cursor_ = 0;
    }
    return order_[cursor_++];
}

std::size_t BatchStream::peek_index() const {
    if (cursor_ < order_.size()) return order_[cursor_];
    BatchStream copy = *this;
    return copy.next_index();
}

Batch BatchStream::next() {
    std::vector<Tensor> lr, hr;
    std::uniform_int_distribution<int> code(0, 7);
    for (int b = 0; b < batch_size_; ++b) {
        const SourceImage& src = (*dataset_)[next_index()];
        SRSample s = sample_patch(src, hr_patch_size_, scale_, rng_);
        if (augment_) s = augment(s, code(rng_));
        lr.push_back(std::move(s.lr_patch));
        hr.push_back(std::move(s.hr_patch));
    }
    return {stack_samples(lr), stack_samples(hr)};
}

std::string BatchStream::save_state() const {
    std::ostringstream os;
    os << rng_ << ' ' << cursor_ << ' ' << order_.size();
    for (std::size_t i : order_) os << ' ' << i;
    return os.str();
}

void BatchStream::load_state(const std::string& state) {
    std::istringstream is(state);
    std::size_t n = 0;
    is >> rng_ >> cursor_ >> n;
    order_.assign(n, 0);
    for (std::size_t& i : order_) is >> i;
    if (!is) throw std::invalid_argument("batch stream: corrupt state");
    for (std::size_t i : order_)
        if (i >= dataset_->size()) throw std::invalid_argument("batch stream: state does not match dataset");
}

BatchStream make_batches(const std::vector<SourceImage>& dataset, int batch_size, int hr_patch_size, int scale,
                         std::uint64_t seed) {
    return BatchStream(&dataset, batch_size, hr_patch_size, scale, seed);
}

std::vector<std::string> list_images(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: '" + dir + "'");
    std::vector<std::string> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        std::string ext = e.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
        if (ext == ".png" || ext == ".bmp") out.push_back(e.path().string());
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<SourceImage> load_dataset(const std::string& hr_dir, int scale) {
    std::vector<SourceImage> out;
    for (const auto& path : list_images(hr_dir))
        out.push_back(make_source(std::filesystem::path(path).stem().string(), load_image(path), scale));
    if (out.empty()) throw std::runtime_error("no PNG/BMP images in '" + hr_dir + "'");
    return out;
}

Tensor synthesize_image(int height, int width, Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Tensor img({3, height, width});
    // gradient background
    double c0[3], c1[3];
    for (int c = 0; c < 3; ++c) {
        c0[c] = u(rng);
        c1[c] = u(rng);
    }
    const double angle = u(rng) * 2.0 * std::numbers::pi;
    const double gx = std::cos(angle), gy = std::sin(angle);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            double t = 0.5 + 0.5 * (gx * (x / static_cast<double>(width) - 0.5) + gy * (y / static_cast<double>(height) - 0.5));
            t = std::clamp(t, 0.0, 1.0);
            for (int c = 0; c < 3; ++c) img.at(c, y, x) = c0[c] * (1 - t) + c1[c] * t;
        }

    std::uniform_int_distribution<int> shape_count(4, 9);
    const int shapes = shape_count(rng);
    for (int s = 0; s < shapes; ++s) {
        double col[3];
        for (double& v : col) v = u(rng);
        const int kind = static_cast<int>(u(rng) * 3.0);
        const double cx = u(rng) * width, cy = u(rng) * height;
        const double rx = (0.08 + 0.3 * u(rng)) * width, ry = (0.08 + 0.3 * u(rng)) * height;
        const double period = 6.0 + 10.0 * u(rng);
        const double sa = u(rng) * std::numbers::pi;
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) {
                const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
                bool inside = false;
                if (kind == 0) {
                    inside = std::abs(dx) < rx && std::abs(dy) < ry;
                } else if (kind == 1) {
                    inside = (dx * dx) / (rx * rx) + (dy * dy) / (ry * ry) < 1.0;
                } else {
                    // striped patch
                    const double proj = dx * std::cos(sa) + dy * std::sin(sa);
                    inside = std::abs(dx) < rx && std::abs(dy) < ry &&
                             std::fmod(std::abs(proj), period) < period / 2.0;
                }
                if (inside)
                    for (int c = 0; c < 3; ++c) img.at(c, y, x) = col[c];
            }
    }
    return img;
}

std::vector<SourceImage> synthesize_dataset(int count, int height, int width, int scale, std::uint64_t seed) {
    if (count < 1) throw std::invalid_argument("synthetic dataset needs at least one image");
    Rng rng(seed);
    std::vector<SourceImage> out;
    for (int i = 0; i < count; ++i) {
        char id[32];
        std::snprintf(id, sizeof id, "synth_%04d", i);
        out.push_back(make_source(id, synthesize_image(height, width, rng), scale));
    }
    return out;
}

}  // namespace dlsr
