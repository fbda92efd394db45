#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dlsr/layers.hpp"
#include "dlsr/tensor.hpp"

namespace dlsr {

// Images are CHW tensors with values in [0, 1].

// Separable bicubic (a = -0.5) resampling with edge clamping. When shrinking, the kernel is
// stretched by the scale factor (antialiasing) and weights renormalised.
Tensor bicubic_resize(const Tensor& img, int out_h, int out_w);
Tensor bicubic_downsample(const Tensor& img, int scale);
Tensor bicubic_upsample(const Tensor& img, int scale);

// Dihedral element: code % 4 quarter turns (counter-clockwise), then a horizontal flip if code >= 4.
Tensor augment_image(const Tensor& img, int code);

struct SourceImage {
    std::string id;
    Tensor hr;
    Tensor lr;  // bicubic_downsample(hr, scale), computed once
};

// Mod-crops hr to a multiple of scale and pre-computes the LR image.
SourceImage make_source(std::string id, Tensor hr, int scale);

struct SRSample {
    Tensor hr_patch;
    Tensor lr_patch;
    std::string source_id;
};

SRSample augment(const SRSample& sample, int code);

// Uniform random crop aligned to the LR grid; HR origin = LR origin * scale.
SRSample sample_patch(const SourceImage& src, int hr_patch_size, int scale, Rng& rng);

struct Batch {
    Tensor lr;  // [B, 3, p/s, p/s]
    Tensor hr;  // [B, 3, p, p]
};

// Seed-deterministic infinite stream: images are visited in shuffled passes, each
// draw takes a random aligned crop and a random dihedral augmentation.
class BatchStream {
public:
    BatchStream(const std::vector<SourceImage>* dataset, int batch_size, int hr_patch_size, int scale,
                std::uint64_t seed, bool augment = true);

    Batch next();
    // Index of the source image the next draw will use.
    std::size_t peek_index() const;

    std::string save_state() const;
    void load_state(const std::string& state);

private:
    std::size_t next_index();

    const std::vector<SourceImage>* dataset_;
    int batch_size_;
    int hr_patch_size_;
    int scale_;
    bool augment_;
    Rng rng_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
};

BatchStream make_batches(const std::vector<SourceImage>& dataset, int batch_size, int hr_patch_size, int scale,
                         std::uint64_t seed);

// Sorted list of PNG/BMP files in a directory.
std::vector<std::string> list_images(const std::string& dir);
std::vector<SourceImage> load_dataset(const std::string& hr_dir, int scale);

// Procedural toy images: rectangles, discs, stripes and gradients.
Tensor synthesize_image(int height, int width, Rng& rng);
std::vector<SourceImage> synthesize_dataset(int count, int height, int width, int scale, std::uint64_t seed);

}  // namespace dlsr
