#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "dlsr/data.hpp"
#include "dlsr/image_io.hpp"
#include "test_support.hpp"

namespace dlsr {
namespace {

using testing::random_tensor;

Tensor ramp(int h, int w) {
    Tensor t({3, h, w});
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) t.at(c, y, x) = 0.01 * x + 0.02 * y + 0.1 * c;
    return t;
}

TEST(Bicubic, ConstantStaysConstant) {
    Tensor img({3, 12, 18}, 0.42);
    for (int s : {2, 3}) {
        Tensor lr = bicubic_downsample(img, s);
        EXPECT_EQ(lr.shape(), (Shape{3, 12 / s, 18 / s}));
        for (double v : lr.values()) EXPECT_NEAR(v, 0.42, 1e-12);
        for (double v : bicubic_upsample(lr, s).values()) EXPECT_NEAR(v, 0.42, 1e-12);
    }
}

TEST(Bicubic, ScaleOneIsIdentity) {
    Rng rng(1);
    Tensor img = random_tensor({3, 7, 9}, rng, 0.0, 1.0);
    EXPECT_EQ(max_abs_diff(bicubic_downsample(img, 1), img), 0.0);
}

TEST(Bicubic, MatchesDirectKernelSummation) {
    Rng rng(2);
    for (const Tensor& img : {ramp(16, 20), random_tensor({3, 12, 12}, rng, 0.0, 1.0)}) {
        for (int s : {2, 3, 4}) {
            if (img.dim(1) % s || img.dim(2) % s) continue;
            const Tensor lr = bicubic_downsample(img, s);
            EXPECT_LT(max_abs_diff(lr, testing::naive_bicubic(img, img.dim(1) / s, img.dim(2) / s)), 1e-6);
            const Tensor up = bicubic_upsample(lr, s);
            EXPECT_LT(max_abs_diff(up, testing::naive_bicubic(lr, lr.dim(1) * s, lr.dim(2) * s)), 1e-6);
        }
    }
}

TEST(Bicubic, RejectsIndivisibleDims) {
    EXPECT_THROW(bicubic_downsample(Tensor({3, 9, 8}), 2), std::invalid_argument);
}

TEST(Augment, IdentityAndInvolutions) {
    Rng rng(3);
    Tensor img = random_tensor({3, 5, 7}, rng);
    EXPECT_EQ(max_abs_diff(augment_image(img, 0), img), 0.0);
    EXPECT_EQ(max_abs_diff(augment_image(augment_image(img, 2), 2), img), 0.0);
    for (int flip : {4, 5, 6, 7}) EXPECT_EQ(max_abs_diff(augment_image(augment_image(img, flip), flip), img), 0.0);
    Tensor r = img;
    for (int i = 0; i < 4; ++i) r = augment_image(r, 1);
    EXPECT_EQ(max_abs_diff(r, img), 0.0);
    EXPECT_EQ(augment_image(img, 1).shape(), (Shape{3, 7, 5}));
    EXPECT_THROW(augment_image(img, 8), std::invalid_argument);
    EXPECT_THROW(augment_image(img, -1), std::invalid_argument);
}

TEST(Augment, EightDistinctElements) {
    Tensor img({1, 3, 3});
    for (int i = 0; i < 9; ++i) img[static_cast<std::size_t>(i)] = i;
    std::set<std::vector<double>> seen;
    for (int code = 0; code < 8; ++code) seen.insert(augment_image(img, code).storage());
    EXPECT_EQ(seen.size(), 8u);
    // Quarter turn is counter-clockwise: top-right corner moves to top-left.
    EXPECT_EQ(augment_image(img, 1).at(0, 0, 0), 2.0);
    EXPECT_EQ(augment_image(img, 4).at(0, 0, 0), 2.0);
}

TEST(Augment, CommutesWithDownsampling) {
    Rng rng(4);
    Tensor hr = random_tensor({3, 12, 16}, rng, 0.0, 1.0);
    SourceImage src = make_source("x", hr, 2);
    SRSample s{src.hr, src.lr, "x"};
    for (int code = 0; code < 8; ++code) {
        SRSample a = augment(s, code);
        EXPECT_LT(max_abs_diff(bicubic_downsample(a.hr_patch, 2), a.lr_patch), 1e-6) << code;
    }
}

TEST(Patches, SizesAlignmentAndFullCrop) {
    Rng rng(5);
    Tensor hr = random_tensor({3, 40, 36}, rng, 0.0, 1.0);
    SourceImage src = make_source("img", hr, 2);
    for (int trial = 0; trial < 50; ++trial) {
        SRSample s = sample_patch(src, 16, 2, rng);
        EXPECT_EQ(s.hr_patch.shape(), (Shape{3, 16, 16}));
        EXPECT_EQ(s.lr_patch.shape(), (Shape{3, 8, 8}));
        EXPECT_EQ(s.source_id, "img");
        // Locate the crop origin in the HR image; it must be a multiple of the scale and line up with the LR crop.
        bool found = false;
        for (int y = 0; y + 16 <= 40 && !found; ++y)
            for (int x = 0; x + 16 <= 36 && !found; ++x) {
                if (s.hr_patch.at(0, 0, 0) != hr.at(0, y, x) || s.hr_patch.at(1, 5, 7) != hr.at(1, y + 5, x + 7))
                    continue;
                found = true;
                EXPECT_EQ(y % 2, 0);
                EXPECT_EQ(x % 2, 0);
                EXPECT_EQ(s.lr_patch.at(2, 3, 4), src.lr.at(2, y / 2 + 3, x / 2 + 4));
            }
        EXPECT_TRUE(found);
    }
    SRSample full = sample_patch(src, 36, 2, rng);
    EXPECT_EQ(full.hr_patch.dim(2), 36);
    Rng other(99);
    SourceImage square = make_source("sq", random_tensor({3, 32, 32}, rng, 0.0, 1.0), 2);
    EXPECT_EQ(max_abs_diff(sample_patch(square, 32, 2, other).hr_patch, square.hr), 0.0);
    EXPECT_EQ(sample_patch(make_source("p", Tensor({3, 128, 128}, 0.5), 2), 64, 2, rng).lr_patch.dim(1), 32);
    EXPECT_THROW(sample_patch(src, 64, 2, rng), std::invalid_argument);
    EXPECT_THROW(sample_patch(src, 15, 2, rng), std::invalid_argument);
}

TEST(Source, ModCropsToScale) {
    SourceImage s = make_source("odd", Tensor({3, 13, 11}, 0.3), 3);
    EXPECT_EQ(s.hr.shape(), (Shape{3, 12, 9}));
    EXPECT_EQ(s.lr.shape(), (Shape{3, 4, 3}));
}

class BatchTest : public ::testing::Test {
protected:
    void SetUp() override { dataset = synthesize_dataset(5, 32, 32, 2, 11); }
    std::vector<SourceImage> dataset;
};

TEST_F(BatchTest, ShapesAndDeterminism) {
    BatchStream a = make_batches(dataset, 3, 16, 2, 7);
    BatchStream b = make_batches(dataset, 3, 16, 2, 7);
    BatchStream c = make_batches(dataset, 3, 16, 2, 8);
    bool differs = false;
    for (int i = 0; i < 10; ++i) {
        Batch x = a.next(), y = b.next(), z = c.next();
        EXPECT_EQ(x.hr.shape(), (Shape{3, 3, 16, 16}));
        EXPECT_EQ(x.lr.shape(), (Shape{3, 3, 8, 8}));
        EXPECT_EQ(x.hr.storage(), y.hr.storage());
        EXPECT_EQ(x.lr.storage(), y.lr.storage());
        differs = differs || x.hr.storage() != z.hr.storage();
    }
    EXPECT_TRUE(differs);
}

TEST_F(BatchTest, EachPassVisitsEveryImageOnce) {
    BatchStream s = make_batches(dataset, 1, 16, 2, 3);
    for (int pass = 0; pass < 4; ++pass) {
        std::multiset<std::size_t> seen;
        for (std::size_t i = 0; i < dataset.size(); ++i) {
            seen.insert(s.peek_index());
            s.next();
        }
        for (std::size_t i = 0; i < dataset.size(); ++i) EXPECT_EQ(seen.count(i), 1u) << "pass " << pass;
    }
}

TEST_F(BatchTest, StateRoundTrip) {
    BatchStream a = make_batches(dataset, 2, 16, 2, 5);
    for (int i = 0; i < 3; ++i) a.next();
    const std::string state = a.save_state();
    BatchStream b = make_batches(dataset, 2, 16, 2, 1234);
    b.load_state(state);
    for (int i = 0; i < 5; ++i) EXPECT_EQ(a.next().hr.storage(), b.next().hr.storage());
    EXPECT_THROW(b.load_state("garbage"), std::invalid_argument);
}

TEST_F(BatchTest, ValuesStayInUnitRange) {
    for (const auto& src : dataset) {
        for (double v : src.hr.values()) EXPECT_TRUE(v >= 0.0 && v <= 1.0);
        for (double v : src.lr.values()) EXPECT_TRUE(v >= 0.0 && v <= 1.0);
    }
    BatchStream s = make_batches(dataset, 4, 16, 2, 9);
    for (int i = 0; i < 5; ++i) {
        Batch b = s.next();
        for (double v : b.lr.values()) EXPECT_TRUE(v >= 0.0 && v <= 1.0);
    }
}

TEST(Synthetic, DeterministicUnderSeed) {
    auto a = synthesize_dataset(3, 24, 20, 2, 42);
    auto b = synthesize_dataset(3, 24, 20, 2, 42);
    ASSERT_EQ(a.size(), 3u);
    EXPECT_EQ(a[1].id, "synth_0001");
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(a[i].hr.storage(), b[i].hr.storage());
    EXPECT_NE(a[0].hr.storage(), synthesize_dataset(1, 24, 20, 2, 43)[0].hr.storage());
}

class ImageIoTest : public ::testing::Test {
protected:
    void SetUp() override { dir = testing::make_temp_dir("imageio"); }
    void TearDown() override { std::filesystem::remove_all(dir); }
    std::string dir;
};

Tensor quantized_image(Rng& rng, int h, int w) {
    Tensor t({3, h, w});
    std::uniform_int_distribution<int> d(0, 255);
    for (auto& v : t.values()) v = d(rng) / 255.0;
    return t;
}

TEST_F(ImageIoTest, PngRoundTrip) {
    Rng rng(6);
    Tensor img = quantized_image(rng, 9, 13);
    save_png(dir + "/a.png", img);
    EXPECT_LT(max_abs_diff(load_image(dir + "/a.png"), img), 1e-12);
}

void write_bmp24(const std::string& path, const Tensor& img, bool top_down) {
    const int h = img.dim(1), w = img.dim(2);
    const int row = (3 * w + 3) & ~3;
    std::vector<unsigned char> buf(54 + static_cast<std::size_t>(row * h), 0);
    auto put32 = [&](std::size_t off, std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf[off + static_cast<std::size_t>(i)] = static_cast<unsigned char>(v >> (8 * i));
    };
    buf[0] = 'B';
    buf[1] = 'M';
    put32(2, static_cast<std::uint32_t>(buf.size()));
    put32(10, 54);
    put32(14, 40);
    put32(18, static_cast<std::uint32_t>(w));
    put32(22, static_cast<std::uint32_t>(top_down ? -h : h));
    buf[26] = 1;
    buf[28] = 24;
    for (int y = 0; y < h; ++y) {
        const int file_row = top_down ? y : h - 1 - y;
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                buf[54 + static_cast<std::size_t>(file_row * row + 3 * x + (2 - c))] =
                    static_cast<unsigned char>(std::lround(img.at(c, y, x) * 255.0));
    }
    std::ofstream(path, std::ios::binary).write(reinterpret_cast<const char*>(buf.data()),
                                                static_cast<std::streamsize>(buf.size()));
}

TEST_F(ImageIoTest, BmpBothRowOrders) {
    Rng rng(7);
    Tensor img = quantized_image(rng, 5, 7);
    write_bmp24(dir + "/b.bmp", img, false);
    write_bmp24(dir + "/t.bmp", img, true);
    EXPECT_LT(max_abs_diff(load_image(dir + "/b.bmp"), img), 1e-12);
    EXPECT_LT(max_abs_diff(load_image(dir + "/t.bmp"), img), 1e-12);
}

TEST_F(ImageIoTest, DatasetFromDirectory) {
    Rng rng(8);
    save_png(dir + "/z.png", quantized_image(rng, 8, 10));
    save_png(dir + "/a.png", quantized_image(rng, 9, 9));
    std::ofstream(dir + "/notes.txt") << "ignored";
    auto files = list_images(dir);
    ASSERT_EQ(files.size(), 2u);
    auto ds = load_dataset(dir, 2);
    EXPECT_EQ(ds[0].id, "a");
    EXPECT_EQ(ds[0].hr.shape(), (Shape{3, 8, 8}));
    EXPECT_THROW(load_image(dir + "/notes.txt"), std::runtime_error);
    EXPECT_THROW(list_images(dir + "/missing"), std::runtime_error);
}

}  // namespace
}  // namespace dlsr
