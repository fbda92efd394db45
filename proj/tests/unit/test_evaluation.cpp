#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "dlsr/evaluation.hpp"
#include "dlsr/genotype.hpp"
#include "dlsr/image_io.hpp"
#include "test_support.hpp"

namespace dlsr {
namespace {

using testing::random_tensor;

Tensor plane(Rng& rng, int h, int w) { return random_tensor({1, h, w}, rng, 0.0, 1.0); }

Tensor noisy(const Tensor& a, double amplitude, Rng& rng) {
    Tensor out = a;
    std::normal_distribution<double> n(0.0, amplitude);
    for (auto& v : out.values()) v += n(rng);
    return out;
}

TEST(Luma, StudioSwingEndpointsAndCoefficients) {
    EXPECT_DOUBLE_EQ(rgb_to_y(Tensor({3, 1, 1}, 0.0))[0], 16.0 / 255.0);
    EXPECT_NEAR(rgb_to_y(Tensor({3, 1, 1}, 1.0))[0], 235.0 / 255.0, 1e-4);
    Rng rng(1);
    Tensor img = random_tensor({3, 4, 5}, rng, 0.0, 1.0);
    Tensor y = rgb_to_y(img);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 5; ++j) {
            const double r = img.at(0, i, j), g = img.at(1, i, j), b = img.at(2, i, j);
            EXPECT_NEAR(y.at(0, i, j), (16.0 + 65.481 * r + 128.553 * g + 24.966 * b) / 255.0, 1e-7);
        }
    EXPECT_THROW(rgb_to_y(Tensor({1, 4, 4})), std::invalid_argument);
}

TEST(Psnr, Examples) {
    Rng rng(2);
    Tensor a = plane(rng, 12, 12);
    EXPECT_TRUE(std::isinf(psnr(a, a, 2)));
    EXPECT_NEAR(psnr(Tensor({1, 8, 8}, 0.0), Tensor({1, 8, 8}, 0.1), 0), 20.0, 1e-9);
    EXPECT_THROW(psnr(a, a, 6), std::invalid_argument);
    EXPECT_THROW(psnr(a, Tensor({1, 12, 11}), 0), std::invalid_argument);
}

TEST(Psnr, DecreasesWithNoiseAmplitude) {
    Rng rng(3);
    Tensor a = plane(rng, 32, 32);
    double prev = std::numeric_limits<double>::infinity();
    for (double amp : {0.01, 0.05, 0.2}) {
        const double p = psnr(a, noisy(a, amp, rng), 2);
        EXPECT_LT(p, prev);
        prev = p;
    }
}

TEST(Ssim, IdentitySymmetryAndPermutation) {
    Rng rng(4);
    Tensor a = plane(rng, 20, 24);
    EXPECT_EQ(ssim(a, a), 1.0);
    Tensor b = noisy(a, 0.1, rng);
    EXPECT_DOUBLE_EQ(ssim(a, b), ssim(b, a));
    Tensor perm = a;
    std::shuffle(perm.storage().begin(), perm.storage().end(), rng);
    EXPECT_LT(ssim(a, perm), 1.0);
    EXPECT_THROW(ssim(plane(rng, 10, 20), plane(rng, 10, 20)), std::invalid_argument);
    EXPECT_THROW(ssim(Tensor({3, 16, 16}), Tensor({3, 16, 16})), std::invalid_argument);
}

TEST(Metrics, MatchBruteForceOracles) {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const int h = 16 + trial % 5, w = 18 + trial % 3;
        Tensor a = plane(rng, h, w);
        Tensor b = trial % 2 ? noisy(a, 0.05, rng) : plane(rng, h, w);
        EXPECT_NEAR(psnr(a, b, 2), testing::naive_psnr(a, b, 2), 1e-6);
        EXPECT_NEAR(ssim(a, b), testing::naive_ssim(a, b), 1e-6);
        EXPECT_NEAR(hfen_metric(a, b), testing::naive_hfen(a, b), 1e-6);
    }
}

TEST(Hfen, ZeroForIdenticalImages) {
    Rng rng(6);
    Tensor a = plane(rng, 16, 16);
    EXPECT_EQ(hfen_metric(a, a), 0.0);
}

TEST(Evaluate, AggregatesAreMeansAndDeterministic) {
    auto images = synthesize_dataset(3, 24, 24, 2, 7);
    EvalReport r = evaluate_images(bicubic_model(2), images, 2, "bicubic");
    ASSERT_EQ(r.per_image.size(), 3u);
    double p = 0, s = 0, h = 0;
    for (const auto& m : r.per_image) {
        EXPECT_TRUE(std::isfinite(m.psnr));
        EXPECT_GT(m.psnr, 0.0);
        p += m.psnr;
        s += m.ssim;
        h += m.hfen;
    }
    EXPECT_NEAR(r.mean_psnr, p / 3, 1e-12);
    EXPECT_NEAR(r.mean_ssim, s / 3, 1e-12);
    EXPECT_NEAR(r.mean_hfen, h / 3, 1e-12);
    EXPECT_EQ(r.per_image[0].name, "synth_0000");

    // Direct recomputation of one image through the public pieces.
    Tensor sr = bicubic_upsample(images[1].lr, 2);
    for (auto& v : sr.values()) v = std::clamp(v, 0.0, 1.0);
    EXPECT_NEAR(r.per_image[1].psnr, psnr(rgb_to_y(sr), rgb_to_y(images[1].hr), 2), 1e-12);

    EvalReport again = evaluate_images(bicubic_model(2), images, 2, "bicubic");
    EXPECT_EQ(again.mean_psnr, r.mean_psnr);
}

TEST(Evaluate, NetworkReportFromDirectoryWithSkips) {
    const std::string dir = testing::make_temp_dir("evaldir");
    Rng rng(8);
    save_png(dir + "/a.png", random_tensor({3, 24, 20}, rng, 0.0, 1.0));
    save_png(dir + "/b.png", random_tensor({3, 20, 22}, rng, 0.0, 1.0));
    std::ofstream(dir + "/broken.png") << "not a png";
    Genotype g = uniform_genotype({"conv1x1", "conv1x1", "dilconv3x3"}, 4, 2, 2);
    SrNetwork net = build_derived_network(g, SupernetConfig{}, 3);
    EvalReport r = evaluate_model(net, dir, "tiny");
    EXPECT_EQ(r.per_image.size(), 2u);
    ASSERT_EQ(r.skipped.size(), 1u);
    EXPECT_NE(r.skipped[0].find("broken.png"), std::string::npos);
    EXPECT_EQ(r.params, genotype_complexity(g, SupernetConfig{}).total_params);
    EXPECT_EQ(r.multiadds, genotype_complexity(g, SupernetConfig{}).total_multiadds);
    EXPECT_EQ(evaluate_model(net, dir, "tiny").mean_psnr, r.mean_psnr);

    const auto j = nlohmann::json::parse(report_to_json(r));
    EXPECT_EQ(j["model"], "tiny");
    EXPECT_EQ(j["images"].size(), 2u);
    EXPECT_EQ(j["skipped"].size(), 1u);
    std::filesystem::remove_all(dir);
}

TEST(Evaluate, InfiniteScoresUseStringSentinel) {
    EvalReport r;
    r.per_image.push_back({"same", std::numeric_limits<double>::infinity(), 1.0, 0.0});
    r.mean_psnr = std::numeric_limits<double>::infinity();
    const auto j = nlohmann::json::parse(report_to_json(r));
    EXPECT_EQ(j["mean"]["psnr"], "inf");
}

TEST(Evaluate, ThirdScaleComplexityDims) {
    EXPECT_EQ(hr_dims_for_scale(2).width, 1280);
    EXPECT_EQ(hr_dims_for_scale(3).width, 1278);
    EXPECT_EQ(hr_dims_for_scale(3).height, 720);
    EXPECT_EQ(hr_dims_for_scale(4).width, 1280);
}

TEST(Scatter, SingleRowAndRoundTrip) {
    std::vector<ScatterEntry> one{{"m", 1.5, 0.25, 30.125}};
    const std::string csv = scatter_csv(one);
    EXPECT_EQ(csv, "name,params_K,multiadds_G,psnr_dB\nm,1.5,0.25,30.125\n");
    std::vector<ScatterEntry> many{{"a", 0.1, 1.0 / 3.0, 29.987654321}, {"b", 338, 17.9, 32.33}};
    auto back = parse_scatter_csv(scatter_csv(many));
    ASSERT_EQ(back.size(), 2u);
    for (std::size_t i = 0; i < 2; ++i) {
        EXPECT_EQ(back[i].name, many[i].name);
        EXPECT_EQ(back[i].params_k, many[i].params_k);
        EXPECT_EQ(back[i].multiadds_g, many[i].multiadds_g);
        EXPECT_EQ(back[i].psnr_db, many[i].psnr_db);
    }
    EXPECT_THROW(scatter_csv({}), std::invalid_argument);
    EXPECT_THROW(parse_scatter_csv("wrong\n"), std::invalid_argument);
}

TEST(Scatter, PublishedBaselinesPassThroughUnchanged) {
    std::ifstream in(std::string(DLSR_FIXTURE_DIR) + "/baselines.csv");
    std::stringstream ss;
    ss << in.rdbuf();
    const auto rows = parse_scatter_csv(ss.str());
    const auto rfdn = std::find_if(rows.begin(), rows.end(), [](const auto& e) { return e.name == "RFDN_x4"; });
    ASSERT_NE(rfdn, rows.end());
    EXPECT_EQ(rfdn->params_k, 550);
    EXPECT_EQ(rfdn->multiadds_g, 31.6);
    EXPECT_EQ(rfdn->psnr_db, 32.24);
    EXPECT_EQ(scatter_csv(rows), ss.str());
}

}  // namespace
}  // namespace dlsr
