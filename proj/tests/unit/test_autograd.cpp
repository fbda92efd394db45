#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "dlsr/autograd.hpp"
#include "test_support.hpp"

namespace dlsr {
namespace {

using ag::Var;
using testing::random_tensor;
using Fn = std::function<Var(const std::vector<Var>&)>;

// Compares reverse-mode gradients of <R, f(inputs)> against central differences for every input entry.
void check_gradients(std::vector<Var> inputs, const Fn& f, double tol = 1e-6) {
    Rng rng(99);
    const Tensor probe = random_tensor(f(inputs).shape(), rng);
    for (auto& v : inputs) v.zero_grad();
    ag::dot_const(f(inputs), probe).backward();
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        if (!inputs[k].requires_grad()) continue;
        ASSERT_TRUE(inputs[k].has_grad()) << "input " << k;
        const Tensor analytic = inputs[k].grad();
        Tensor& value = inputs[k].mutable_value();
        for (std::size_t i = 0; i < value.numel(); ++i) {
            const double numeric = testing::central_difference(
                [&] {
                    ag::NoGradGuard guard;
                    return ag::dot_const(f(inputs), probe).value()[0];
                },
                value[i], 1e-6);
            EXPECT_LT(testing::relative_error(analytic[i], numeric, 1e-8), tol)
                << "input " << k << " entry " << i << ": " << analytic[i] << " vs " << numeric;
        }
    }
}

Var leaf(const Shape& s, Rng& rng, double lo = -1.0, double hi = 1.0) { return Var(random_tensor(s, rng, lo, hi), true); }

TEST(Autograd, Elementwise) {
    Rng rng(1);
    check_gradients({leaf({2, 3, 4, 4}, rng), leaf({2, 3, 4, 4}, rng)},
                    [](const std::vector<Var>& v) { return ag::add(v[0], v[1]); });
    check_gradients({leaf({2, 3, 4, 4}, rng), leaf({2, 3, 4, 4}, rng)},
                    [](const std::vector<Var>& v) { return ag::sub(v[0], v[1]); });
    check_gradients({leaf({2, 3, 4, 4}, rng), leaf({2, 3, 4, 4}, rng)},
                    [](const std::vector<Var>& v) { return ag::mul(v[0], v[1]); });
    check_gradients({leaf({3, 5}, rng)}, [](const std::vector<Var>& v) { return ag::mul_scalar(v[0], -2.5); });
    check_gradients({leaf({2, 3, 4, 4}, rng)}, [](const std::vector<Var>& v) { return ag::sigmoid(v[0]); });
    const Tensor c = random_tensor({2, 3}, rng);
    check_gradients({leaf({2, 3}, rng)}, [&](const std::vector<Var>& v) { return ag::sub_const(v[0], c); });
}

TEST(Autograd, ReluAwayFromKink) {
    Rng rng(2);
    Tensor t = random_tensor({1, 2, 5, 5}, rng);
    for (double& x : t.values()) x += x >= 0 ? 0.1 : -0.1;
    check_gradients({Var(t, true)}, [](const std::vector<Var>& v) { return ag::relu(v[0]); });
}

TEST(Autograd, Softmax) {
    Rng rng(3);
    check_gradients({leaf({4, 9}, rng, -2, 2)}, [](const std::vector<Var>& v) { return ag::softmax_row(v[0], 2); });
    check_gradients({leaf({5}, rng, -2, 2)}, [](const std::vector<Var>& v) { return ag::softmax(v[0]); });
}

TEST(Autograd, SoftmaxRowsSumToOne) {
    Rng rng(4);
    const Var logits(random_tensor({6, 9}, rng, -5, 5));
    for (int r = 0; r < 6; ++r) EXPECT_NEAR(ag::softmax_row(logits, r).value().sum(), 1.0, 1e-12);
}

TEST(Autograd, WeightedSumAndScale) {
    Rng rng(5);
    check_gradients({leaf({1, 2, 3, 3}, rng), leaf({1, 2, 3, 3}, rng), leaf({1, 2, 3, 3}, rng), leaf({3}, rng)},
                    [](const std::vector<Var>& v) { return ag::weighted_sum({v[0], v[1], v[2]}, v[3]); });
    check_gradients({leaf({1, 2, 3, 3}, rng), leaf({4}, rng)},
                    [](const std::vector<Var>& v) { return ag::scale_by(v[0], v[1], 2); });
}

TEST(Autograd, ConcatAndShuffle) {
    Rng rng(6);
    check_gradients({leaf({2, 1, 3, 3}, rng), leaf({2, 3, 3, 3}, rng)},
                    [](const std::vector<Var>& v) { return ag::concat_channels({v[0], v[1]}); });
    check_gradients({leaf({1, 12, 2, 3}, rng)}, [](const std::vector<Var>& v) { return ag::pixel_shuffle(v[0], 2); });
}

TEST(Autograd, PixelShuffleLayout) {
    // Channel c*s*s + i*s + j lands at output (c, y*s+i, x*s+j).
    Tensor t({1, 8, 1, 1});
    for (int i = 0; i < 8; ++i) t[static_cast<std::size_t>(i)] = i;
    const Tensor out = ag::pixel_shuffle(Var(t), 2).value();
    ASSERT_EQ(out.shape(), (Shape{1, 2, 2, 2}));
    EXPECT_EQ(out.at(0, 0, 0, 1), 1.0);
    EXPECT_EQ(out.at(0, 0, 1, 0), 2.0);
    EXPECT_EQ(out.at(0, 1, 1, 1), 7.0);
}

TEST(Autograd, PoolingAndResampling) {
    Rng rng(7);
    check_gradients({leaf({1, 2, 11, 13}, rng)}, [](const std::vector<Var>& v) { return ag::max_pool2d(v[0], 7, 3); });
    check_gradients({leaf({1, 2, 3, 4}, rng)}, [](const std::vector<Var>& v) { return ag::max_pool2d(v[0], 7, 3); });
    check_gradients({leaf({1, 2, 3, 4}, rng)},
                    [](const std::vector<Var>& v) { return ag::upsample_bilinear(v[0], 7, 9); });
    check_gradients({leaf({1, 2, 6, 5}, rng)}, [](const std::vector<Var>& v) { return ag::reflect_pad(v[0], 3); });
}

TEST(Autograd, PooledSize) {
    EXPECT_EQ(ag::pooled_size(7, 7, 3), 1);
    EXPECT_EQ(ag::pooled_size(3, 7, 3), 1);
    EXPECT_EQ(ag::pooled_size(179, 7, 3), 58);
    EXPECT_EQ(ag::pooled_size(319, 7, 3), 105);
}

TEST(Autograd, BilinearIdentityAtSameSize) {
    Rng rng(8);
    const Tensor t = random_tensor({1, 2, 4, 5}, rng);
    EXPECT_LT(max_abs_diff(ag::upsample_bilinear(Var(t), 4, 5).value(), t), 1e-15);
}

TEST(Autograd, ReflectPadValues) {
    Tensor t2({1, 1, 3, 4});
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 4; ++x) t2.at(0, 0, y, x) = x + 1;
    const Tensor p = ag::reflect_pad(Var(t2), 2).value();
    // Row 0: 3 2 | 1 2 3 4 | 3 2
    EXPECT_EQ(p.at(0, 0, 0, 0), 3.0);
    EXPECT_EQ(p.at(0, 0, 0, 1), 2.0);
    EXPECT_EQ(p.at(0, 0, 0, 6), 3.0);
    EXPECT_EQ(p.at(0, 0, 0, 7), 2.0);
}

TEST(Autograd, Reductions) {
    Rng rng(9);
    check_gradients({leaf({2, 3, 4}, rng)}, [](const std::vector<Var>& v) { return ag::sum(v[0]); });
    check_gradients({leaf({2, 3, 4}, rng)}, [](const std::vector<Var>& v) { return ag::mean_abs(v[0]); });
}

TEST(Autograd, Conv) {
    Rng rng(10);
    const ConvGeometry g{1, 1, 1, 1};
    check_gradients({leaf({2, 3, 5, 5}, rng), leaf({4, 3, 3, 3}, rng), leaf({4}, rng)},
                    [&](const std::vector<Var>& v) { return ag::conv2d(v[0], v[1], &v[2], g); }, 1e-5);
    const ConvGeometry dw{1, 2, 2, 3};
    check_gradients({leaf({1, 3, 6, 6}, rng), leaf({3, 1, 3, 3}, rng)},
                    [&](const std::vector<Var>& v) { return ag::conv2d(v[0], v[1], nullptr, dw); }, 1e-5);
}

TEST(Autograd, SharedSubgraphAccumulates) {
    Var x(Tensor({3}, std::vector<double>{1, 2, 3}), true);
    const Var y = ag::add(ag::mul(x, x), x);  // x^2 + x
    ag::sum(y).backward();
    EXPECT_DOUBLE_EQ(x.grad()[0], 3.0);
    EXPECT_DOUBLE_EQ(x.grad()[2], 7.0);
    ag::sum(y).backward();  // leaf gradients accumulate across calls
    EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
}

TEST(Autograd, NoGradGuardRecordsNothing) {
    Var x(Tensor({2}, 1.0), true);
    ag::NoGradGuard guard;
    const Var y = ag::mul_scalar(x, 3.0);
    EXPECT_FALSE(y.requires_grad());
    EXPECT_TRUE(y.node()->parents.empty());
}

TEST(Autograd, FrozenInputsGetNoGradient) {
    Var a(Tensor({2}, 1.0), true);
    Var b(Tensor({2}, 2.0), false);
    ag::sum(ag::mul(a, b)).backward();
    EXPECT_TRUE(a.has_grad());
    EXPECT_FALSE(b.has_grad());
}

TEST(Autograd, ShapeErrors) {
    EXPECT_THROW(ag::add(Var(Tensor({2})), Var(Tensor({3}))), std::invalid_argument);
    EXPECT_THROW(Var(Tensor({2}), true).backward(), std::invalid_argument);
}

}  // namespace
}  // namespace dlsr
