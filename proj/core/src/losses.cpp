#include "dlsr/losses.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "dlsr/complexity.hpp"

namespace dlsr {

void LossWeights::validate() const {
    if (!(lambda_val >= 0.0) || !(mu >= 0.0) || !(gamma >= 0.0))
        throw std::invalid_argument("loss weights must be non-negative");
}

LoGKernel LoGKernel::make(int size, double sigma) {
    if (size < 1 || size % 2 == 0) throw std::invalid_argument("LoG kernel size must be odd");
    if (!(sigma > 0.0)) throw std::invalid_argument("LoG sigma must be positive");
    LoGKernel k;
    k.size = size;
    k.sigma = sigma;
    k.weights = Tensor({size, size});
    const int r = size / 2;
    const double s2 = sigma * sigma;
    double gsum = 0.0;
    for (int y = -r; y <= r; ++y)
        for (int x = -r; x <= r; ++x) gsum += std::exp(-(x * x + y * y) / (2.0 * s2));
    double lsum = 0.0;
    for (int y = -r; y <= r; ++y)
        for (int x = -r; x <= r; ++x) {
            const double rr = x * x + y * y;
            const double g = std::exp(-rr / (2.0 * s2)) / gsum;
            const double v = g * (rr - 2.0 * s2) / (s2 * s2);
            k.weights[static_cast<std::size_t>((y + r) * size + x + r)] = v;
            lsum += v;
        }
    const double mean = lsum / (static_cast<double>(size) * size);
    for (double& v : k.weights.values()) v -= mean;
    return k;
}

ag::Var l1_loss(const ag::Var& sr, const Tensor& hr) {
    if (sr.shape() != hr.shape())
        throw std::invalid_argument("l1_loss: shape mismatch " + shape_string(sr.shape()) + " vs " +
                                    shape_string(hr.shape()));
    return ag::mean_abs(ag::sub_const(sr, hr));
}

ag::Var log_filter(const ag::Var& x, const LoGKernel& kernel) {
    if (x.value().rank() != 4) throw std::invalid_argument("log_filter expects NCHW input");
    const int channels = x.shape()[1];
    if (x.shape()[2] < kernel.size || x.shape()[3] < kernel.size)
        throw std::invalid_argument("image " + shape_string(x.shape()) + " smaller than the " +
                                    std::to_string(kernel.size) + "x" + std::to_string(kernel.size) + " LoG kernel");
    Tensor w({channels, 1, kernel.size, kernel.size});
    const std::size_t k2 = kernel.weights.numel();
    for (int c = 0; c < channels; ++c)
        for (std::size_t i = 0; i < k2; ++i) w[static_cast<std::size_t>(c) * k2 + i] = kernel.weights[i];
    ag::Var padded = ag::reflect_pad(x, kernel.size / 2);
    return ag::conv2d(padded, ag::constant(std::move(w)), nullptr, ConvGeometry{1, 0, 1, channels});
}

ag::Var hfen_loss(const ag::Var& sr, const Tensor& hr, const LoGKernel& kernel) {
    if (sr.shape() != hr.shape())
        throw std::invalid_argument("hfen_loss: shape mismatch " + shape_string(sr.shape()) + " vs " +
                                    shape_string(hr.shape()));
    // LoG is linear, so filtering the residual equals the difference of filtered images.
    return ag::mean_abs(log_filter(ag::sub_const(sr, hr), kernel));
}

Tensor normalized_op_params(int channels) {
    Tensor p({kNumOps});
    double total = 0.0;
    const auto registry = operation_registry();
    for (int o = 0; o < kNumOps; ++o) {
        p[static_cast<std::size_t>(o)] = static_cast<double>(op_params(registry[static_cast<std::size_t>(o)], channels));
        total += p[static_cast<std::size_t>(o)];
    }
    for (double& v : p.values()) v /= total;
    return p;
}

ag::Var param_regularizer(const ag::Var& alpha, int channels) {
    if (alpha.value().rank() != 2 || alpha.shape()[1] != kNumOps)
        throw std::invalid_argument("param_regularizer: alpha must be [layers x 9]");
    if (!alpha.value().all_finite()) throw std::invalid_argument("param_regularizer: alpha must be finite");
    const Tensor p = normalized_op_params(channels);
    ag::Var acc;
    for (int row = 0; row < alpha.shape()[0]; ++row) {
        ag::Var term = ag::dot_const(ag::softmax_row(alpha, row), p);
        acc = acc.defined() ? ag::add(acc, term) : term;
    }
    return acc.defined() ? acc : ag::constant(Tensor::scalar(0.0));
}

LossTerms total_loss(const ag::Var& sr, const Tensor& hr, const ag::Var& alpha, int channels,
                     const LossWeights& weights, const LoGKernel& kernel) {
    weights.validate();
    LossTerms terms;
    ag::Var total = l1_loss(sr, hr);
    terms.l1 = total.value()[0];
    if (weights.mu > 0.0) {
        ag::Var h = hfen_loss(sr, hr, kernel);
        terms.hfen = h.value()[0];
        total = ag::add(total, ag::mul_scalar(h, weights.mu));
    }
    if (alpha.defined()) {
        ag::Var lp = param_regularizer(alpha, channels);
        terms.param = lp.value()[0];
        if (weights.gamma > 0.0) total = ag::add(total, ag::mul_scalar(lp, weights.gamma));
    }
    terms.total = total;
    return terms;
}

}  // namespace dlsr
