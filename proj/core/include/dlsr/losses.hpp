#pragma once

#include "dlsr/autograd.hpp"
#include "dlsr/search_space.hpp"

namespace dlsr {

struct LossWeights {
    double lambda_val = 1.0;  // validation-loss weight in the architecture step
    double mu = 0.2;          // HFEN weight
    double gamma = 0.2;       // parameter-regulariser weight (0 when retraining)

    void validate() const;
};

// Laplacian-of-Gaussian kernel, mean-subtracted so it sums to zero.
struct LoGKernel {
    int size = 15;
    double sigma = 1.5;
    Tensor weights;  // [size, size]

    static LoGKernel make(int size = 15, double sigma = 1.5);
};

ag::Var l1_loss(const ag::Var& sr, const Tensor& hr);
// Per-channel LoG filtering with reflection padding; mean |LoG(sr) - LoG(hr)|.
ag::Var hfen_loss(const ag::Var& sr, const Tensor& hr, const LoGKernel& kernel);
// Filters every channel of an NCHW tensor with the kernel (reflection padding, output same size).
ag::Var log_filter(const ag::Var& x, const LoGKernel& kernel);

// Normalised parameter masses p_o / sum_c p_c for the nine ops at a channel count.
Tensor normalized_op_params(int channels);
// sum over mixed layers of <normalised params, softmax(alpha_row)>.
ag::Var param_regularizer(const ag::Var& alpha, int channels);

struct LossTerms {
    ag::Var total;
    double l1 = 0.0;
    double hfen = 0.0;
    double param = 0.0;
};

// l1 + mu * hfen + gamma * L_P. alpha may be undefined (derived networks), in which case L_P = 0.
LossTerms total_loss(const ag::Var& sr, const Tensor& hr, const ag::Var& alpha, int channels,
                     const LossWeights& weights, const LoGKernel& kernel);

}  // namespace dlsr
