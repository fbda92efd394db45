#pragma once

#include "dlsr/tensor.hpp"

namespace dlsr {

struct ConvGeometry {
    int stride = 1;
    int padding = 0;
    int dilation = 1;
    int groups = 1;
};

int conv_output_size(int in, int kernel, const ConvGeometry& g);

// x: [N, Cin, H, W], weight: [Cout, Cin/groups, kh, kw], bias: [Cout] or empty.
Tensor conv2d_forward(const Tensor& x, const Tensor& weight, const Tensor* bias, const ConvGeometry& g);

// Accumulates (+=) into whichever of dx / dw / db is non-null.
void conv2d_backward(const Tensor& x, const Tensor& weight, const Tensor& dy, const ConvGeometry& g,
                     Tensor* dx, Tensor* dw, Tensor* db);

}  // namespace dlsr
