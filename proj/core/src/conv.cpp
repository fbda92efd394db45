#include "dlsr/conv.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <stdexcept>

namespace dlsr {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

struct Dims {
    int n, cin, h, w;
    int cout, kh, kw;
    int ho, wo;
    int cin_g, cout_g;
};

Dims check_dims(const Tensor& x, const Tensor& weight, const ConvGeometry& g) {
    if (x.rank() != 4) throw std::invalid_argument("conv2d: input must be NCHW, got " + shape_string(x.shape()));
    if (weight.rank() != 4) throw std::invalid_argument("conv2d: weight must be 4-D");
    if (g.groups < 1 || g.stride < 1 || g.dilation < 1 || g.padding < 0)
        throw std::invalid_argument("conv2d: invalid geometry");
    Dims d{};
    d.n = x.dim(0);
    d.cin = x.dim(1);
    d.h = x.dim(2);
    d.w = x.dim(3);
    d.cout = weight.dim(0);
    d.kh = weight.dim(2);
    d.kw = weight.dim(3);
    if (d.cin % g.groups != 0 || d.cout % g.groups != 0)
        throw std::invalid_argument("conv2d: channels not divisible by groups");
    d.cin_g = d.cin / g.groups;
    d.cout_g = d.cout / g.groups;
    if (weight.dim(1) != d.cin_g)
        throw std::invalid_argument("conv2d: channel mismatch, input " + shape_string(x.shape()) + " weight " +
                                    shape_string(weight.shape()));
    d.ho = conv_output_size(d.h, d.kh, g);
    d.wo = conv_output_size(d.w, d.kw, g);
    if (d.ho <= 0 || d.wo <= 0)
        throw std::invalid_argument("conv2d: input " + shape_string(x.shape()) + " too small for kernel");
    return d;
}

bool is_pointwise(const Dims& d, const ConvGeometry& g) {
    return d.kh == 1 && d.kw == 1 && g.stride == 1 && g.padding == 0 && g.groups == 1;
}

bool is_depthwise(const Dims& d, const ConvGeometry& g) {
    return g.groups == d.cin && d.cin_g == 1 && d.cout_g == 1;
}

// Valid output range [lo, hi) for which ih = o*stride - pad + k*dil lies in [0, n).
inline void valid_range(int n, int out, int k, const ConvGeometry& g, int& lo, int& hi) {
    const int off = k * g.dilation - g.padding;
    lo = 0;
    if (off < 0) lo = (-off + g.stride - 1) / g.stride;
    hi = out;
    // need o*stride + off <= n-1
    const int lim = n - 1 - off;
    if (lim < 0) {
        hi = 0;
    } else {
        hi = std::min(out, lim / g.stride + 1);
    }
    if (hi < lo) hi = lo;
}

// col layout: [cin_g * kh * kw, ho * wo]
void im2col(const double* x, int c_count, int h, int w, const Dims& d, const ConvGeometry& g, double* col) {
    const std::size_t plane = static_cast<std::size_t>(d.ho) * d.wo;
    for (int c = 0; c < c_count; ++c) {
        const double* xc = x + static_cast<std::size_t>(c) * h * w;
        for (int ki = 0; ki < d.kh; ++ki) {
            int oh_lo, oh_hi;
            valid_range(h, d.ho, ki, g, oh_lo, oh_hi);
            for (int kj = 0; kj < d.kw; ++kj) {
                int ow_lo, ow_hi;
                valid_range(w, d.wo, kj, g, ow_lo, ow_hi);
                double* row = col + ((static_cast<std::size_t>(c) * d.kh + ki) * d.kw + kj) * plane;
                std::fill(row, row + plane, 0.0);
                for (int oh = oh_lo; oh < oh_hi; ++oh) {
                    const int ih = oh * g.stride - g.padding + ki * g.dilation;
                    const double* xr = xc + static_cast<std::size_t>(ih) * w;
                    double* r = row + static_cast<std::size_t>(oh) * d.wo;
                    if (g.stride == 1) {
                        const int base = -g.padding + kj * g.dilation;
                        for (int ow = ow_lo; ow < ow_hi; ++ow) r[ow] = xr[ow + base];
                    } else {
                        for (int ow = ow_lo; ow < ow_hi; ++ow)
                            r[ow] = xr[ow * g.stride - g.padding + kj * g.dilation];
                    }
                }
            }
        }
    }
}

void col2im_add(const double* col, int c_count, int h, int w, const Dims& d, const ConvGeometry& g, double* x) {
    const std::size_t plane = static_cast<std::size_t>(d.ho) * d.wo;
    for (int c = 0; c < c_count; ++c) {
        double* xc = x + static_cast<std::size_t>(c) * h * w;
        for (int ki = 0; ki < d.kh; ++ki) {
            int oh_lo, oh_hi;
            valid_range(h, d.ho, ki, g, oh_lo, oh_hi);
            for (int kj = 0; kj < d.kw; ++kj) {
                int ow_lo, ow_hi;
                valid_range(w, d.wo, kj, g, ow_lo, ow_hi);
                const double* row = col + ((static_cast<std::size_t>(c) * d.kh + ki) * d.kw + kj) * plane;
                for (int oh = oh_lo; oh < oh_hi; ++oh) {
                    const int ih = oh * g.stride - g.padding + ki * g.dilation;
                    double* xr = xc + static_cast<std::size_t>(ih) * w;
                    const double* r = row + static_cast<std::size_t>(oh) * d.wo;
                    for (int ow = ow_lo; ow < ow_hi; ++ow) xr[ow * g.stride - g.padding + kj * g.dilation] += r[ow];
                }
            }
        }
    }
}

void depthwise_forward(const Tensor& x, const Tensor& weight, const Dims& d, const ConvGeometry& g, Tensor& y) {
    for (int n = 0; n < d.n; ++n) {
        for (int c = 0; c < d.cin; ++c) {
            const double* xc = &x.at(n, c, 0, 0);
            const double* wc = weight.data() + static_cast<std::size_t>(c) * d.kh * d.kw;
            double* yc = &y.at(n, c, 0, 0);
            for (int ki = 0; ki < d.kh; ++ki) {
                int oh_lo, oh_hi;
                valid_range(d.h, d.ho, ki, g, oh_lo, oh_hi);
                for (int kj = 0; kj < d.kw; ++kj) {
                    int ow_lo, ow_hi;
                    valid_range(d.w, d.wo, kj, g, ow_lo, ow_hi);
                    const double wv = wc[ki * d.kw + kj];
                    for (int oh = oh_lo; oh < oh_hi; ++oh) {
                        const int ih = oh * g.stride - g.padding + ki * g.dilation;
                        const double* xr = xc + static_cast<std::size_t>(ih) * d.w;
                        double* yr = yc + static_cast<std::size_t>(oh) * d.wo;
                        const int base = -g.padding + kj * g.dilation;
                        if (g.stride == 1) {
                            for (int ow = ow_lo; ow < ow_hi; ++ow) yr[ow] += wv * xr[ow + base];
                        } else {
                            for (int ow = ow_lo; ow < ow_hi; ++ow) yr[ow] += wv * xr[ow * g.stride + base];
                        }
                    }
                }
            }
        }
    }
}

void depthwise_backward(const Tensor& x, const Tensor& weight, const Tensor& dy, const Dims& d,
                        const ConvGeometry& g, Tensor* dx, Tensor* dw) {
    for (int n = 0; n < d.n; ++n) {
        for (int c = 0; c < d.cin; ++c) {
            const double* xc = &x.at(n, c, 0, 0);
            const double* wc = weight.data() + static_cast<std::size_t>(c) * d.kh * d.kw;
            const double* gc = &dy.at(n, c, 0, 0);
            double* dxc = dx ? &dx->at(n, c, 0, 0) : nullptr;
            double* dwc = dw ? dw->data() + static_cast<std::size_t>(c) * d.kh * d.kw : nullptr;
            for (int ki = 0; ki < d.kh; ++ki) {
                int oh_lo, oh_hi;
                valid_range(d.h, d.ho, ki, g, oh_lo, oh_hi);
                for (int kj = 0; kj < d.kw; ++kj) {
                    int ow_lo, ow_hi;
                    valid_range(d.w, d.wo, kj, g, ow_lo, ow_hi);
                    const double wv = wc[ki * d.kw + kj];
                    const int base = -g.padding + kj * g.dilation;
                    double acc = 0.0;
                    for (int oh = oh_lo; oh < oh_hi; ++oh) {
                        const int ih = oh * g.stride - g.padding + ki * g.dilation;
                        const double* xr = xc + static_cast<std::size_t>(ih) * d.w;
                        const double* gr = gc + static_cast<std::size_t>(oh) * d.wo;
                        if (dxc) {
                            double* dxr = dxc + static_cast<std::size_t>(ih) * d.w;
                            for (int ow = ow_lo; ow < ow_hi; ++ow) dxr[ow * g.stride + base] += wv * gr[ow];
                        }
                        if (dwc) {
                            for (int ow = ow_lo; ow < ow_hi; ++ow) acc += gr[ow] * xr[ow * g.stride + base];
                        }
                    }
                    if (dwc) dwc[ki * d.kw + kj] += acc;
                }
            }
        }
    }
}

}  // namespace

int conv_output_size(int in, int kernel, const ConvGeometry& g) {
    const int span = g.dilation * (kernel - 1) + 1;
    const int padded = in + 2 * g.padding;
    if (padded < span) return 0;
    return (padded - span) / g.stride + 1;
}

Tensor conv2d_forward(const Tensor& x, const Tensor& weight, const Tensor* bias, const ConvGeometry& g) {
    const Dims d = check_dims(x, weight, g);
    Tensor y({d.n, d.cout, d.ho, d.wo});
    const std::size_t plane = static_cast<std::size_t>(d.ho) * d.wo;

    if (is_depthwise(d, g)) {
        depthwise_forward(x, weight, d, g, y);
    } else if (is_pointwise(d, g)) {
        ConstMapMat w(weight.data(), d.cout, d.cin);
        for (int n = 0; n < d.n; ++n) {
            ConstMapMat xs(&x.at(n, 0, 0, 0), d.cin, static_cast<Eigen::Index>(plane));
            MapMat ys(&y.at(n, 0, 0, 0), d.cout, static_cast<Eigen::Index>(plane));
            ys.noalias() = w * xs;
        }
    } else {
        const int krows = d.cin_g * d.kh * d.kw;
        std::vector<double> col(static_cast<std::size_t>(krows) * plane);
        for (int n = 0; n < d.n; ++n) {
            for (int grp = 0; grp < g.groups; ++grp) {
                im2col(&x.at(n, grp * d.cin_g, 0, 0), d.cin_g, d.h, d.w, d, g, col.data());
                ConstMapMat w(weight.data() + static_cast<std::size_t>(grp) * d.cout_g * krows, d.cout_g, krows);
                ConstMapMat c(col.data(), krows, static_cast<Eigen::Index>(plane));
                MapMat ys(&y.at(n, grp * d.cout_g, 0, 0), d.cout_g, static_cast<Eigen::Index>(plane));
                ys.noalias() = w * c;
            }
        }
    }

    if (bias) {
        if (bias->numel() != static_cast<std::size_t>(d.cout)) throw std::invalid_argument("conv2d: bias size mismatch");
        for (int n = 0; n < d.n; ++n)
            for (int c = 0; c < d.cout; ++c) {
                double* yc = &y.at(n, c, 0, 0);
                const double b = (*bias)[static_cast<std::size_t>(c)];
                for (std::size_t i = 0; i < plane; ++i) yc[i] += b;
            }
    }
    return y;
}

void conv2d_backward(const Tensor& x, const Tensor& weight, const Tensor& dy, const ConvGeometry& g,
                     Tensor* dx, Tensor* dw, Tensor* db) {
    const Dims d = check_dims(x, weight, g);
    const std::size_t plane = static_cast<std::size_t>(d.ho) * d.wo;

    if (db) {
        for (int n = 0; n < d.n; ++n)
            for (int c = 0; c < d.cout; ++c) {
                const double* gc = &dy.at(n, c, 0, 0);
                double acc = 0.0;
                for (std::size_t i = 0; i < plane; ++i) acc += gc[i];
                (*db)[static_cast<std::size_t>(c)] += acc;
            }
    }
    if (!dx && !dw) return;

    if (is_depthwise(d, g)) {
        depthwise_backward(x, weight, dy, d, g, dx, dw);
        return;
    }
    if (is_pointwise(d, g)) {
        ConstMapMat w(weight.data(), d.cout, d.cin);
        for (int n = 0; n < d.n; ++n) {
            ConstMapMat gs(&dy.at(n, 0, 0, 0), d.cout, static_cast<Eigen::Index>(plane));
            if (dw) {
                ConstMapMat xs(&x.at(n, 0, 0, 0), d.cin, static_cast<Eigen::Index>(plane));
                MapMat(dw->data(), d.cout, d.cin).noalias() += gs * xs.transpose();
            }
            if (dx) MapMat(&dx->at(n, 0, 0, 0), d.cin, static_cast<Eigen::Index>(plane)).noalias() += w.transpose() * gs;
        }
        return;
    }

    const int krows = d.cin_g * d.kh * d.kw;
    std::vector<double> col(static_cast<std::size_t>(krows) * plane);
    for (int n = 0; n < d.n; ++n) {
        for (int grp = 0; grp < g.groups; ++grp) {
            ConstMapMat w(weight.data() + static_cast<std::size_t>(grp) * d.cout_g * krows, d.cout_g, krows);
            ConstMapMat gs(&dy.at(n, grp * d.cout_g, 0, 0), d.cout_g, static_cast<Eigen::Index>(plane));
            if (dw) {
                im2col(&x.at(n, grp * d.cin_g, 0, 0), d.cin_g, d.h, d.w, d, g, col.data());
                ConstMapMat c(col.data(), krows, static_cast<Eigen::Index>(plane));
                MapMat(dw->data() + static_cast<std::size_t>(grp) * d.cout_g * krows, d.cout_g, krows).noalias() +=
                    gs * c.transpose();
            }
            if (dx) {
                MapMat c(col.data(), krows, static_cast<Eigen::Index>(plane));
                c.noalias() = w.transpose() * gs;
                col2im_add(col.data(), d.cin_g, d.h, d.w, d, g, &dx->at(n, grp * d.cin_g, 0, 0));
            }
        }
    }
}

}  // namespace dlsr
