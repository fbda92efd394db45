#include "dlsr/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_set>

namespace dlsr::ag {
namespace {

thread_local bool g_grad_enabled = true;

using BackwardFn = std::function<void(Node&)>;

Var make_result(Tensor value, std::initializer_list<const Var*> inputs, BackwardFn fn) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    if (g_grad_enabled) {
        bool any = false;
        for (const Var* in : inputs) any = any || (in && in->defined() && in->requires_grad());
        if (any) {
            node->requires_grad = true;
            for (const Var* in : inputs) node->parents.push_back(in ? in->node() : nullptr);
            node->backward_fn = std::move(fn);
        }
    }
    return Var::from_node(std::move(node));
}

Var make_result(Tensor value, const std::vector<Var>& inputs, BackwardFn fn) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    if (g_grad_enabled) {
        bool any = std::any_of(inputs.begin(), inputs.end(), [](const Var& v) { return v.requires_grad(); });
        if (any) {
            node->requires_grad = true;
            for (const Var& in : inputs) node->parents.push_back(in.node());
            node->backward_fn = std::move(fn);
        }
    }
    return Var::from_node(std::move(node));
}

inline bool wants(const std::shared_ptr<Node>& p) { return p && p->requires_grad; }

void require_same(const Var& a, const Var& b, const char* op) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                                    shape_string(b.shape()));
}

void require_rank(const Var& x, int rank, const char* op) {
    if (x.value().rank() != rank)
        throw std::invalid_argument(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                                    shape_string(x.shape()));
}

void softmax_into(const double* logits, int n, double* out) {
    double m = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) m = std::max(m, logits[i]);
    double z = 0.0;
    for (int i = 0; i < n; ++i) {
        out[i] = std::exp(logits[i] - m);
        z += out[i];
    }
    for (int i = 0; i < n; ++i) out[i] /= z;
}

// d logits += J_softmax^T g, with p the softmax output.
void softmax_backward(const double* p, const double* g, int n, double* dlogits) {
    double dotpg = 0.0;
    for (int i = 0; i < n; ++i) dotpg += p[i] * g[i];
    for (int i = 0; i < n; ++i) dlogits[i] += p[i] * (g[i] - dotpg);
}

inline int reflect_index(int i, int n) {
    if (i < 0) return -i;
    if (i >= n) return 2 * (n - 1) - i;
    return i;
}

}  // namespace

Tensor& Node::grad_buffer() {
    if (grad.empty()) grad = Tensor(value.shape(), 0.0);
    return grad;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
}

void Var::backward() const {
    if (!node_) throw std::logic_error("backward on undefined var");
    if (node_->value.numel() != 1) throw std::invalid_argument("backward requires a scalar output");
    if (!node_->requires_grad) return;

    // Iterative post-order DFS for a topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
    visited.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, idx] = stack.back();
        if (idx < n->parents.size()) {
            Node* p = n->parents[idx++].get();
            if (p && p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    node_->grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
    // Interior grads are only needed during the sweep.
    for (Node* n : order)
        if (n->backward_fn) n->grad = Tensor();
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_mode_enabled() { return g_grad_enabled; }

Var constant(Tensor value) { return Var(std::move(value), false); }

Var conv2d(const Var& x, const Var& weight, const Var* bias, const ConvGeometry& g) {
    Tensor y = conv2d_forward(x.value(), weight.value(), bias ? &bias->value() : nullptr, g);
    return make_result(std::move(y), {&x, &weight, bias}, [g](Node& self) {
        auto& px = self.parents[0];
        auto& pw = self.parents[1];
        auto& pb = self.parents[2];
        conv2d_backward(px->value, pw->value, self.grad, g, wants(px) ? &px->grad_buffer() : nullptr,
                        wants(pw) ? &pw->grad_buffer() : nullptr, wants(pb) ? &pb->grad_buffer() : nullptr);
    });
}

Var add(const Var& a, const Var& b) {
    require_same(a, b, "add");
    Tensor y = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < y.numel(); ++i) y[i] += bv[i];
    return make_result(std::move(y), {&a, &b}, [](Node& self) {
        for (auto& p : self.parents) {
            if (!wants(p)) continue;
            Tensor& g = p->grad_buffer();
            for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
        }
    });
}

Var sub(const Var& a, const Var& b) {
    require_same(a, b, "sub");
    Tensor y = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < y.numel(); ++i) y[i] -= bv[i];
    return make_result(std::move(y), {&a, &b}, [](Node& self) {
        if (wants(self.parents[0])) {
            Tensor& g = self.parents[0]->grad_buffer();
            for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
        }
        if (wants(self.parents[1])) {
            Tensor& g = self.parents[1]->grad_buffer();
            for (std::size_t i = 0; i < g.numel(); ++i) g[i] -= self.grad[i];
        }
    });
}

Var sub_const(const Var& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw std::invalid_argument("sub_const: shape mismatch " + shape_string(a.shape()) + " vs " +
                                    shape_string(b.shape()));
    Tensor y = a.value();
    for (std::size_t i = 0; i < y.numel(); ++i) y[i] -= b[i];
    return make_result(std::move(y), {&a}, [](Node& self) {
        Tensor& g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
    });
}

Var mul(const Var& a, const Var& b) {
    require_same(a, b, "mul");
    Tensor y = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < y.numel(); ++i) y[i] *= bv[i];
    return make_result(std::move(y), {&a, &b}, [](Node& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        if (wants(pa)) {
            Tensor& g = pa->grad_buffer();
            for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * pb->value[i];
        }
        if (wants(pb)) {
            Tensor& g = pb->grad_buffer();
            for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * pa->value[i];
        }
    });
}

Var mul_scalar(const Var& a, double s) {
    Tensor y = a.value();
    for (double& v : y.values()) v *= s;
    return make_result(std::move(y), {&a}, [s](Node& self) {
        Tensor& g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < g.numel(); ++i) g[i] += s * self.grad[i];
    });
}

Var relu(const Var& x) {
    Tensor y = x.value();
    for (double& v : y.values()) v = v > 0.0 ? v : 0.0;
    return make_result(std::move(y), {&x}, [](Node& self) {
        Tensor& g = self.parents[0]->grad_buffer();
        const Tensor& in = self.parents[0]->value;
        for (std::size_t i = 0; i < g.numel(); ++i)
            if (in[i] > 0.0) g[i] += self.grad[i];
    });
}

Var sigmoid(const Var& x) {
    Tensor y = x.value();
    for (double& v : y.values()) v = 1.0 / (1.0 + std::exp(-v));
    return make_result(std::move(y), {&x}, [](Node& self) {
        Tensor& g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < g.numel(); ++i) {
            const double s = self.value[i];
            g[i] += self.grad[i] * s * (1.0 - s);
        }
    });
}

Var softmax_row(const Var& logits2d, int row) {
    require_rank(logits2d, 2, "softmax_row");
    const int rows = logits2d.value().dim(0);
    const int n = logits2d.value().dim(1);
    if (row < 0 || row >= rows) throw std::out_of_range("softmax_row: row out of range");
    Tensor y({n});
    softmax_into(logits2d.value().data() + static_cast<std::size_t>(row) * n, n, y.data());
    return make_result(std::move(y), {&logits2d}, [row, n](Node& self) {
        Tensor& g = self.parents[0]->grad_buffer();
        softmax_backward(self.value.data(), self.grad.data(), n, g.data() + static_cast<std::size_t>(row) * n);
    });
}

Var softmax(const Var& logits) {
    require_rank(logits, 1, "softmax");
    const int n = logits.value().dim(0);
    Tensor y({n});
    softmax_into(logits.value().data(), n, y.data());
    return make_result(std::move(y), {&logits}, [n](Node& self) {
        Tensor& g = self.parents[0]->grad_buffer();
        softmax_backward(self.value.data(), self.grad.data(), n, g.data());
    });
}

Var weighted_sum(const std::vector<Var>& xs, const Var& weights) {
    if (xs.empty()) throw std::invalid_argument("weighted_sum: no inputs");
    require_rank(weights, 1, "weighted_sum");
    if (static_cast<std::size_t>(weights.value().dim(0)) != xs.size())
        throw std::invalid_argument("weighted_sum: weight count does not match input count");
    Tensor y(xs.front().shape(), 0.0);
    for (std::size_t k = 0; k < xs.size(); ++k) {
        require_same(xs[k], xs.front(), "weighted_sum");
        const double w = weights.value()[k];
        const Tensor& xv = xs[k].value();
        for (std::size_t i = 0; i < y.numel(); ++i) y[i] += w * xv[i];
    }
    std::vector<Var> inputs = xs;
    inputs.push_back(weights);
    return make_result(std::move(y), inputs, [](Node& self) {
        const std::size_t count = self.parents.size() - 1;
        auto& pw = self.parents.back();
        for (std::size_t k = 0; k < count; ++k) {
            auto& px = self.parents[k];
            if (wants(px)) {
                const double w = pw->value[k];
                Tensor& g = px->grad_buffer();
                for (std::size_t i = 0; i < g.numel(); ++i) g[i] += w * self.grad[i];
            }
            if (wants(pw)) {
                double acc = 0.0;
                const Tensor& xv = px->value;
                for (std::size_t i = 0; i < xv.numel(); ++i) acc += xv[i] * self.grad[i];
                pw->grad_buffer()[k] += acc;
            }
        }
    });
}

Var scale_by(const Var& x, const Var& weights, int index) {
    require_rank(weights, 1, "scale_by");
    if (index < 0 || index >= weights.value().dim(0)) throw std::out_of_range("scale_by: index out of range");
    const double w = weights.value()[static_cast<std::size_t>(index)];
    Tensor y = x.value();
    for (double& v : y.values()) v *= w;
    return make_result(std::move(y), {&x, &weights}, [index](Node& self) {
        auto& px = self.parents[0];
        auto& pw = self.parents[1];
        const double w = pw->value[static_cast<std::size_t>(index)];
        if (wants(px)) {
            Tensor& g = px->grad_buffer();
            for (std::size_t i = 0; i < g.numel(); ++i) g[i] += w * self.grad[i];
        }
        if (wants(pw)) {
            double acc = 0.0;
            for (std::size_t i = 0; i < self.grad.numel(); ++i) acc += px->value[i] * self.grad[i];
            pw->grad_buffer()[static_cast<std::size_t>(index)] += acc;
        }
    });
}

Var concat_channels(const std::vector<Var>& xs) {
    if (xs.empty()) throw std::invalid_argument("concat_channels: no inputs");
    for (const Var& x : xs) require_rank(x, 4, "concat_channels");
    const Shape& s0 = xs.front().shape();
    int channels = 0;
    for (const Var& x : xs) {
        const Shape& s = x.shape();
        if (s[0] != s0[0] || s[2] != s0[2] || s[3] != s0[3])
            throw std::invalid_argument("concat_channels: incompatible shapes " + shape_string(s0) + " and " +
                                        shape_string(s));
        channels += s[1];
    }
    const int n = s0[0];
    const std::size_t plane = static_cast<std::size_t>(s0[2]) * s0[3];
    Tensor y({n, channels, s0[2], s0[3]});
    for (int b = 0; b < n; ++b) {
        double* dst = &y.at(b, 0, 0, 0);
        for (const Var& x : xs) {
            const std::size_t len = static_cast<std::size_t>(x.shape()[1]) * plane;
            const double* src = &x.value().at(b, 0, 0, 0);
            std::copy(src, src + len, dst);
            dst += len;
        }
    }
    return make_result(std::move(y), xs, [plane, n](Node& self) {
        for (int b = 0; b < n; ++b) {
            const double* src = &self.grad.at(b, 0, 0, 0);
            for (auto& p : self.parents) {
                const std::size_t len = static_cast<std::size_t>(p->value.dim(1)) * plane;
                if (wants(p)) {
                    double* dst = &p->grad_buffer().at(b, 0, 0, 0);
                    for (std::size_t i = 0; i < len; ++i) dst[i] += src[i];
                }
                src += len;
            }
        }
    });
}

int pooled_size(int n, int kernel, int stride) {
    if (n <= kernel) return 1;
    return (n - kernel) / stride + 1;
}

Var max_pool2d(const Var& x, int kernel, int stride) {
    require_rank(x, 4, "max_pool2d");
    const Shape& s = x.shape();
    const int ho = pooled_size(s[2], kernel, stride);
    const int wo = pooled_size(s[3], kernel, stride);
    Tensor y({s[0], s[1], ho, wo});
    auto argmax = std::make_shared<std::vector<std::size_t>>(y.numel());
    const Tensor& xv = x.value();
    std::size_t out = 0;
    for (int b = 0; b < s[0]; ++b)
        for (int c = 0; c < s[1]; ++c)
            for (int oh = 0; oh < ho; ++oh)
                for (int ow = 0; ow < wo; ++ow, ++out) {
                    const int h0 = oh * stride, h1 = std::min(h0 + kernel, s[2]);
                    const int w0 = ow * stride, w1 = std::min(w0 + kernel, s[3]);
                    double best = -std::numeric_limits<double>::infinity();
                    std::size_t best_i = 0;
                    for (int h = h0; h < h1; ++h)
                        for (int w = w0; w < w1; ++w) {
                            const std::size_t i = ((static_cast<std::size_t>(b) * s[1] + c) * s[2] + h) * s[3] + w;
                            if (xv[i] > best) {
                                best = xv[i];
                                best_i = i;
                            }
                        }
                    y[out] = best;
                    (*argmax)[out] = best_i;
                }
    return make_result(std::move(y), {&x}, [argmax](Node& self) {
        Tensor& g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < argmax->size(); ++i) g[(*argmax)[i]] += self.grad[i];
    });
}

namespace {
struct LerpTap {
    int i0, i1;
    double w1;
};

std::vector<LerpTap> bilinear_taps(int in, int out) {
    std::vector<LerpTap> taps(static_cast<std::size_t>(out));
    const double ratio = static_cast<double>(in) / out;
    for (int o = 0; o < out; ++o) {
        double src = (o + 0.5) * ratio - 0.5;
        if (src < 0.0) src = 0.0;
        int i0 = static_cast<int>(std::floor(src));
        if (i0 > in - 1) i0 = in - 1;
        const int i1 = std::min(i0 + 1, in - 1);
        taps[static_cast<std::size_t>(o)] = {i0, i1, src - i0};
    }
    return taps;
}
}  // namespace

Var upsample_bilinear(const Var& x, int out_h, int out_w) {
    require_rank(x, 4, "upsample_bilinear");
    const Shape& s = x.shape();
    if (out_h < 1 || out_w < 1) throw std::invalid_argument("upsample_bilinear: invalid output size");
    auto th = std::make_shared<std::vector<LerpTap>>(bilinear_taps(s[2], out_h));
    auto tw = std::make_shared<std::vector<LerpTap>>(bilinear_taps(s[3], out_w));
    Tensor y({s[0], s[1], out_h, out_w});
    const Tensor& xv = x.value();
    for (int b = 0; b < s[0]; ++b)
        for (int c = 0; c < s[1]; ++c)
            for (int oh = 0; oh < out_h; ++oh) {
                const LerpTap& a = (*th)[static_cast<std::size_t>(oh)];
                for (int ow = 0; ow < out_w; ++ow) {
                    const LerpTap& t = (*tw)[static_cast<std::size_t>(ow)];
                    const double top = (1 - t.w1) * xv.at(b, c, a.i0, t.i0) + t.w1 * xv.at(b, c, a.i0, t.i1);
                    const double bot = (1 - t.w1) * xv.at(b, c, a.i1, t.i0) + t.w1 * xv.at(b, c, a.i1, t.i1);
                    y.at(b, c, oh, ow) = (1 - a.w1) * top + a.w1 * bot;
                }
            }
    return make_result(std::move(y), {&x}, [th, tw](Node& self) {
        Tensor& g = self.parents[0]->grad_buffer();
        const Shape& so = self.value.shape();
        for (int b = 0; b < so[0]; ++b)
            for (int c = 0; c < so[1]; ++c)
                for (int oh = 0; oh < so[2]; ++oh) {
                    const LerpTap& a = (*th)[static_cast<std::size_t>(oh)];
                    for (int ow = 0; ow < so[3]; ++ow) {
                        const LerpTap& t = (*tw)[static_cast<std::size_t>(ow)];
                        const double go = self.grad.at(b, c, oh, ow);
                        g.at(b, c, a.i0, t.i0) += go * (1 - a.w1) * (1 - t.w1);
                        g.at(b, c, a.i0, t.i1) += go * (1 - a.w1) * t.w1;
                        g.at(b, c, a.i1, t.i0) += go * a.w1 * (1 - t.w1);
                        g.at(b, c, a.i1, t.i1) += go * a.w1 * t.w1;
                    }
                }
    });
}

Var pixel_shuffle(const Var& x, int r) {
    require_rank(x, 4, "pixel_shuffle");
    const Shape& s = x.shape();
    if (r < 1 || s[1] % (r * r) != 0) throw std::invalid_argument("pixel_shuffle: channels not divisible by r^2");
    const int co = s[1] / (r * r);
    Tensor y({s[0], co, s[2] * r, s[3] * r});
    const Tensor& xv = x.value();
    for (int b = 0; b < s[0]; ++b)
        for (int c = 0; c < co; ++c)
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < r; ++j) {
                    const int ci = c * r * r + i * r + j;
                    for (int h = 0; h < s[2]; ++h)
                        for (int w = 0; w < s[3]; ++w) y.at(b, c, h * r + i, w * r + j) = xv.at(b, ci, h, w);
                }
    return make_result(std::move(y), {&x}, [r, co](Node& self) {
        Tensor& g = self.parents[0]->grad_buffer();
        const Shape& si = g.shape();
        for (int b = 0; b < si[0]; ++b)
            for (int c = 0; c < co; ++c)
                for (int i = 0; i < r; ++i)
                    for (int j = 0; j < r; ++j) {
                        const int ci = c * r * r + i * r + j;
                        for (int h = 0; h < si[2]; ++h)
                            for (int w = 0; w < si[3]; ++w)
                                g.at(b, ci, h, w) += self.grad.at(b, c, h * r + i, w * r + j);
                    }
    });
}

Var reflect_pad(const Var& x, int pad) {
    require_rank(x, 4, "reflect_pad");
    const Shape& s = x.shape();
    if (pad < 0 || pad >= s[2] || pad >= s[3])
        throw std::invalid_argument("reflect_pad: pad " + std::to_string(pad) + " too large for " + shape_string(s));
    Tensor y({s[0], s[1], s[2] + 2 * pad, s[3] + 2 * pad});
    const Tensor& xv = x.value();
    for (int b = 0; b < s[0]; ++b)
        for (int c = 0; c < s[1]; ++c)
            for (int h = 0; h < s[2] + 2 * pad; ++h) {
                const int ih = reflect_index(h - pad, s[2]);
                for (int w = 0; w < s[3] + 2 * pad; ++w)
                    y.at(b, c, h, w) = xv.at(b, c, ih, reflect_index(w - pad, s[3]));
            }
    return make_result(std::move(y), {&x}, [pad](Node& self) {
        Tensor& g = self.parents[0]->grad_buffer();
        const Shape& si = g.shape();
        for (int b = 0; b < si[0]; ++b)
            for (int c = 0; c < si[1]; ++c)
                for (int h = 0; h < si[2] + 2 * pad; ++h) {
                    const int ih = reflect_index(h - pad, si[2]);
                    for (int w = 0; w < si[3] + 2 * pad; ++w)
                        g.at(b, c, ih, reflect_index(w - pad, si[3])) += self.grad.at(b, c, h, w);
                }
    });
}

Var sum(const Var& x) {
    return make_result(Tensor::scalar(x.value().sum()), {&x}, [](Node& self) {
        Tensor& g = self.parents[0]->grad_buffer();
        const double go = self.grad[0];
        for (double& v : g.values()) v += go;
    });
}

Var mean_abs(const Var& x) {
    const Tensor& xv = x.value();
    if (xv.numel() == 0) throw std::invalid_argument("mean_abs: empty tensor");
    double acc = 0.0;
    for (double v : xv.values()) acc += std::abs(v);
    const double n = static_cast<double>(xv.numel());
    return make_result(Tensor::scalar(acc / n), {&x}, [n](Node& self) {
        Tensor& g = self.parents[0]->grad_buffer();
        const Tensor& in = self.parents[0]->value;
        const double go = self.grad[0] / n;
        for (std::size_t i = 0; i < g.numel(); ++i) {
            // subgradient 0 at the kink
            if (in[i] > 0.0)
                g[i] += go;
            else if (in[i] < 0.0)
                g[i] -= go;
        }
    });
}

Var dot_const(const Var& x, const Tensor& w) {
    if (x.value().numel() != w.numel()) throw std::invalid_argument("dot_const: size mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < w.numel(); ++i) acc += x.value()[i] * w[i];
    return make_result(Tensor::scalar(acc), {&x}, [w](Node& self) {
        Tensor& g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < w.numel(); ++i) g[i] += self.grad[0] * w[i];
    });
}

}  // namespace dlsr::ag
