#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "dlsr/conv.hpp"
#include "dlsr/tensor.hpp"

namespace dlsr::ag {

struct Node {
    Tensor value;
    Tensor grad;  // sized lazily on first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    Tensor& grad_buffer();
};

// Handle to a node of the reverse-mode tape. Copies share the node.
class Var {
public:
    Var() = default;
    explicit Var(Tensor value, bool requires_grad = false);

    bool defined() const noexcept { return static_cast<bool>(node_); }
    const Tensor& value() const { return node_->value; }
    Tensor& mutable_value() { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    const Tensor& grad() const { return node_->grad; }
    bool has_grad() const { return !node_->grad.empty(); }
    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool on) { node_->requires_grad = on; }
    void zero_grad() { node_->grad = Tensor(); }

    // Runs reverse accumulation from this (scalar) node.
    void backward() const;

    const std::shared_ptr<Node>& node() const { return node_; }
    static Var from_node(std::shared_ptr<Node> n) {
        Var v;
        v.node_ = std::move(n);
        return v;
    }

private:
    std::shared_ptr<Node> node_;
};

// While alive, ops record no graph edges (inference mode).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_mode_enabled();

Var constant(Tensor value);

Var conv2d(const Var& x, const Var& weight, const Var* bias, const ConvGeometry& g);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var sub_const(const Var& a, const Tensor& b);
Var mul(const Var& a, const Var& b);
Var mul_scalar(const Var& a, double s);
Var relu(const Var& x);
Var sigmoid(const Var& x);

// Row `row` of a 2-D tensor, softmax-normalised, as a 1-D var.
Var softmax_row(const Var& logits2d, int row);
// Softmax of a 1-D var.
Var softmax(const Var& logits);

// sum_i weights[i] * xs[i]; weights is a 1-D var of length xs.size().
Var weighted_sum(const std::vector<Var>& xs, const Var& weights);
// weights[index] * x
Var scale_by(const Var& x, const Var& weights, int index);

Var concat_channels(const std::vector<Var>& xs);
// Windows are clamped to the input extent; output size is max(1, floor((n-k)/s)+1).
Var max_pool2d(const Var& x, int kernel, int stride);
// align_corners = false, matching the usual framework convention.
Var upsample_bilinear(const Var& x, int out_h, int out_w);
Var pixel_shuffle(const Var& x, int factor);
Var reflect_pad(const Var& x, int pad);

Var sum(const Var& x);
Var mean_abs(const Var& x);
Var dot_const(const Var& x, const Tensor& w);

int pooled_size(int n, int kernel, int stride);

}  // namespace dlsr::ag
