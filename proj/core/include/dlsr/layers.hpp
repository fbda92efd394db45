#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "dlsr/autograd.hpp"

namespace dlsr {

using Rng = std::mt19937_64;

struct NamedParam {
    std::string name;
    ag::Var var;
};

// Ordered collection of named learnable tensors; order is construction order.
class ParamList {
public:
    void add(std::string name, const ag::Var& v) { items_.push_back({std::move(name), v}); }
    void append(const ParamList& other, const std::string& prefix = {});

    const std::vector<NamedParam>& items() const noexcept { return items_; }
    std::size_t size() const noexcept { return items_.size(); }
    std::size_t scalar_count() const;
    const NamedParam* find(const std::string& name) const;

    void set_requires_grad(bool on) const;
    void zero_grad() const;

private:
    std::vector<NamedParam> items_;
};

// Convolution with uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) init for weight and bias.
class Conv2d {
public:
    Conv2d() = default;
    Conv2d(int in_channels, int out_channels, int kernel, ConvGeometry geometry, bool bias, Rng& rng);

    // "same" padding for odd kernels at stride 1.
    static Conv2d same(int in_channels, int out_channels, int kernel, bool bias, Rng& rng, int dilation = 1,
                       int groups = 1);

    ag::Var operator()(const ag::Var& x) const;

    void collect(ParamList& out, const std::string& name) const;
    void reinitialize(Rng& rng);

    const ag::Var& weight() const { return weight_; }
    const ag::Var& bias() const { return bias_; }
    bool has_bias() const { return bias_.defined(); }
    const ConvGeometry& geometry() const { return geometry_; }
    int in_channels() const { return in_channels_; }
    int out_channels() const { return out_channels_; }
    int kernel() const { return kernel_; }

private:
    int in_channels_ = 0;
    int out_channels_ = 0;
    int kernel_ = 1;
    ConvGeometry geometry_{};
    ag::Var weight_;
    ag::Var bias_;
};

}  // namespace dlsr
