#include "dlsr/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace dlsr {

void ParamList::append(const ParamList& other, const std::string& prefix) {
    for (const auto& p : other.items_) items_.push_back({prefix + p.name, p.var});
}

std::size_t ParamList::scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : items_) n += p.var.value().numel();
    return n;
}

const NamedParam* ParamList::find(const std::string& name) const {
    for (const auto& p : items_)
        if (p.name == name) return &p;
    return nullptr;
}

void ParamList::set_requires_grad(bool on) const {
    for (const auto& p : items_) {
        ag::Var v = p.var;
        v.set_requires_grad(on);
    }
}

void ParamList::zero_grad() const {
    for (const auto& p : items_) {
        ag::Var v = p.var;
        v.zero_grad();
    }
}

Conv2d::Conv2d(int in_channels, int out_channels, int kernel, ConvGeometry geometry, bool bias, Rng& rng)
    : in_channels_(in_channels), out_channels_(out_channels), kernel_(kernel), geometry_(geometry) {
    if (in_channels < 1 || out_channels < 1 || kernel < 1)
        throw std::invalid_argument("Conv2d: channels and kernel must be positive");
    if (in_channels % geometry.groups != 0 || out_channels % geometry.groups != 0)
        throw std::invalid_argument("Conv2d: channels not divisible by groups");
    weight_ = ag::Var(Tensor({out_channels, in_channels / geometry.groups, kernel, kernel}), true);
    if (bias) bias_ = ag::Var(Tensor({out_channels}), true);
    reinitialize(rng);
}

Conv2d Conv2d::same(int in_channels, int out_channels, int kernel, bool bias, Rng& rng, int dilation, int groups) {
    if (kernel % 2 == 0) throw std::invalid_argument("Conv2d::same requires an odd kernel");
    ConvGeometry g{1, dilation * (kernel - 1) / 2, dilation, groups};
    return Conv2d(in_channels, out_channels, kernel, g, bias, rng);
}

void Conv2d::reinitialize(Rng& rng) {
    const int fan_in = (in_channels_ / geometry_.groups) * kernel_ * kernel_;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : weight_.mutable_value().values()) v = dist(rng);
    if (bias_.defined())
        for (double& v : bias_.mutable_value().values()) v = dist(rng);
}

ag::Var Conv2d::operator()(const ag::Var& x) const {
    if (x.value().rank() != 4 || x.shape()[1] != in_channels_)
        throw std::invalid_argument("Conv2d: expected " + std::to_string(in_channels_) + " input channels, got " +
                                    shape_string(x.shape()));
    return ag::conv2d(x, weight_, bias_.defined() ? &bias_ : nullptr, geometry_);
}

void Conv2d::collect(ParamList& out, const std::string& name) const {
    out.add(name + ".weight", weight_);
    if (bias_.defined()) out.add(name + ".bias", bias_);
}

}  // namespace dlsr
