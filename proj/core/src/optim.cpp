#include "dlsr/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace dlsr {

Adam::Adam(ParamList params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    for (const auto& p : params_.items()) {
        state_.m.emplace_back(p.var.shape(), 0.0);
        state_.v.emplace_back(p.var.shape(), 0.0);
    }
}

void Adam::step() {
    ++state_.steps;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(state_.steps));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(state_.steps));
    const double decay = 1.0 - cfg_.lr * cfg_.weight_decay;
    const auto& items = params_.items();
    for (std::size_t i = 0; i < items.size(); ++i) {
        ag::Var var = items[i].var;
        Tensor& theta = var.mutable_value();
        const bool has_grad = var.has_grad();
        const double* g = has_grad ? var.grad().data() : nullptr;
        double* m = state_.m[i].data();
        double* v = state_.v[i].data();
        double* t = theta.data();
        for (std::size_t k = 0; k < theta.numel(); ++k) {
            const double gk = g ? g[k] : 0.0;
            m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * gk;
            v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * gk * gk;
            const double mhat = m[k] / bc1;
            const double vhat = v[k] / bc2;
            t[k] = t[k] * decay - cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

void Adam::load_state(AdamState state) {
    const auto& items = params_.items();
    if (state.m.size() != items.size() || state.v.size() != items.size())
        throw std::invalid_argument("optimizer state has " + std::to_string(state.m.size()) + " entries, expected " +
                                    std::to_string(items.size()));
    for (std::size_t i = 0; i < items.size(); ++i)
        if (state.m[i].shape() != items[i].var.shape() || state.v[i].shape() != items[i].var.shape())
            throw std::invalid_argument("optimizer state shape mismatch for '" + items[i].name + "'");
    state_ = std::move(state);
}

}  // namespace dlsr
