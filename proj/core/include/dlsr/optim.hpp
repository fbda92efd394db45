#pragma once

#include <cstdint>
#include <vector>

#include "dlsr/layers.hpp"

namespace dlsr {

struct AdamConfig {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-8;  // decoupled: theta -= lr * wd * theta before the moment step
};

struct AdamState {
    std::int64_t steps = 0;
    std::vector<Tensor> m;
    std::vector<Tensor> v;
};

// Adam with decoupled weight decay over a fixed parameter list.
// Parameters without an accumulated gradient are treated as having zero gradient.
class Adam {
public:
    Adam(ParamList params, AdamConfig cfg);

    void step();
    void zero_grad() const { params_.zero_grad(); }

    double lr() const { return cfg_.lr; }
    void set_lr(double lr) { cfg_.lr = lr; }
    const AdamConfig& config() const { return cfg_; }
    const ParamList& params() const { return params_; }

    const AdamState& state() const { return state_; }
    // Rejects states whose moment shapes do not match the parameters.
    void load_state(AdamState state);

private:
    ParamList params_;
    AdamConfig cfg_;
    AdamState state_;
};

}  // namespace dlsr
