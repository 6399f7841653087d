#pragma once

#include <cstdint>
#include <vector>

#include "vqdisc/params.hpp"

namespace vqdisc {

struct AdamWConfig {
    double weight_decay = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// AdamW with decoupled weight decay. Moments are created lazily on the
/// first step so the optimizer can be constructed before the model.
class AdamW {
public:
    explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

    // Applies one update using each parameter's grad. Throws Error naming
    // the parameter if any gradient is non-finite.
    void step(ParamSet& params, double lr);

    std::uint64_t steps() const { return step_; }
    const AdamWConfig& config() const { return cfg_; }
    const std::vector<Tensor>& first_moments() const { return m_; }
    const std::vector<Tensor>& second_moments() const { return v_; }

private:
    AdamWConfig cfg_;
    std::vector<Tensor> m_, v_;
    std::uint64_t step_ = 0;
};

/// Cosine annealing from base_lr at t=0 down to min_lr at t=t_max.
struct CosineSchedule {
    double base_lr = 2e-4;
    double min_lr = 1e-6;
    double t_max = 300;

    double lr(double t) const;
};

double global_norm(const ParamSet& params);

// Scales every grad by max_norm / g when the global L2 norm g exceeds
// max_norm. Returns the norm before clipping.
double clip_global_norm(ParamSet& params, double max_norm = 5.0);
double clip_global_norm(std::vector<Tensor>& grads, double max_norm = 5.0);

}  // namespace vqdisc
