#include "vqdisc/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace vqdisc {

void AdamW::step(ParamSet& params, double lr)
{
    for (const auto& p : params)
        if (!p.grad.all_finite()) throw Error("adamw: non-finite gradient in parameter '" + p.name + "'");

    if (m_.empty()) {
        for (const auto& p : params) {
            m_.push_back(Tensor::zeros_like(p.value));
            v_.push_back(Tensor::zeros_like(p.value));
        }
    }
    if (m_.size() != params.size()) throw ContractError("adamw: parameter set changed between steps");

    ++step_;
    const double b1 = cfg_.beta1, b2 = cfg_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
    const double decay = 1.0 - lr * cfg_.weight_decay;

    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& value = params[i].value.data;
        const auto& grad = params[i].grad.data;
        auto& m = m_[i].data;
        auto& v = v_[i].data;
        for (std::size_t k = 0; k < value.size(); ++k) {
            const double g = grad[k];
            const double mk = b1 * m[k] + (1.0 - b1) * g;
            const double vk = b2 * v[k] + (1.0 - b2) * g * g;
            m[k] = static_cast<Real>(mk);
            v[k] = static_cast<Real>(vk);
            const double update = (mk / c1) / (std::sqrt(vk / c2) + cfg_.eps);
            value[k] = static_cast<Real>(value[k] * decay - lr * update);
        }
    }
}

double CosineSchedule::lr(double t) const
{
    const double tc = std::clamp(t, 0.0, t_max);
    return min_lr + 0.5 * (base_lr - min_lr) * (1.0 + std::cos(std::numbers::pi * tc / t_max));
}

double global_norm(const ParamSet& params)
{
    double ss = 0.0;
    for (const auto& p : params)
        for (Real g : p.grad.data) ss += static_cast<double>(g) * g;
    return std::sqrt(ss);
}

namespace {

template <typename Range, typename Get>
double clip_impl(Range& range, Get get, double max_norm)
{
    double ss = 0.0;
    for (auto& item : range)
        for (Real g : get(item).data) ss += static_cast<double>(g) * g;
    const double norm = std::sqrt(ss);
    if (norm > max_norm) {
        const auto s = static_cast<Real>(max_norm / norm);
        for (auto& item : range) scale_inplace(get(item), s);
    }
    return norm;
}

}  // namespace

double clip_global_norm(ParamSet& params, double max_norm)
{
    return clip_impl(params, [](Parameter& p) -> Tensor& { return p.grad; }, max_norm);
}

double clip_global_norm(std::vector<Tensor>& grads, double max_norm)
{
    return clip_impl(grads, [](Tensor& t) -> Tensor& { return t; }, max_norm);
}

}  // namespace vqdisc
