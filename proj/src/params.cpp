#include "vqdisc/params.hpp"

#include <cmath>

namespace vqdisc {

std::size_t ParamSet::add(std::string name, Tensor value)
{
    if (by_name_.count(name)) throw ContractError("duplicate parameter name: " + name);
    const auto idx = params_.size();
    by_name_.emplace(name, idx);
    Tensor grad = Tensor::zeros_like(value);
    params_.push_back({std::move(name), std::move(value), std::move(grad)});
    return idx;
}

std::size_t ParamSet::index(const std::string& name) const
{
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw ContractError("unknown parameter: " + name);
    return it->second;
}

Gradients ParamSet::make_gradients() const
{
    Gradients g;
    g.reserve(params_.size());
    for (const auto& p : params_) g.push_back(Tensor::zeros_like(p.value));
    return g;
}

void ParamSet::zero_grad()
{
    for (auto& p : params_) p.grad.fill(Real(0));
}

void ParamSet::accumulate(const Gradients& g, Real scale)
{
    if (g.size() != params_.size()) throw ContractError("gradient buffer does not match parameter set");
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& dst = params_[i].grad.data;
        const auto& src = g[i].data;
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += scale * src[k];
    }
}

std::size_t ParamSet::scalar_count() const
{
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.numel();
    return n;
}

Tensor init_uniform(Shape shape, std::size_t fan_in, std::mt19937_64& rng)
{
    Tensor t(std::move(shape));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : t.data) v = static_cast<Real>(dist(rng));
    return t;
}

}  // namespace vqdisc
