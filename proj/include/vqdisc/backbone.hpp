#pragma once

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "vqdisc/params.hpp"

namespace vqdisc {

// Shape-preserving per-stage mixing block. Implementations register their
// own arrays under a name prefix and keep whatever they need for the
// backward pass in the cache.
class TokenMixer {
public:
    using Cache = std::vector<Tensor>;

    virtual ~TokenMixer() = default;
    virtual Tensor forward(const ParamSet& p, const Tensor& x, Cache& cache) const = 0;
    virtual Tensor backward(const ParamSet& p, const Cache& cache, const Tensor& dy, Gradients& g) const = 0;
};

// x + relu(x W1 + b1) W2 + b2, applied token-wise.
class ResidualMlp final : public TokenMixer {
public:
    ResidualMlp(ParamSet& params, const std::string& prefix, std::size_t channels, std::size_t hidden,
                std::mt19937_64& rng);

    Tensor forward(const ParamSet& p, const Tensor& x, Cache& cache) const override;
    Tensor backward(const ParamSet& p, const Cache& cache, const Tensor& dy, Gradients& g) const override;

private:
    std::size_t w1_, b1_, w2_, b2_;
};

}  // namespace vqdisc
