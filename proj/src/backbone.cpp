#include "vqdisc/backbone.hpp"

#include "vqdisc/nn.hpp"

namespace vqdisc {

ResidualMlp::ResidualMlp(ParamSet& params, const std::string& prefix, std::size_t channels, std::size_t hidden,
                         std::mt19937_64& rng)
{
    w1_ = params.add(prefix + ".fc1.w", init_uniform({channels, hidden}, channels, rng));
    b1_ = params.add(prefix + ".fc1.b", Tensor({hidden}));
    w2_ = params.add(prefix + ".fc2.w", init_uniform({hidden, channels}, hidden, rng));
    b2_ = params.add(prefix + ".fc2.b", Tensor({channels}));
}

Tensor ResidualMlp::forward(const ParamSet& p, const Tensor& x, Cache& cache) const
{
    Tensor h = nn::relu(nn::linear(x, p.value(w1_), p.value(b1_)));
    Tensor y = nn::linear(h, p.value(w2_), p.value(b2_));
    add_inplace(y, x);
    cache = {x, std::move(h)};
    return y;
}

Tensor ResidualMlp::backward(const ParamSet& p, const Cache& cache, const Tensor& dy, Gradients& g) const
{
    const Tensor& x = cache.at(0);
    const Tensor& h = cache.at(1);
    const Tensor dh = nn::linear_backward(h, p.value(w2_), dy, g[w2_], g[b2_]);
    const Tensor dpre = nn::activation_backward(h, dh, nn::Activation::relu);
    Tensor dx = nn::linear_backward(x, p.value(w1_), dpre, g[w1_], g[b1_]);
    add_inplace(dx, dy);
    return dx;
}

}  // namespace vqdisc
