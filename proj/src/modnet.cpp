#include "vqdisc/modnet.hpp"

#include <cmath>

#include "vqdisc/nn.hpp"

namespace vqdisc::modnet {

SnrContext::SnrContext(double db) : snr_db(db)
{
    if (!std::isfinite(db)) throw ContractError("snr context: non-finite SNR");
    if (db < kMinSnrDb || db > kMaxSnrDb)
        throw ContractError("snr context: " + std::to_string(db) + " dB outside [-5, 30] dB");
}

ModNetParams ModNetParams::zeros(std::size_t c, std::size_t d)
{
    return {Tensor({1, d}), Tensor({d}), Tensor({c + d, c}), Tensor({c}), Tensor({c, c}), Tensor({c})};
}

ModNetParams ModNetParams::random(std::size_t c, std::size_t d, std::mt19937_64& rng)
{
    return {init_uniform({1, d}, 1, rng),          init_uniform({d}, 1, rng),
            init_uniform({c + d, c}, c + d, rng),  init_uniform({c}, c + d, rng),
            init_uniform({c, c}, c, rng),          init_uniform({c}, c, rng)};
}

ModNetLayout ModNetLayout::create(ParamSet& params, const std::string& prefix, std::size_t c, std::size_t d,
                                  std::mt19937_64& rng)
{
    ModNetLayout l{};
    l.snr_w = params.add(prefix + ".snr.w", init_uniform({1, d}, 1, rng));
    l.snr_b = params.add(prefix + ".snr.b", Tensor({d}));
    l.factor_w = params.add(prefix + ".factor.w", init_uniform({c + d, c}, c + d, rng));
    l.factor_b = params.add(prefix + ".factor.b", Tensor({c}));
    l.enhance_w = params.add(prefix + ".enhance.w", init_uniform({c, c}, c, rng));
    l.enhance_b = params.add(prefix + ".enhance.b", Tensor({c}));
    return l;
}

ModNetWeights ModNetLayout::weights(const ParamSet& p) const
{
    return {p.value(snr_w), p.value(snr_b), p.value(factor_w), p.value(factor_b), p.value(enhance_w), p.value(enhance_b)};
}

ModNetGrads ModNetLayout::grads(Gradients& g) const
{
    return {g[snr_w], g[snr_b], g[factor_w], g[factor_b], g[enhance_w], g[enhance_b]};
}

Tensor forward(const Tensor& x, const SnrContext& ctx, const ModNetWeights& w, ModNetCache& cache)
{
    const auto c = w.channels(), d = w.snr_width();
    if (x.last() != c)
        throw ContractError("snr_modnet: input " + shape_str(x.shape) + " vs " + std::to_string(c) + " channels");
    cache.x = x;
    cache.snr_in = Tensor({1}, {ctx.normalized()});
    cache.snr_feat = nn::relu(nn::linear(cache.snr_in, w.snr_w, w.snr_b));

    const Tensor pooled = nn::global_avg_pool(x);
    cache.cat = Tensor({c + d});
    std::copy(pooled.data.begin(), pooled.data.end(), cache.cat.data.begin());
    std::copy(cache.snr_feat.data.begin(), cache.snr_feat.data.end(), cache.cat.data.begin() + static_cast<std::ptrdiff_t>(c));
    cache.factor = nn::sigmoid(nn::linear(cache.cat, w.factor_w, w.factor_b));

    cache.scaled = Tensor(x.shape);
    for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t k = 0; k < c; ++k) cache.scaled.row(r)[k] = x.row(r)[k] * cache.factor[k];

    cache.enhanced = nn::relu(nn::linear(cache.scaled, w.enhance_w, w.enhance_b));
    Tensor out = cache.scaled;
    add_inplace(out, cache.enhanced);
    return out;
}

Tensor backward(const ModNetCache& cache, const ModNetWeights& w, const Tensor& dy, ModNetGrads g)
{
    const auto c = w.channels(), d = w.snr_width();
    require_shape(dy, cache.x.shape, "snr_modnet backward");

    const Tensor de = nn::activation_backward(cache.enhanced, dy, nn::Activation::relu);
    Tensor dscaled = nn::linear_backward(cache.scaled, w.enhance_w, de, g.enhance_w, g.enhance_b);
    add_inplace(dscaled, dy);

    Tensor dx(cache.x.shape);
    Tensor dfactor({c});
    for (std::size_t r = 0; r < dx.rows(); ++r)
        for (std::size_t k = 0; k < c; ++k) {
            dx.row(r)[k] = dscaled.row(r)[k] * cache.factor[k];
            dfactor[k] += dscaled.row(r)[k] * cache.x.row(r)[k];
        }

    const Tensor dzf = nn::activation_backward(cache.factor, dfactor, nn::Activation::sigmoid);
    const Tensor dcat = nn::linear_backward(cache.cat, w.factor_w, dzf, g.factor_w, g.factor_b);

    Tensor dpooled({c});
    std::copy_n(dcat.data.begin(), c, dpooled.data.begin());
    add_inplace(dx, nn::global_avg_pool_backward(cache.x.shape, dpooled));

    Tensor dsnr({d});
    std::copy_n(dcat.data.begin() + static_cast<std::ptrdiff_t>(c), d, dsnr.data.begin());
    const Tensor dpre = nn::activation_backward(cache.snr_feat, dsnr, nn::Activation::relu);
    nn::linear_backward(cache.snr_in, w.snr_w, dpre, g.snr_w, g.snr_b);
    return dx;
}

Tensor snr_modnet(const Tensor& x, const SnrContext& ctx, const ModNetParams& p)
{
    ModNetCache cache;
    return forward(x, ctx, p.weights(), cache);
}

double sample_training_snr(std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> dist(0.0, 15.0);
    return dist(rng);
}

}  // namespace vqdisc::modnet
