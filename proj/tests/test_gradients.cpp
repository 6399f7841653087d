// Central finite-difference checks of every differentiable primitive,
// built against the double-precision library.

#include <doctest.h>

#include "support.hpp"
#include "vqdisc/backbone.hpp"
#include "vqdisc/codec.hpp"
#include "vqdisc/modnet.hpp"
#include "vqdisc/nn.hpp"
#include "vqdisc/vq.hpp"

using namespace vqdisc;
using namespace testing;

static_assert(sizeof(Real) == 8, "gradient checks need the double-precision build");

namespace {

constexpr double kTol = 1e-4;
constexpr int kShapes = 5;

std::size_t dim(std::mt19937_64& rng, std::size_t lo, std::size_t hi)
{
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

}  // namespace

TEST_CASE("linear gradients")
{
    std::mt19937_64 rng(1);
    for (int s = 0; s < kShapes; ++s) {
        const auto a = dim(rng, 1, 4), b = dim(rng, 1, 4), in = dim(rng, 1, 7), out = dim(rng, 1, 7);
        auto x = random_tensor({a, b, in}, rng), w = random_tensor({in, out}, rng), bias = random_tensor({out}, rng);
        const auto proj = random_tensor({a, b, out}, rng);
        auto loss = [&] { return dot(proj, nn::linear(x, w, bias)); };
        Tensor dw({in, out}), db({out});
        const auto dx = nn::linear_backward(x, w, proj, dw, db);
        CHECK(rel_error(as_doubles(dx), numeric_grad(x, loss)) < kTol);
        CHECK(rel_error(as_doubles(dw), numeric_grad(w, loss)) < kTol);
        CHECK(rel_error(as_doubles(db), numeric_grad(bias, loss)) < kTol);
    }
}

TEST_CASE("space_to_depth and depth_to_space gradients")
{
    std::mt19937_64 rng(2);
    for (int s = 0; s < kShapes; ++s) {
        const std::size_t r = dim(rng, 1, 3), h = r * dim(rng, 1, 3), w = r * dim(rng, 1, 3), c = dim(rng, 1, 4);
        auto x = random_tensor({h, w, c}, rng);
        const auto proj = random_tensor({h / r, w / r, r * r * c}, rng);
        auto loss = [&] { return dot(proj, nn::space_to_depth(x, r)); };
        // Both maps are permutations, so each one's adjoint is the other.
        CHECK(rel_error(as_doubles(nn::depth_to_space(proj, r)), numeric_grad(x, loss)) < kTol);

        auto y = random_tensor({h / r, w / r, r * r * c}, rng);
        const auto proj2 = random_tensor({h, w, c}, rng);
        auto loss2 = [&] { return dot(proj2, nn::depth_to_space(y, r)); };
        CHECK(rel_error(as_doubles(nn::space_to_depth(proj2, r)), numeric_grad(y, loss2)) < kTol);
    }
}

TEST_CASE("transposed convolution gradients")
{
    std::mt19937_64 rng(3);
    for (int s = 0; s < kShapes; ++s) {
        const auto k = dim(rng, 1, 3), h = dim(rng, 1, 3), w = dim(rng, 1, 3), in = dim(rng, 1, 4), out = dim(rng, 1, 4);
        auto x = random_tensor({h, w, in}, rng), kernel = random_tensor({k, k, in, out}, rng);
        auto bias = random_tensor({out}, rng);
        const auto proj = random_tensor({k * h, k * w, out}, rng);
        auto loss = [&] { return dot(proj, nn::transposed_conv2d(x, kernel, bias, k)); };
        Tensor dk(kernel.shape), db({out});
        const auto dx = nn::transposed_conv2d_backward(x, kernel, k, proj, dk, db);
        CHECK(rel_error(as_doubles(dx), numeric_grad(x, loss)) < kTol);
        CHECK(rel_error(as_doubles(dk), numeric_grad(kernel, loss)) < kTol);
        CHECK(rel_error(as_doubles(db), numeric_grad(bias, loss)) < kTol);
    }
}

TEST_CASE("activation gradients")
{
    std::mt19937_64 rng(4);
    for (auto kind : {nn::Activation::relu, nn::Activation::sigmoid}) {
        for (int s = 0; s < kShapes; ++s) {
            auto x = kink_free_tensor({dim(rng, 1, 5), dim(rng, 1, 5), dim(rng, 1, 4)}, rng);
            const auto proj = random_tensor(x.shape, rng);
            auto loss = [&] { return dot(proj, nn::activation(x, kind)); };
            const auto dx = nn::activation_backward(nn::activation(x, kind), proj, kind);
            CHECK(rel_error(as_doubles(dx), numeric_grad(x, loss)) < kTol);
        }
    }
}

TEST_CASE("pooling gradients")
{
    std::mt19937_64 rng(5);
    for (int s = 0; s < kShapes; ++s) {
        const std::size_t r = dim(rng, 1, 4), h = r * dim(rng, 1, 3), w = r * dim(rng, 1, 3), c = dim(rng, 1, 5);
        auto x = random_tensor({h, w, c}, rng);

        const auto pg = random_tensor({c}, rng);
        auto gap = [&] { return dot(pg, nn::global_avg_pool(x)); };
        CHECK(rel_error(as_doubles(nn::global_avg_pool_backward(x.shape, pg)), numeric_grad(x, gap)) < kTol);

        const auto pa = random_tensor({h / r, w / r, c}, rng);
        auto area = [&] { return dot(pa, nn::area_downsample(x, r)); };
        CHECK(rel_error(as_doubles(nn::area_downsample_backward(x.shape, r, pa)), numeric_grad(x, area)) < kTol);
    }
}

TEST_CASE("snr modnet gradients")
{
    std::mt19937_64 rng(6);
    for (int s = 0; s < kShapes; ++s) {
        const auto c = dim(rng, 1, 6), d = dim(rng, 1, 5);
        auto p = modnet::ModNetParams::random(c, d, rng);
        // Non-zero biases keep the hidden relus away from their kinks.
        p.snr_b = random_tensor({d}, rng, 0.2, 0.5);
        auto x = random_tensor({dim(rng, 1, 4), dim(rng, 1, 4), c}, rng);
        const modnet::SnrContext ctx(std::uniform_real_distribution<double>(0.0, 15.0)(rng));
        const auto proj = random_tensor(x.shape, rng);

        auto loss = [&] {
            modnet::ModNetCache cache;
            return dot(proj, modnet::forward(x, ctx, p.weights(), cache));
        };
        modnet::ModNetCache cache;
        modnet::forward(x, ctx, p.weights(), cache);
        auto g = modnet::ModNetParams::zeros(c, d);
        const auto dx = modnet::backward(cache, p.weights(), proj, g.grads());

        CHECK(rel_error(as_doubles(dx), numeric_grad(x, loss)) < kTol);
        CHECK(rel_error(as_doubles(g.snr_w), numeric_grad(p.snr_w, loss)) < kTol);
        CHECK(rel_error(as_doubles(g.snr_b), numeric_grad(p.snr_b, loss)) < kTol);
        CHECK(rel_error(as_doubles(g.factor_w), numeric_grad(p.factor_w, loss)) < kTol);
        CHECK(rel_error(as_doubles(g.factor_b), numeric_grad(p.factor_b, loss)) < kTol);
        CHECK(rel_error(as_doubles(g.enhance_w), numeric_grad(p.enhance_w, loss)) < kTol);
        CHECK(rel_error(as_doubles(g.enhance_b), numeric_grad(p.enhance_b, loss)) < kTol);
    }
}

TEST_CASE("residual mlp gradients")
{
    std::mt19937_64 rng(7);
    for (int s = 0; s < kShapes; ++s) {
        const auto c = dim(rng, 1, 6);
        ParamSet params;
        const ResidualMlp block(params, "blk", c, dim(rng, 1, 6), rng);
        auto x = random_tensor({dim(rng, 1, 4), dim(rng, 1, 4), c}, rng);
        const auto proj = random_tensor(x.shape, rng);
        auto loss = [&] {
            TokenMixer::Cache cache;
            return dot(proj, block.forward(params, x, cache));
        };
        TokenMixer::Cache cache;
        block.forward(params, x, cache);
        auto g = params.make_gradients();
        const auto dx = block.backward(params, cache, proj, g);
        CHECK(rel_error(as_doubles(dx), numeric_grad(x, loss)) < kTol);
        for (std::size_t i = 0; i < params.size(); ++i)
            CHECK(rel_error(as_doubles(g[i]), numeric_grad(params[i].value, loss)) < kTol);
    }
}

namespace {

codec::CodecConfig random_codec(std::mt19937_64& rng)
{
    codec::CodecConfig cfg;
    cfg.height = 8 * dim(rng, 1, 2);
    cfg.width = 8 * dim(rng, 1, 2);
    for (std::size_t i = 0; i < codec::kStages; ++i) {
        cfg.enc_width[i] = dim(rng, 2, 5);
        cfg.dec_width[i] = dim(rng, 2, 5);
        cfg.codebook_size[i] = std::size_t{1} << dim(rng, 1, 3);
    }
    cfg.block_depth = dim(rng, 1, 2);
    cfg.snr_width = dim(rng, 1, 4);
    return cfg;
}

// Sets every bias to a small random value so no unit sits exactly on a relu kink.
void jitter_biases(ParamSet& params, std::mt19937_64& rng)
{
    for (auto& p : params)
        if (p.name.size() > 2 && p.name.ends_with(".b"))
            for (auto& v : p.value.data) v = static_cast<Real>(std::uniform_real_distribution<double>(-0.3, 0.3)(rng));
}

}  // namespace

TEST_CASE("codec encoder gradients")
{
    std::mt19937_64 rng(8);
    for (int s = 0; s < kShapes; ++s) {
        const auto cfg = random_codec(rng);
        codec::Model model(cfg, rng());
        jitter_biases(model.params(), rng);
        const auto image = random_tensor(cfg.image_shape(), rng, 0.0, 1.0);
        const double snr = std::uniform_real_distribution<double>(0.0, 15.0)(rng);
        codec::StageFeatures proj;
        for (std::size_t i = 0; i < codec::kStages; ++i) proj[i] = random_tensor(cfg.stage_shape(i), rng);

        auto loss = [&] {
            const auto f = model.encode(image, snr);
            double l = 0.0;
            for (std::size_t i = 0; i < codec::kStages; ++i) l += dot(proj[i], f[i]);
            return l;
        };
        auto g = model.params().make_gradients();
        model.encode_backward(model.encode_traced(image, snr), proj, g);
        for (std::size_t i = 0; i < model.params().size(); ++i) {
            auto& p = model.params()[i];
            const auto entries = sample_entries(p.value.numel(), 6, rng);
            const auto err = rel_error(pick(g[i], entries), numeric_grad(p.value, loss, entries));
            INFO(p.name);
            CHECK(err < kTol);
        }
    }
}

TEST_CASE("codec decoder gradients")
{
    std::mt19937_64 rng(9);
    for (int s = 0; s < kShapes; ++s) {
        const auto cfg = random_codec(rng);
        codec::Model model(cfg, rng());
        jitter_biases(model.params(), rng);
        codec::StageFeatures fhat;
        for (std::size_t i = 0; i < codec::kStages; ++i) fhat[i] = random_tensor(cfg.stage_shape(i), rng);
        const double snr = std::uniform_real_distribution<double>(0.0, 15.0)(rng);
        const auto proj = random_tensor(cfg.image_shape(), rng);

        auto loss = [&] { return dot(proj, model.decode(fhat, snr)); };
        auto g = model.params().make_gradients();
        const auto dfhat = model.decode_backward(model.decode_traced(fhat, snr), proj, g);
        for (std::size_t i = 0; i < codec::kStages; ++i)
            CHECK(rel_error(as_doubles(dfhat[i]), numeric_grad(fhat[i], loss)) < kTol);
        for (std::size_t i = model.encoder_param_count(); i < model.params().size(); ++i) {
            auto& p = model.params()[i];
            const auto entries = sample_entries(p.value.numel(), 6, rng);
            INFO(p.name);
            CHECK(rel_error(pick(g[i], entries), numeric_grad(p.value, loss, entries)) < kTol);
        }
        for (std::size_t i = 0; i < model.encoder_param_count(); ++i)
            CHECK(rel_error(as_doubles(g[i]), std::vector<double>(g[i].numel(), 0.0)) == 0.0);
    }
}

TEST_CASE("multi-scale fusion gradients")
{
    std::mt19937_64 rng(10);
    for (int s = 0; s < kShapes; ++s) {
        const auto cfg = random_codec(rng);
        codec::Model model(cfg, rng());
        codec::StageFeatures f;
        for (std::size_t i = 0; i < codec::kStages; ++i) f[i] = random_tensor(cfg.stage_shape(i), rng);
        const auto proj = random_tensor({cfg.height / 8, cfg.width / 8, cfg.dec_width[0]}, rng);
        auto loss = [&] { return dot(proj, model.fuse(f)); };
        auto g = model.params().make_gradients();
        const auto df = model.fuse_backward(f, proj, g);
        for (std::size_t i = 0; i < codec::kStages; ++i)
            CHECK(rel_error(as_doubles(df[i]), numeric_grad(f[i], loss)) < kTol);
        for (std::size_t i = 0; i < codec::kStages; ++i) {
            const auto w = model.params().index("dec.fuse." + std::to_string(i + 1) + ".w");
            CHECK(rel_error(as_doubles(g[w]), numeric_grad(model.params()[w].value, loss)) < kTol);
        }
    }
}

TEST_CASE("vq loss gradients with a fixed assignment")
{
    std::mt19937_64 rng(11);
    for (int s = 0; s < kShapes; ++s) {
        const auto n = std::size_t{1} << dim(rng, 1, 3), k = dim(rng, 1, 5), m = dim(rng, 2, 12);
        vq::Codebook cb(n, k);
        auto feats = random_tensor({m, k}, rng);
        for (std::size_t c = 0; c < n; ++c) {
            const auto row = random_tensor({k}, rng);
            cb.seed_code(c, row.span());
        }
        const vq::VqLossConfig cfg{0.25, 0.05, std::uniform_real_distribution<double>(0.5, 2.0)(rng)};
        const auto assign = vq::nearest_codeword(feats, cb, true, cfg.tau);
        const auto full = vq::vq_loss(feats, assign, cb, cfg);

        // The hard assignment is held fixed; the soft one follows the perturbation.
        auto with = [&](const Tensor& f) {
            auto a = vq::nearest_codeword(f, cb, true, cfg.tau);
            a.indices = assign.indices;
            return vq::vq_loss(f, a, cb, cfg);
        };
        auto feature_loss = [&] {
            const auto l = with(feats);
            return l.commitment_term + l.kld_term;
        };
        CHECK(rel_error(as_doubles(full.grad_features), numeric_grad(feats, feature_loss)) < kTol);

        Tensor codes({n, k}, cb.vectors);
        auto codebook_loss = [&] {
            cb.vectors = codes.data;
            const auto l = with(feats);
            return l.codebook_term + l.kld_term;
        };
        const auto num = numeric_grad(codes, codebook_loss);
        cb.vectors = codes.data;
        CHECK(rel_error(as_doubles(full.grad_codebook), num) < kTol);
    }
}

TEST_CASE("straight-through quantizer passes gradients unchanged")
{
    std::mt19937_64 rng(12);
    for (int s = 0; s < kShapes; ++s) {
        const auto g = random_tensor({dim(rng, 1, 6), dim(rng, 1, 6)}, rng);
        CHECK(vq::quantize_ste_backward(g).data == g.data);
    }
}
