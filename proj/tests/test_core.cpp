#include <doctest.h>

#include <cmath>
#include <random>

#include "support.hpp"
#include "vqdisc/checkpoint.hpp"
#include "vqdisc/modnet.hpp"
#include "vqdisc/nn.hpp"
#include "vqdisc/optim.hpp"

using namespace vqdisc;

TEST_CASE("linear matches a naive loop")
{
    std::mt19937_64 rng(1);
    const auto x = testing::random_tensor({3, 5}, rng), w = testing::random_tensor({5, 4}, rng);
    const auto b = testing::random_tensor({4}, rng);
    const auto y = nn::linear(x, w, b);
    REQUIRE(y.shape == Shape{3, 4});
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 4; ++j) {
            double acc = b[j];
            for (std::size_t k = 0; k < 5; ++k) acc += static_cast<double>(x[i * 5 + k]) * w[k * 4 + j];
            CHECK(y[i * 4 + j] == doctest::Approx(acc).epsilon(1e-5));
        }
    CHECK_THROWS_AS(nn::linear(x, testing::random_tensor({4, 4}, rng), b), ContractError);
}

TEST_CASE("space_to_depth layout")
{
    Tensor x({2, 2, 1}, std::vector<float>{1, 2, 3, 4});
    const auto y = nn::space_to_depth(x, 2);
    CHECK(y.shape == Shape{1, 1, 4});
    CHECK(y.data == std::vector<float>{1, 2, 3, 4});
    CHECK(nn::depth_to_space(y, 2).data == x.data);
    CHECK_THROWS_AS(nn::space_to_depth(Tensor({3, 2, 1}), 2), ContractError);
}

TEST_CASE("transposed convolution")
{
    Tensor x({1, 1, 1}, std::vector<float>{2});
    Tensor k({2, 2, 1, 1}, std::vector<float>{1, 2, 3, 4});
    const auto y = nn::transposed_conv2d(x, k, Tensor({1}, 0.5f), 2);
    CHECK(y.shape == Shape{2, 2, 1});
    CHECK(y.data == std::vector<float>{2.5f, 4.5f, 6.5f, 8.5f});
    CHECK_THROWS_AS(nn::transposed_conv2d(x, Tensor({3, 3, 1, 1}), Tensor({1}), 2), ContractError);
}

TEST_CASE("activations and pooling")
{
    const Tensor x({4}, std::vector<float>{-1, 0, 2, 3});
    CHECK(nn::relu(x).data == std::vector<float>{0, 0, 2, 3});
    CHECK(nn::sigmoid(Tensor({1}, 0.0f))[0] == 0.5f);
    Tensor img({2, 2, 2}, std::vector<float>{1, 10, 2, 20, 3, 30, 4, 40});
    CHECK(nn::global_avg_pool(img).data == std::vector<float>{2.5f, 25.0f});
    CHECK(nn::area_downsample(img, 2).data == std::vector<float>{2.5f, 25.0f});
}

TEST_CASE("snr modnet")
{
    CHECK_THROWS_AS(modnet::SnrContext(-6.0), ContractError);
    CHECK_THROWS_AS(modnet::SnrContext(31.0), ContractError);
    CHECK(modnet::SnrContext(15.0).normalized() == 1.0f);

    std::mt19937_64 rng(2);
    const auto p = modnet::ModNetParams::random(4, 3, rng);
    const auto x = testing::random_tensor({2, 3, 4}, rng);
    modnet::ModNetCache cache;
    const auto y = modnet::forward(x, modnet::SnrContext(5.0), p.weights(), cache);
    CHECK(y.shape == x.shape);
    for (Real f : cache.factor.data) CHECK((f > 0.0f && f < 1.0f));
    CHECK(modnet::snr_modnet(x, modnet::SnrContext(5.0), p).data == y.data);
    // The SNR changes the output.
    CHECK(modnet::snr_modnet(x, modnet::SnrContext(12.0), p).data != y.data);

    for (int i = 0; i < 1000; ++i) {
        const double s = modnet::sample_training_snr(rng);
        CHECK((s >= 0.0 && s <= 15.0));
    }
}

TEST_CASE("adamw")
{
    ParamSet ps;
    ps.add("w", Tensor({2}, std::vector<float>{1.0f, -2.0f}));
    ps[0].grad = Tensor({2}, std::vector<float>{0.5f, -0.1f});
    AdamW opt(AdamWConfig{0.1});
    opt.step(ps, 0.01);
    // First step: m_hat = g, v_hat = g^2, so the update is sign(g) up to eps.
    CHECK(ps[0].value[0] == doctest::Approx(1.0 * (1 - 0.001) - 0.01 * 0.5 / (0.5 + 1e-8)));
    CHECK(ps[0].value[1] == doctest::Approx(-2.0 * (1 - 0.001) + 0.01 * 0.1 / (0.1 + 1e-8)));

    ps[0].grad[0] = std::nanf("");
    CHECK_THROWS_WITH_AS(opt.step(ps, 0.01), doctest::Contains("'w'"), Error);

    ps.add("dup", Tensor({1}));
    CHECK_THROWS(ps.add("dup", Tensor({1})));
}

TEST_CASE("cosine schedule and clipping")
{
    const CosineSchedule s{2e-4, 1e-6, 300};
    CHECK(s.lr(0) == doctest::Approx(2e-4));
    CHECK(s.lr(150) == doctest::Approx((2e-4 + 1e-6) / 2));
    CHECK(s.lr(300) == doctest::Approx(1e-6));
    CHECK(s.lr(400) == doctest::Approx(1e-6));

    std::vector<Tensor> g{Tensor({2}, std::vector<float>{3, 4})};
    CHECK(clip_global_norm(g, 1.0) == doctest::Approx(5.0));
    CHECK(g[0][0] == doctest::Approx(0.6));
    CHECK(clip_global_norm(g, 5.0) == doctest::Approx(1.0));
    CHECK(g[0][1] == doctest::Approx(0.8));
}

TEST_CASE("checkpoint container")
{
    std::vector<NamedArray> arrays{{"a", {2, 2}, {1, 2, 3, 4}}, {"b.c", {3}, {-1, 0.5f, 7}}};
    const auto bytes = encode_checkpoint(arrays);
    CHECK(bytes.substr(0, 8) == std::string("VQDISC1\0", 8));
    const auto back = decode_checkpoint(bytes);
    REQUIRE(back.size() == 2);
    CHECK(back[1].name == "b.c");
    CHECK(back[1].shape == Shape{3});
    CHECK(back[1].data == arrays[1].data);
    CHECK(find_array(back, "a").data == arrays[0].data);
    CHECK_THROWS(find_array(back, "missing"));
    CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 1)), FramingError);
    CHECK_THROWS_AS(decode_checkpoint("NOTACKPT" + bytes.substr(8)), FramingError);
}
