#pragma once

// SNR-conditioned channel attention. The SNR passes through a small
// extraction layer, is concatenated with the globally pooled feature, and
// predicts a per-channel scale in (0,1); a 1x1 conv + relu enhancer is
// added back as a residual.

#include <random>
#include <string>

#include "vqdisc/params.hpp"

namespace vqdisc::modnet {

inline constexpr double kMinSnrDb = -5.0;
inline constexpr double kMaxSnrDb = 30.0;
inline constexpr double kSnrScaleDb = 15.0;

struct SnrContext {
    double snr_db = 0.0;

    explicit SnrContext(double db);
    Real normalized() const { return static_cast<Real>(snr_db / kSnrScaleDb); }
};

struct ModNetWeights {
    const Tensor& snr_w;      // [1, d]
    const Tensor& snr_b;      // [d]
    const Tensor& factor_w;   // [C + d, C]
    const Tensor& factor_b;   // [C]
    const Tensor& enhance_w;  // [C, C]
    const Tensor& enhance_b;  // [C]

    std::size_t channels() const { return factor_b.numel(); }
    std::size_t snr_width() const { return snr_b.numel(); }
};

struct ModNetGrads {
    Tensor& snr_w;
    Tensor& snr_b;
    Tensor& factor_w;
    Tensor& factor_b;
    Tensor& enhance_w;
    Tensor& enhance_b;
};

/// Owning parameter block, for standalone use and tests.
struct ModNetParams {
    Tensor snr_w, snr_b, factor_w, factor_b, enhance_w, enhance_b;

    static ModNetParams zeros(std::size_t channels, std::size_t snr_width);
    static ModNetParams random(std::size_t channels, std::size_t snr_width, std::mt19937_64& rng);
    ModNetWeights weights() const { return {snr_w, snr_b, factor_w, factor_b, enhance_w, enhance_b}; }
    ModNetGrads grads() { return {snr_w, snr_b, factor_w, factor_b, enhance_w, enhance_b}; }
};

/// Indices of one block's arrays inside a ParamSet.
struct ModNetLayout {
    std::size_t snr_w, snr_b, factor_w, factor_b, enhance_w, enhance_b;

    // Registers "<prefix>.snr.{w,b}", "<prefix>.factor.{w,b}", "<prefix>.enhance.{w,b}".
    static ModNetLayout create(ParamSet& params, const std::string& prefix, std::size_t channels,
                               std::size_t snr_width, std::mt19937_64& rng);
    ModNetWeights weights(const ParamSet& p) const;
    ModNetGrads grads(Gradients& g) const;
};

struct ModNetCache {
    Tensor x;
    Tensor snr_in;   // [1]
    Tensor snr_feat; // relu output [d]
    Tensor cat;      // [C + d]
    Tensor factor;   // sigmoid output [C]
    Tensor scaled;
    Tensor enhanced; // relu output
};

Tensor forward(const Tensor& x, const SnrContext& ctx, const ModNetWeights& w, ModNetCache& cache);
Tensor backward(const ModNetCache& cache, const ModNetWeights& w, const Tensor& dy, ModNetGrads g);

// Convenience forward without a cache.
Tensor snr_modnet(const Tensor& x, const SnrContext& ctx, const ModNetParams& p);

// Uniform draw from the [0, 15] dB training range.
double sample_training_snr(std::mt19937_64& rng);

}  // namespace vqdisc::modnet
