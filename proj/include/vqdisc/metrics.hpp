#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "vqdisc/tensor.hpp"

namespace vqdisc::metrics {

double mse(const Tensor& a, const Tensor& b);
// 10 log10(1 / mse) on the [0,1] range; +infinity for identical images.
double psnr(const Tensor& a, const Tensor& b);
double psnr_from_mse(double mse);

inline constexpr std::array<double, 5> kMsSsimWeights{0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
inline constexpr std::size_t kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;

// Largest scale count usable for an image of this size: at most 3 below
// 176 px on the short side, otherwise 5, further limited so the coarsest
// scale still fits the 11-tap window. Returns 0 when even one scale fails.
std::size_t default_ms_ssim_scales(std::size_t height, std::size_t width);

// Images are [H, W, C] in [0,1]. Throws ContractError when
// min(H,W) / 2^(scales-1) < 11.
double ms_ssim(const Tensor& a, const Tensor& b, std::size_t scales);
double ms_ssim(const Tensor& a, const Tensor& b);

double bcr(std::uint64_t payload_bits, std::size_t height, std::size_t width, std::size_t channels);
double ber(std::span<const std::uint8_t> tx, std::span<const std::uint8_t> rx);

struct MetricReport {
    double psnr_db = 0;
    double ms_ssim = 0;
    double bcr = 0;
    double ber = 0;
    std::array<double, 3> perplexity{};
    std::array<double, 3> kld{};
};

}  // namespace vqdisc::metrics
