#include "vqdisc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace vqdisc::metrics {

namespace {

void check_pair(const Tensor& a, const Tensor& b, const char* what)
{
    if (!same_shape(a, b))
        throw ContractError(std::string(what) + ": extents differ, " + shape_str(a.shape) + " vs " + shape_str(b.shape));
    if (a.numel() == 0) throw ContractError(std::string(what) + ": empty image");
}

// Single-channel plane in double precision.
struct Plane {
    std::size_t h = 0, w = 0;
    std::vector<double> v;

    double& at(std::size_t i, std::size_t j) { return v[i * w + j]; }
    double at(std::size_t i, std::size_t j) const { return v[i * w + j]; }
};

Plane channel_plane(const Tensor& img, std::size_t c)
{
    Plane p{img.dim(0), img.dim(1), {}};
    p.v.resize(p.h * p.w);
    const auto ch = img.dim(2);
    for (std::size_t i = 0; i < p.h * p.w; ++i) p.v[i] = img.data[i * ch + c];
    return p;
}

std::array<double, kSsimWindow> gaussian_taps()
{
    std::array<double, kSsimWindow> g{};
    const double mid = (kSsimWindow - 1) / 2.0;
    double total = 0.0;
    for (std::size_t i = 0; i < kSsimWindow; ++i) {
        const double d = static_cast<double>(i) - mid;
        total += g[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
    }
    for (auto& x : g) x /= total;
    return g;
}

// Separable 'valid' Gaussian filter.
Plane filter_valid(const Plane& p)
{
    static const auto g = gaussian_taps();
    const auto k = kSsimWindow;
    Plane rows{p.h, p.w - k + 1, {}};
    rows.v.resize(rows.h * rows.w);
    for (std::size_t i = 0; i < rows.h; ++i)
        for (std::size_t j = 0; j < rows.w; ++j) {
            double acc = 0.0;
            for (std::size_t t = 0; t < k; ++t) acc += g[t] * p.at(i, j + t);
            rows.at(i, j) = acc;
        }
    Plane out{p.h - k + 1, rows.w, {}};
    out.v.resize(out.h * out.w);
    for (std::size_t i = 0; i < out.h; ++i)
        for (std::size_t j = 0; j < out.w; ++j) {
            double acc = 0.0;
            for (std::size_t t = 0; t < k; ++t) acc += g[t] * rows.at(i + t, j);
            out.at(i, j) = acc;
        }
    return out;
}

Plane product(const Plane& a, const Plane& b)
{
    Plane out{a.h, a.w, std::vector<double>(a.v.size())};
    for (std::size_t i = 0; i < a.v.size(); ++i) out.v[i] = a.v[i] * b.v[i];
    return out;
}

// 2x2 average pooling; odd extents are zero-padded by one and the pad is
// counted in the average.
Plane downsample(const Plane& p)
{
    const auto ho = (p.h + 1) / 2, wo = (p.w + 1) / 2;
    const std::size_t pad_h = p.h % 2, pad_w = p.w % 2;
    Plane out{ho, wo, std::vector<double>(ho * wo, 0.0)};
    for (std::size_t i = 0; i < ho; ++i)
        for (std::size_t j = 0; j < wo; ++j) {
            double acc = 0.0;
            for (std::size_t a = 0; a < 2; ++a)
                for (std::size_t b = 0; b < 2; ++b) {
                    const auto si = 2 * i + a, sj = 2 * j + b;
                    if (si < pad_h || sj < pad_w) continue;
                    const auto ri = si - pad_h, rj = sj - pad_w;
                    if (ri < p.h && rj < p.w) acc += p.at(ri, rj);
                }
            out.at(i, j) = acc / 4.0;
        }
    return out;
}

struct SsimTerms {
    double ssim;
    double cs;
};

SsimTerms ssim_terms(const Plane& x, const Plane& y)
{
    constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    const Plane mx = filter_valid(x), my = filter_valid(y);
    const Plane sxx = filter_valid(product(x, x)), syy = filter_valid(product(y, y)), sxy = filter_valid(product(x, y));
    double ssim = 0.0, cs = 0.0;
    for (std::size_t i = 0; i < mx.v.size(); ++i) {
        const double mux = mx.v[i], muy = my.v[i];
        const double vx = sxx.v[i] - mux * mux;
        const double vy = syy.v[i] - muy * muy;
        const double cov = sxy.v[i] - mux * muy;
        const double c = (2.0 * cov + c2) / (vx + vy + c2);
        const double l = (2.0 * mux * muy + c1) / (mux * mux + muy * muy + c1);
        cs += c;
        ssim += l * c;
    }
    const auto n = static_cast<double>(mx.v.size());
    return {ssim / n, cs / n};
}

}  // namespace

double mse(const Tensor& a, const Tensor& b)
{
    check_pair(a, b, "mse");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(a.numel());
}

double psnr_from_mse(double m)
{
    if (m <= 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / m);
}

double psnr(const Tensor& a, const Tensor& b) { return psnr_from_mse(mse(a, b)); }

std::size_t default_ms_ssim_scales(std::size_t height, std::size_t width)
{
    const auto side = std::min(height, width);
    std::size_t scales = side < 176 ? 3 : 5;
    while (scales > 0 && (side >> (scales - 1)) < kSsimWindow) --scales;
    return scales;
}

double ms_ssim(const Tensor& a, const Tensor& b, std::size_t scales)
{
    check_pair(a, b, "ms_ssim");
    if (a.rank() != 3) throw ContractError("ms_ssim: expected [H,W,C] images");
    if (scales == 0 || scales > kMsSsimWeights.size()) throw ContractError("ms_ssim: scales must be in [1,5]");
    const auto side = std::min(a.dim(0), a.dim(1));
    if ((side >> (scales - 1)) < kSsimWindow)
        throw ContractError("ms_ssim: " + shape_str(a.shape) + " is too small for " + std::to_string(scales) + " scales");

    double wsum = 0.0;
    for (std::size_t s = 0; s < scales; ++s) wsum += kMsSsimWeights[s];

    double total = 0.0;
    const auto channels = a.dim(2);
    for (std::size_t c = 0; c < channels; ++c) {
        Plane x = channel_plane(a, c), y = channel_plane(b, c);
        double value = 1.0;
        for (std::size_t s = 0; s < scales; ++s) {
            const auto t = ssim_terms(x, y);
            const double w = kMsSsimWeights[s] / wsum;
            if (s + 1 < scales) {
                value *= std::pow(std::max(t.cs, 0.0), w);
                x = downsample(x);
                y = downsample(y);
            } else {
                value *= std::pow(std::max(t.ssim, 0.0), w);
            }
        }
        total += value;
    }
    return total / static_cast<double>(channels);
}

double ms_ssim(const Tensor& a, const Tensor& b)
{
    const auto scales = default_ms_ssim_scales(a.dim(0), a.dim(1));
    if (scales == 0) throw ContractError("ms_ssim: image " + shape_str(a.shape) + " smaller than the 11-tap window");
    return ms_ssim(a, b, scales);
}

double bcr(std::uint64_t payload_bits, std::size_t height, std::size_t width, std::size_t channels)
{
    if (height == 0 || width == 0 || channels == 0) throw ContractError("bcr: extents must be positive");
    return static_cast<double>(payload_bits) / (static_cast<double>(height) * width * channels * 8.0);
}

double ber(std::span<const std::uint8_t> tx, std::span<const std::uint8_t> rx)
{
    if (tx.size() != rx.size()) throw ContractError("ber: streams differ in length");
    if (tx.empty()) return 0.0;
    std::size_t diff = 0;
    for (std::size_t i = 0; i < tx.size(); ++i) diff += (tx[i] != 0) != (rx[i] != 0);
    return static_cast<double>(diff) / static_cast<double>(tx.size());
}

}  // namespace vqdisc::metrics
