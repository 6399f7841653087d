#pragma once

#include <cmath>
#include <functional>
#include <random>

#include "vqdisc/tensor.hpp"

namespace testing {

using vqdisc::Real;
using vqdisc::Shape;
using vqdisc::Tensor;

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0)
{
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> u(lo, hi);
    for (auto& v : t.data) v = static_cast<Real>(u(rng));
    return t;
}

// Values bounded away from zero, so relu kinks are not crossed by a finite difference.
inline Tensor kink_free_tensor(Shape shape, std::mt19937_64& rng)
{
    Tensor t = random_tensor(std::move(shape), rng, 0.05, 1.0);
    std::bernoulli_distribution neg(0.5);
    for (auto& v : t.data)
        if (neg(rng)) v = -v;
    return t;
}

inline double dot(const Tensor& a, const Tensor& b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return s;
}

// ||a - b|| / max(||a||, ||b||, 1e-3). The floor keeps gradients far below the
// central-difference roundoff (about 1e-10 * |loss| / h) from being judged relatively.
inline double rel_error(const std::vector<double>& a, const std::vector<double>& b)
{
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double denom = std::max({std::sqrt(na), std::sqrt(nb), 1e-3});
    return std::sqrt(diff) / denom;
}

inline std::vector<double> as_doubles(const Tensor& t) { return {t.data.begin(), t.data.end()}; }

// Central differences of `loss` with respect to the given entries of `x`
// (all entries when `entries` is empty).
inline std::vector<double> numeric_grad(Tensor& x, const std::function<double()>& loss,
                                        const std::vector<std::size_t>& entries = {}, double h = 1e-6)
{
    std::vector<std::size_t> idx = entries;
    if (idx.empty())
        for (std::size_t i = 0; i < x.numel(); ++i) idx.push_back(i);
    std::vector<double> g;
    for (auto i : idx) {
        const Real keep = x[i];
        x[i] = static_cast<Real>(keep + h);
        const double up = loss();
        x[i] = static_cast<Real>(keep - h);
        const double down = loss();
        x[i] = keep;
        g.push_back((up - down) / (2.0 * h));
    }
    return g;
}

inline std::vector<double> pick(const Tensor& t, const std::vector<std::size_t>& entries)
{
    std::vector<double> out;
    if (entries.empty()) return as_doubles(t);
    for (auto i : entries) out.push_back(static_cast<double>(t[i]));
    return out;
}

inline std::vector<std::size_t> sample_entries(std::size_t n, std::size_t max_count, std::mt19937_64& rng)
{
    std::vector<std::size_t> out;
    if (n <= max_count) {
        for (std::size_t i = 0; i < n; ++i) out.push_back(i);
        return out;
    }
    std::uniform_int_distribution<std::size_t> d(0, n - 1);
    for (std::size_t i = 0; i < max_count; ++i) out.push_back(d(rng));
    return out;
}

}  // namespace testing
