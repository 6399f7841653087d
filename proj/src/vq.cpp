#include "vqdisc/vq.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace vqdisc::vq {

Codebook::Codebook(std::size_t n, std::size_t k, double g, double e)
    : size(n), dim(k), vectors(n * k, Real(0)), ema_count(n, Real(0)), ema_sum(n * k, Real(0)), gamma(g), eps(e)
{
    validate();
}

void Codebook::seed_code(std::size_t n, std::span<const Real> row)
{
    if (row.size() != dim) throw ContractError("codebook: seed row has wrong dimension");
    ema_count[n] = Real(1);
    std::copy(row.begin(), row.end(), ema_sum.begin() + static_cast<std::ptrdiff_t>(n * dim));
    refresh_code(n);
}

void Codebook::refresh_code(std::size_t n)
{
    const double denom = static_cast<double>(ema_count[n]) + eps;
    for (std::size_t k = 0; k < dim; ++k)
        vectors[n * dim + k] = static_cast<Real>(static_cast<double>(ema_sum[n * dim + k]) / denom);
}

Tensor Codebook::vectors_tensor() const { return Tensor({size, dim}, vectors); }

void Codebook::validate() const
{
    if (size < 2) throw ContractError("codebook: need at least 2 codewords");
    if (dim == 0) throw ContractError("codebook: zero dimension");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ContractError("codebook: decay rate must lie in [0,1)");
    if (!(eps > 0.0)) throw ContractError("codebook: eps must be positive");
    if (vectors.size() != size * dim || ema_sum.size() != size * dim || ema_count.size() != size)
        throw ContractError("codebook: state arrays do not match N x K");
}

void VqLossConfig::validate() const
{
    if (alpha < 0 || beta < 0) throw ConfigError("vq loss: alpha and beta must be non-negative");
    if (!(tau > 0)) throw ConfigError("vq loss: tau must be positive");
}

namespace {

void check_features(const Tensor& features, const Codebook& cb)
{
    if (features.rank() == 0 || features.last() != cb.dim)
        throw ContractError("vq: feature shape " + shape_str(features.shape) + " does not match codebook dimension " +
                            std::to_string(cb.dim));
}

double sq_dist(const Real* f, const Real* c, std::size_t k)
{
    double d = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        const double diff = static_cast<double>(f[i]) - static_cast<double>(c[i]);
        d += diff * diff;
    }
    return d;
}

}  // namespace

AssignResult nearest_codeword(const Tensor& features, const Codebook& cb, bool with_soft, double tau)
{
    check_features(features, cb);
    if (with_soft && !(tau > 0)) throw ContractError("nearest_codeword: tau must be positive");
    const auto m_count = features.rows(), n_count = cb.size, k = cb.dim;
    AssignResult r;
    r.indices.resize(m_count);
    r.quantized = Tensor(features.shape);
    r.batch_hist.assign(n_count, 0);
    if (with_soft) r.soft_assign.resize(m_count * n_count);

    std::vector<double> dist(n_count);
    for (std::size_t m = 0; m < m_count; ++m) {
        const Real* f = features.row(m);
        std::size_t best = 0;
        for (std::size_t n = 0; n < n_count; ++n) {
            dist[n] = sq_dist(f, cb.vectors.data() + n * k, k);
            if (dist[n] < dist[best]) best = n;
        }
        r.indices[m] = static_cast<std::uint32_t>(best);
        ++r.batch_hist[best];
        std::copy_n(cb.vectors.data() + best * k, k, r.quantized.row(m));

        if (with_soft) {
            double* s = r.soft_assign.data() + m * n_count;
            const double dmin = dist[best];
            double z = 0.0;
            for (std::size_t n = 0; n < n_count; ++n) {
                s[n] = std::exp(-(dist[n] - dmin) / tau);
                z += s[n];
            }
            for (std::size_t n = 0; n < n_count; ++n) s[n] /= z;
        }
    }
    return r;
}

Tensor lookup(const Codebook& cb, std::span<const std::uint32_t> indices, const Shape& shape)
{
    Tensor out(shape);
    if (out.last() != cb.dim || out.rows() != indices.size())
        throw ContractError("lookup: shape " + shape_str(shape) + " does not hold " + std::to_string(indices.size()) +
                            " codewords of dimension " + std::to_string(cb.dim));
    for (std::size_t m = 0; m < indices.size(); ++m) {
        if (indices[m] >= cb.size) throw ContractError("lookup: index out of range");
        std::copy_n(cb.vectors.data() + indices[m] * cb.dim, cb.dim, out.row(m));
    }
    return out;
}

SteResult quantize_ste(const Tensor& features, const Codebook& cb) { return {nearest_codeword(features, cb)}; }

Tensor quantize_ste_backward(const Tensor& grad_quantized) { return grad_quantized; }

double entropy(std::span<const double> p)
{
    double h = 0.0;
    for (double v : p)
        if (v > 0.0) h -= v * std::log(v);
    return h;
}

double kld_uniform(std::span<const double> p)
{
    if (p.empty()) throw ContractError("kld_uniform: empty distribution");
    double total = 0.0;
    for (double v : p) {
        if (!(v >= 0.0)) throw ContractError("kld_uniform: negative or non-finite probability");
        total += v;
    }
    if (std::abs(total - 1.0) > 1e-6) throw ContractError("kld_uniform: probabilities sum to " + std::to_string(total));
    return std::max(0.0, -entropy(p) + std::log(static_cast<double>(p.size())));
}

double perplexity(std::span<const double> usage)
{
    if (usage.empty()) throw ContractError("perplexity: empty distribution");
    const double px = std::exp(entropy(usage));
    return std::clamp(px, 1.0, static_cast<double>(usage.size()));
}

namespace {

template <typename T>
std::vector<double> normalize_impl(std::span<const T> counts)
{
    std::vector<double> p(counts.size());
    double total = 0.0;
    for (auto c : counts) total += static_cast<double>(c);
    if (!(total > 0.0)) {
        // No usage at all: report uniform so downstream diagnostics stay finite.
        std::fill(p.begin(), p.end(), 1.0 / static_cast<double>(p.size()));
        return p;
    }
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = static_cast<double>(counts[i]) / total;
    return p;
}

}  // namespace

std::vector<double> normalize_counts(std::span<const double> counts) { return normalize_impl(counts); }
std::vector<double> normalize_counts(std::span<const std::uint64_t> counts) { return normalize_impl(counts); }
std::vector<double> normalize_counts(std::span<const float> counts) { return normalize_impl(counts); }

VqLoss vq_loss(const Tensor& features, const AssignResult& assign, const Codebook& cb, const VqLossConfig& cfg)
{
    check_features(features, cb);
    cfg.validate();
    const auto m_count = features.rows(), n_count = cb.size, k = cb.dim;
    if (assign.indices.size() != m_count) throw ContractError("vq_loss: assignment does not match features");
    if (m_count == 0) throw ContractError("vq_loss: no features");
    const double inv_m = 1.0 / static_cast<double>(m_count);

    VqLoss out;
    out.grad_features = Tensor(features.shape);
    out.grad_codebook = Tensor({n_count, k});

    double sq = 0.0;
    for (std::size_t m = 0; m < m_count; ++m) {
        const auto n = assign.indices[m];
        const Real* f = features.row(m);
        const Real* c = cb.vectors.data() + n * k;
        Real* gf = out.grad_features.row(m);
        Real* gc = out.grad_codebook.row(n);
        for (std::size_t i = 0; i < k; ++i) {
            const double diff = static_cast<double>(f[i]) - static_cast<double>(c[i]);
            sq += diff * diff;
            gf[i] += static_cast<Real>(2.0 * cfg.alpha * diff * inv_m);
            gc[i] += static_cast<Real>(-2.0 * diff * inv_m);
        }
    }
    out.codebook_term = sq * inv_m;
    out.commitment_term = cfg.alpha * sq * inv_m;

    if (!assign.soft_assign.empty()) {
        if (assign.soft_assign.size() != m_count * n_count)
            throw ContractError("vq_loss: soft assignment has wrong size");
        out.soft_usage.assign(n_count, 0.0);
        for (std::size_t m = 0; m < m_count; ++m)
            for (std::size_t n = 0; n < n_count; ++n) out.soft_usage[n] += assign.soft_assign[m * n_count + n];
        for (auto& p : out.soft_usage) p *= inv_m;
    } else if (cfg.beta > 0) {
        throw ContractError("vq_loss: distribution term needs soft assignments");
    }

    if (cfg.beta > 0) {
        out.kld_term = cfg.beta * kld_uniform(out.soft_usage);
        // dL/ds_mn = beta (ln p_n + 1) / M, then through the row softmax and
        // the squared distance into both the feature and the codeword.
        std::vector<double> g(n_count);
        for (std::size_t n = 0; n < n_count; ++n)
            g[n] = cfg.beta * (std::log(std::max(out.soft_usage[n], 1e-300)) + 1.0) * inv_m;
        std::vector<double> gf(k);
        for (std::size_t m = 0; m < m_count; ++m) {
            const double* s = assign.soft_assign.data() + m * n_count;
            double dot = 0.0;
            for (std::size_t n = 0; n < n_count; ++n) dot += s[n] * g[n];
            const Real* f = features.row(m);
            std::fill(gf.begin(), gf.end(), 0.0);
            for (std::size_t n = 0; n < n_count; ++n) {
                const double dz = s[n] * (g[n] - dot);
                if (dz == 0.0) continue;
                const double dd = -dz / cfg.tau;
                const Real* c = cb.vectors.data() + n * k;
                Real* gc = out.grad_codebook.row(n);
                for (std::size_t i = 0; i < k; ++i) {
                    const double diff = static_cast<double>(f[i]) - static_cast<double>(c[i]);
                    gf[i] += 2.0 * dd * diff;
                    gc[i] += static_cast<Real>(-2.0 * dd * diff);
                }
            }
            Real* dst = out.grad_features.row(m);
            for (std::size_t i = 0; i < k; ++i) dst[i] += static_cast<Real>(gf[i]);
        }
    }
    out.total = out.codebook_term + out.commitment_term + out.kld_term;
    return out;
}

void EmaAccumulator::add(const Tensor& features, const AssignResult& assign)
{
    const auto k = features.last();
    if (sums.size() != counts.size() * k || assign.indices.size() != features.rows())
        throw ContractError("ema accumulator: shape mismatch");
    for (std::size_t m = 0; m < assign.indices.size(); ++m) {
        const auto n = assign.indices[m];
        counts[n] += 1.0;
        const Real* f = features.row(m);
        for (std::size_t i = 0; i < k; ++i) sums[n * k + i] += f[i];
    }
}

void EmaAccumulator::merge(const EmaAccumulator& other)
{
    if (other.counts.size() != counts.size() || other.sums.size() != sums.size())
        throw ContractError("ema accumulator: merge shape mismatch");
    for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
    for (std::size_t i = 0; i < sums.size(); ++i) sums[i] += other.sums[i];
}

void ema_update(Codebook& cb, const EmaAccumulator& stats)
{
    if (stats.counts.size() != cb.size || stats.sums.size() != cb.size * cb.dim)
        throw ContractError("ema_update: statistics do not match codebook");
    const double g = cb.gamma;
    for (std::size_t n = 0; n < cb.size; ++n) {
        cb.ema_count[n] = static_cast<Real>(g * cb.ema_count[n] + (1.0 - g) * stats.counts[n]);
        for (std::size_t i = 0; i < cb.dim; ++i) {
            auto& s = cb.ema_sum[n * cb.dim + i];
            s = static_cast<Real>(g * s + (1.0 - g) * stats.sums[n * cb.dim + i]);
        }
        cb.refresh_code(n);
    }
}

void ema_update(Codebook& cb, const Tensor& features, const AssignResult& assign)
{
    check_features(features, cb);
    EmaAccumulator acc(cb.size, cb.dim);
    acc.add(features, assign);
    ema_update(cb, acc);
}

std::size_t reseed_dead_codes(Codebook& cb, const Tensor& features, double threshold, std::mt19937_64& rng)
{
    check_features(features, cb);
    const auto rows = features.rows();
    if (rows == 0) throw ContractError("reseed_dead_codes: empty feature batch");
    std::uniform_int_distribution<std::size_t> pick(0, rows - 1);
    std::size_t replaced = 0;
    for (std::size_t n = 0; n < cb.size; ++n) {
        if (cb.ema_count[n] >= threshold) continue;
        const Real* row = features.row(pick(rng));
        cb.seed_code(n, {row, cb.dim});
        ++replaced;
    }
    return replaced;
}

void init_from_features(Codebook& cb, const Tensor& features, std::mt19937_64& rng)
{
    check_features(features, cb);
    const auto rows = features.rows();
    if (rows == 0) throw ContractError("init_from_features: empty feature batch");
    std::vector<std::size_t> order(rows);
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (rows >= cb.size) {
        // Partial Fisher-Yates: first N entries become a uniform sample without replacement.
        for (std::size_t i = 0; i < cb.size; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, rows - 1);
            std::swap(order[i], order[pick(rng)]);
        }
    } else {
        std::uniform_int_distribution<std::size_t> pick(0, rows - 1);
        order.resize(cb.size);
        for (auto& o : order) o = pick(rng);
    }
    for (std::size_t n = 0; n < cb.size; ++n) cb.seed_code(n, {features.row(order[n]), cb.dim});
}

}  // namespace vqdisc::vq
