#pragma once

// Vector quantization: nearest-codeword assignment, straight-through
// gradients, the VQ loss with a KL-to-uniform usage regularizer, and the
// exponential-moving-average codebook update.

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "vqdisc/tensor.hpp"

namespace vqdisc::vq {

/// N codewords of dimension K with their EMA statistics.
///
/// Invariant: after initialize(), ema_update() or reseed_dead_codes(),
/// vectors[n] == ema_sum[n] / (ema_count[n] + eps) for every touched n,
/// evaluated in double and rounded to Real.
struct Codebook {
    std::size_t size = 0;  // N
    std::size_t dim = 0;   // K
    std::vector<Real> vectors;    // N*K
    std::vector<Real> ema_count;  // N
    std::vector<Real> ema_sum;    // N*K
    double gamma = 0.99;
    double eps = 1e-5;

    Codebook() = default;
    Codebook(std::size_t n, std::size_t k, double gamma = 0.99, double eps = 1e-5);

    // Sets codeword n from a feature row: count 1, sum = row.
    void seed_code(std::size_t n, std::span<const Real> row);
    // Recomputes vectors[n] from the EMA state.
    void refresh_code(std::size_t n);

    std::span<const Real> code(std::size_t n) const { return {vectors.data() + n * dim, dim}; }
    Tensor vectors_tensor() const;
    void validate() const;
};

struct AssignResult {
    std::vector<std::uint32_t> indices;  // M
    Tensor quantized;                    // same shape as the features
    std::vector<std::uint64_t> batch_hist;  // N, sums to M
    std::vector<double> soft_assign;     // M*N, rows sum to 1 (empty unless requested)
};

struct VqLossConfig {
    double alpha = 0.25;  // commitment weight
    double beta = 0.05;   // distribution weight
    double tau = 1.0;     // soft-assignment temperature

    void validate() const;
};

// Picks argmin_n ||f_m - c_n||_2 for every row of `features` (innermost
// axis K); ties go to the lowest index. Soft assignments, softmax over
// -||f_m - c_n||^2 / tau, are filled when with_soft is set.
AssignResult nearest_codeword(const Tensor& features, const Codebook& cb, bool with_soft = false,
                              double tau = 1.0);

// Looks up codewords for indices; out-of-range indices are a contract error.
Tensor lookup(const Codebook& cb, std::span<const std::uint32_t> indices, const Shape& shape);

// Straight-through quantizer. Forward returns the nearest codewords; the
// backward is the identity on the feature gradient and sends nothing to
// the codebook.
struct SteResult {
    AssignResult assign;
    Tensor& output() { return assign.quantized; }
};
SteResult quantize_ste(const Tensor& features, const Codebook& cb);
Tensor quantize_ste_backward(const Tensor& grad_quantized);

// D_KL(p || uniform) = -H(p) + ln N with natural logs.
double kld_uniform(std::span<const double> p);
double entropy(std::span<const double> p);
double perplexity(std::span<const double> usage);
std::vector<double> normalize_counts(std::span<const double> counts);
std::vector<double> normalize_counts(std::span<const std::uint64_t> counts);
std::vector<double> normalize_counts(std::span<const float> counts);

struct VqLoss {
    double codebook_term = 0;    // mean_m ||sg[f_m] - q_m||^2
    double commitment_term = 0;  // alpha * mean_m ||f_m - sg[q_m]||^2
    double kld_term = 0;         // beta * kld_uniform(column mean of soft_assign)
    double total = 0;
    std::vector<double> soft_usage;  // N
    Tensor grad_features;            // same shape as features
    Tensor grad_codebook;            // [N, K]
};

// `assign` must come from nearest_codeword(features, cb, true, cfg.tau).
VqLoss vq_loss(const Tensor& features, const AssignResult& assign, const Codebook& cb,
               const VqLossConfig& cfg);

/// Per-epoch sufficient statistics for the EMA update: usage counts psi_n
/// and per-code feature sums.
struct EmaAccumulator {
    std::vector<double> counts;
    std::vector<double> sums;

    EmaAccumulator() = default;
    EmaAccumulator(std::size_t n, std::size_t k) : counts(n, 0.0), sums(n * k, 0.0) {}
    void add(const Tensor& features, const AssignResult& assign);
    void merge(const EmaAccumulator& other);
};

// count_n <- g*count_n + (1-g)*psi_n; sum_n <- g*sum_n + (1-g)*S_n;
// vectors_n <- sum_n / (count_n + eps), for every n.
void ema_update(Codebook& cb, const EmaAccumulator& stats);
void ema_update(Codebook& cb, const Tensor& features, const AssignResult& assign);

// Replaces every code with ema_count < threshold by a uniformly sampled row
// of `features`. Returns the number of codes replaced.
std::size_t reseed_dead_codes(Codebook& cb, const Tensor& features, double threshold, std::mt19937_64& rng);

// Seeds all N codes from rows of `features` sampled uniformly (without
// replacement when there are at least N rows).
void init_from_features(Codebook& cb, const Tensor& features, std::mt19937_64& rng);

}  // namespace vqdisc::vq
