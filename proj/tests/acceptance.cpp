// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Criterion 1 runs the double-precision gradient binary.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>

#include "vqdisc/harness.hpp"

using namespace vqdisc;
namespace h = vqdisc::harness;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

Outcome gradient_suite()
{
    const auto t0 = Clock::now();
    const std::string cmd = std::string("\"") + VQDISC_GRADCHECK + "\" > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    const double secs = seconds_since(t0);
    return {rc == 0 && secs < 60.0,
            fmt("finite-difference suite %s in %.1f s (float64 build, tolerance 1e-4, 5 shapes per primitive)",
                rc == 0 ? "passed" : "FAILED", secs)};
}

// Eb/N0 at which the theoretical curve reaches `ber`, by bisection.
double theory_ebn0_for(double ber)
{
    double lo = -10.0, hi = 15.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (phy::ber_theory_qpsk_awgn(mid) > ber ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

Outcome modem_fidelity()
{
    const auto t0 = Clock::now();
    const auto ofdm = phy::OfdmConfig::ieee80211a();
    const std::size_t frame_bits = 96 * 128, frames = 82;  // 1,007,616 payload bits per point
    const std::vector<phy::Complex> flat(ofdm.fft_size, phy::Complex(1.0, 0.0));
    double worst = 0.0;
    std::string curve;
    bool covered_hi = false, covered_lo = false;
    for (double ebn0 = -1.0; ebn0 <= 7.01; ebn0 += 1.0) {
        const double snr = ebn0 - phy::effective_ebn0_db(0.0, ofdm);
        std::mt19937_64 rng(h::derive_seed(2, {static_cast<std::uint64_t>(ebn0 * 10 + 100)}));
        std::size_t errors = 0, total = 0;
        for (std::size_t f = 0; f < frames; ++f) {
            phy::Bits bits(frame_bits);
            for (auto& b : bits) b = rng() & 1U;
            const auto frame = phy::build_frame(bits, ofdm, 0);
            const auto rx = phy::apply_channel(frame, phy::AwgnChannel{phy::noise_power_from_snr_db(snr)}, rng);
            const auto out = phy::demap_payload(phy::equalize_with_csi(rx, ofdm, flat), frame.header);
            for (std::size_t i = 0; i < bits.size(); ++i) errors += bits[i] != out[i];
            total += bits.size();
        }
        const double ber = static_cast<double>(errors) / static_cast<double>(total);
        if (ber > 1e-1 || ber < 1e-3) continue;
        covered_hi |= ber > 3e-2;
        covered_lo |= ber < 3e-3;
        const double gap = std::abs(theory_ebn0_for(ber) - ebn0);
        worst = std::max(worst, gap);
        curve += fmt(" %.0fdB:%.2e", ebn0, ber);
    }
    const double secs = seconds_since(t0);
    return {covered_hi && covered_lo && worst <= 0.5 && secs < 60.0,
            fmt("max horizontal gap %.3f dB over BER in [1e-3,1e-1], >=1e6 bits/point, %.1f s;", worst, secs) + curve};
}

codec::CodecState quick_state(std::uint64_t seed)
{
    h::RunConfig cfg;
    cfg.seed = seed;
    cfg.synthetic_count = 16;
    cfg.epochs = 1;
    cfg.t_max = 1;
    return h::train(cfg, h::dataset_for(cfg)).state;
}

Outcome loopback_exactness()
{
    const codec::CodecConfig cfg;
    const auto ofdm = phy::OfdmConfig::ieee80211a();
    std::mt19937_64 rng(3);
    std::size_t exact = 0;
    for (int t = 0; t < 100; ++t) {
        codec::IndexBundle b;
        b.config_hash = cfg.hash();
        for (std::size_t s = 0; s < codec::kStages; ++s) {
            const auto shape = cfg.stage_shape(s);
            b.grid[s] = {shape[0], shape[1]};
            std::uniform_int_distribution<std::uint32_t> d(0, static_cast<std::uint32_t>(cfg.codebook_size[s] - 1));
            for (std::size_t m = 0; m < cfg.stage_tokens(s); ++m) b.indices[s].push_back(d(rng));
        }
        const auto frame = phy::build_frame(phy::indices_to_bits(b, cfg), ofdm, cfg.hash());
        const auto bits = phy::demap_payload(phy::estimate_and_equalize(frame, ofdm), frame.header);
        exact += phy::bits_to_indices(bits, cfg) == b;
    }

    const auto state = quick_state(3);
    const auto data = h::synthetic_corpus(8, cfg.height, cfg.width, 33, false);
    std::size_t same_image = 0;
    for (const auto& img : data.images) {
        const auto link = h::transmit_image(state, img, 10.0, std::nullopt, h::CsiMode::ls, rng);
        const auto direct = state.reconstruct(state.transmit_indices(img, 10.0), 10.0);
        same_image += link.received == link.sent && link.reconstruction.data == direct.data;
    }
    return {exact == 100 && same_image == data.size(),
            fmt("%zu/100 random payloads recovered bit-exactly; %zu/%zu images identical to direct decoding", exact,
                same_image, data.size())};
}

Outcome rayleigh_circularity()
{
    const auto ofdm = phy::OfdmConfig::ieee80211a();
    std::mt19937_64 rng(4);
    double max_err = 0.0, err_energy = 0.0, ref_energy = 0.0;
    for (int t = 0; t < 200; ++t) {
        phy::Bits bits(96 * 20);
        for (auto& b : bits) b = rng() & 1U;
        const auto sent = phy::qpsk_map(bits);
        const auto frame = phy::build_frame(bits, ofdm, 0);
        const auto taps = phy::draw_rayleigh_taps(8, 3.0, rng);

        const auto clean = phy::apply_channel(frame, phy::RayleighChannel{taps, 0.0}, rng);
        const auto eq = phy::equalize_with_csi(clean, ofdm, phy::frequency_response(taps, ofdm.fft_size));
        for (std::size_t i = 0; i < sent.size(); ++i) max_err = std::max(max_err, std::abs(eq.symbols[i] - sent[i]));

        const auto noisy = phy::apply_channel(frame, phy::RayleighChannel{taps, phy::noise_power_from_snr_db(30.0)}, rng);
        const auto ls = phy::estimate_and_equalize(noisy, ofdm);
        for (std::size_t i = 0; i < sent.size(); ++i) {
            err_energy += std::norm(ls.symbols[i] - sent[i]);
            ref_energy += std::norm(sent[i]);
        }
    }
    const double evm = std::sqrt(err_energy / ref_energy);
    return {max_err < 1e-6 && evm < 0.05,
            fmt("perfect-CSI max symbol error %.2e (bound 1e-6); LS-equalized EVM at 30 dB %.2f%% over 200 "
                "L=8 channels (bound 5%%)",
                max_err, 100.0 * evm)};
}

Outcome codebook_oracle()
{
    std::mt19937_64 rng(5);
    std::normal_distribution<double> noise(0.0, 0.15);
    const std::size_t m = 400, k = 4;
    Tensor data({m, k});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < k; ++j)
            data.row(i)[j] = static_cast<Real>((i < m / 4 ? 1.0 : -0.5) * (j + 1.0) / k + noise(rng));

    // Reference: Lloyd's algorithm in double from the same starting codes.
    vq::Codebook cb(2, k, 0.99, 1e-5);
    cb.seed_code(0, {data.row(0), k});
    cb.seed_code(1, {data.row(m - 1), k});
    std::vector<double> c(2 * k);
    for (std::size_t j = 0; j < 2 * k; ++j) c[j] = j < k ? data.row(0)[j] : data.row(m - 1)[j - k];
    for (int it = 0; it < 100; ++it) {
        std::vector<double> s(2 * k, 0.0), n(2, 0.0);
        for (std::size_t i = 0; i < m; ++i) {
            double d[2] = {0.0, 0.0};
            for (std::size_t q = 0; q < 2; ++q)
                for (std::size_t j = 0; j < k; ++j) d[q] += std::pow(data.row(i)[j] - c[q * k + j], 2);
            const std::size_t q = d[1] < d[0] ? 1 : 0;
            n[q] += 1;
            for (std::size_t j = 0; j < k; ++j) s[q * k + j] += data.row(i)[j];
        }
        for (std::size_t j = 0; j < 2 * k; ++j) c[j] = s[j] / n[j / k];
    }

    int converged_at = -1;
    double err = 0.0;
    for (int epoch = 1; epoch <= 500; ++epoch) {
        vq::ema_update(cb, data, vq::nearest_codeword(data, cb));
        err = 0.0;
        for (std::size_t j = 0; j < 2 * k; ++j) err = std::max(err, std::abs(cb.vectors[j] - c[j]));
        if (err < 1e-3 && converged_at < 0) converged_at = epoch;
    }
    return {converged_at > 0 && err < 1e-3,
            fmt("EMA codes within 1e-3 of k-means centroids after %d epochs; max deviation at epoch 500 %.2e",
                converged_at, err)};
}

Outcome kld_exactness()
{
    double worst = 0.0;
    for (std::size_t n : {2u, 4u, 64u}) {
        std::vector<double> u(n, 1.0 / static_cast<double>(n)), one(n, 0.0);
        one[n / 2] = 1.0;
        worst = std::max(worst, std::abs(vq::kld_uniform(u)));
        worst = std::max(worst, std::abs(vq::kld_uniform(one) - std::log(static_cast<double>(n))));
    }
    return {worst < 1e-9, fmt("max deviation %.1e for N in {2,4,64}", worst)};
}

h::RunConfig desk_run(bool imbalanced)
{
    h::RunConfig cfg;
    cfg.seed = 7;
    cfg.synthetic_count = 256;
    cfg.synthetic_imbalanced = imbalanced;
    cfg.epochs = 100;
    cfg.t_max = 100;
    cfg.eval_count = 0;  // whole dataset
    cfg.eval_trials = 10;
    return cfg;
}

Outcome ablation_trend()
{
    const auto t0 = Clock::now();
    const auto cfg = desk_run(true);
    const auto results = h::ablate_codebook(cfg, h::dataset_for(cfg), std::nullopt);
    const auto& kld = results[0];
    const auto& ema = results[1];
    const auto& none = results[2];
    const double secs = seconds_since(t0);
    const bool order = kld.mean_perplexity() >= ema.mean_perplexity() && ema.mean_perplexity() >= none.mean_perplexity();
    const bool psnr = kld.mean_psnr() >= ema.mean_psnr() - 0.1;
    return {order && psnr && secs < 1800.0,
            fmt("perplexity kld-ema %.2f, ema %.2f, none %.2f; psnr kld-ema %.3f dB, ema %.3f dB, none %.3f dB; %.0f s",
                kld.mean_perplexity(), ema.mean_perplexity(), none.mean_perplexity(), kld.mean_psnr(), ema.mean_psnr(),
                none.mean_psnr(), secs)};
}

Outcome snr_trend()
{
    const auto cfg = desk_run(false);
    const auto data = h::dataset_for(cfg);
    const auto trained = h::train(cfg, data);
    const auto rows = h::sweep_snr(trained.state, data, h::sweep_options(cfg));
    bool monotone = true;
    double max_drop = 0.0;
    std::string curve;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        curve += fmt(" %.0fdB:%.2f", rows[i].snr_db, rows[i].report.psnr_db);
        if (i == 0) continue;
        const double delta = rows[i].report.psnr_db - rows[i - 1].report.psnr_db;
        monotone &= delta >= -0.2;
        max_drop = std::max(max_drop, -delta);
    }
    // The largest fall when SNR decreases by one step, for the cliff-effect report.
    double max_degradation = 0.0;
    for (std::size_t i = 1; i < rows.size(); ++i)
        max_degradation = std::max(max_degradation, rows[i].report.psnr_db - rows[i - 1].report.psnr_db);
    return {monotone, fmt("psnr non-decreasing within 0.2 dB (largest dip %.3f dB); largest adjacent-step PSNR "
                          "change %.3f dB;",
                          std::max(0.0, max_drop), max_degradation) +
                          curve};
}

Outcome metric_correctness()
{
    const Tensor a({8, 8, 3}, 0.25f);
    Tensor b = a;
    for (auto& v : b.data) v += static_cast<Real>(1.0 / 255.0);
    const double p = metrics::psnr(a, b);
    std::mt19937_64 rng(9);
    Tensor s({32, 32, 3});
    for (auto& v : s.data) v = static_cast<Real>(std::uniform_real_distribution<double>(0, 1)(rng));
    const double m = metrics::ms_ssim(s, s);
    const double r = metrics::bcr(31457, 256, 256, 3);
    return {std::abs(p - 48.1308) < 1e-3 && std::abs(m - 1.0) < 1e-9 && std::abs(r - 0.02) < 5e-5,
            fmt("psnr %.4f dB, ms-ssim(S,S) %.12f, bcr %.6f", p, m, r)};
}

Outcome determinism()
{
    auto cfg = desk_run(false);
    cfg.synthetic_count = 32;
    cfg.epochs = 3;
    cfg.t_max = 3;
    cfg.eval_count = 8;
    cfg.eval_trials = 2;
    const auto dir = fs::temp_directory_path() / "vqdisc_acceptance_determinism";
    fs::remove_all(dir);
    fs::create_directories(dir);
    auto read = [](const fs::path& p) {
        std::ifstream is(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
    };
    for (int run = 0; run < 2; ++run) {
        const auto data = h::dataset_for(cfg);
        const auto trained = h::train(cfg, data);
        trained.state.save(dir / ("model" + std::to_string(run) + ".vqd"));
        const auto opt = h::sweep_options(cfg);
        std::ofstream os(dir / ("sweep" + std::to_string(run) + ".csv"));
        h::write_sweep_csv(os, h::sweep_snr(trained.state, data, opt), opt);
    }
    const auto m0 = read(dir / "model0.vqd"), m1 = read(dir / "model1.vqd");
    const auto c0 = read(dir / "sweep0.csv"), c1 = read(dir / "sweep1.csv");
    fs::remove_all(dir);
    const bool ok = !m0.empty() && m0 == m1 && !c0.empty() && c0 == c1;
    return {ok, fmt("checkpoints %s (%zu bytes), CSVs %s (%zu bytes)", m0 == m1 ? "identical" : "DIFFER", m0.size(),
                    c0 == c1 ? "identical" : "DIFFER", c0.size())};
}

}  // namespace

int main(int argc, char** argv)
{
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"gradient suite", gradient_suite},       {"modem fidelity", modem_fidelity},
        {"loopback exactness", loopback_exactness}, {"rayleigh circularity", rayleigh_circularity},
        {"codebook oracle", codebook_oracle},     {"kld exactness", kld_exactness},
        {"ablation trend", ablation_trend},       {"snr adaptation trend", snr_trend},
        {"metric correctness", metric_correctness}, {"determinism", determinism},
    };
    // Optional argument: comma-separated criterion numbers to run.
    std::vector<bool> selected(criteria.size(), argc < 2);
    if (argc >= 2) {
        std::stringstream ss(argv[1]);
        std::string item;
        while (std::getline(ss, item, ',')) {
            const auto n = std::strtoul(item.c_str(), nullptr, 10);
            if (n >= 1 && n <= criteria.size()) selected[n - 1] = true;
        }
    }

    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        if (!selected[i]) continue;
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += !o.pass;
        std::printf("criterion %2zu %s  %s: %s\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].first, o.detail.c_str());
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
