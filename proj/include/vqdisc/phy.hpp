#pragma once

// Digital link: index/bit serialization, QPSK, 802.11a-style OFDM framing,
// AWGN and multipath Rayleigh channels, LS channel estimation and
// zero-forcing equalization.
//
// SNR convention: transmit samples have unit average power (each 64-sample
// OFDM body has mean power exactly 1), so the noise power per complex
// time-domain sample is sigma^2 = 10^(-snr_db/10).

#include <complex>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <variant>
#include <vector>

#include "vqdisc/codec.hpp"

namespace vqdisc::phy {

using Complex = std::complex<double>;
using Bits = std::vector<std::uint8_t>;

// Fixed-width big-endian binary per index, stages concatenated I1|I2|I3.
Bits indices_to_bits(const codec::IndexBundle& bundle, const codec::CodecConfig& cfg);
codec::IndexBundle bits_to_indices(std::span<const std::uint8_t> bits, const codec::CodecConfig& cfg);

// Gray-free 802.11a QPSK: first bit -> I, second -> Q, 0 -> -1, 1 -> +1,
// scaled by 1/sqrt(2). Odd bit counts are a contract error.
std::vector<Complex> qpsk_map(std::span<const std::uint8_t> bits);
Bits qpsk_demap(std::span<const Complex> symbols);

struct OfdmConfig {
    std::size_t fft_size = 64;
    std::size_t cyclic_prefix = 16;
    std::size_t preamble_symbols = 2;
    std::vector<int> data_subcarriers;   // ascending, 48 entries
    std::vector<int> pilot_subcarriers;  // -21, -7, 7, 21
    std::vector<double> pilot_values;    // +1, +1, +1, -1
    std::vector<double> preamble;        // per subcarrier -26..26, 0 at DC

    static OfdmConfig ieee80211a();
    void validate() const;

    std::size_t symbol_length() const { return fft_size + cyclic_prefix; }
    std::size_t data_per_symbol() const { return data_subcarriers.size(); }
    std::size_t bits_per_symbol() const { return 2 * data_subcarriers.size(); }
    std::size_t occupied() const;
    // Time-domain scale giving unit mean power per OFDM body.
    double scale() const;
    std::size_t bin(int subcarrier) const;
};

struct FrameHeader {
    std::uint32_t payload_bits = 0;
    std::uint8_t pad_bits = 0;
    std::uint64_t config_hash = 0;

    friend bool operator==(const FrameHeader&, const FrameHeader&) = default;
};

struct ComplexFrame {
    FrameHeader header;
    std::vector<Complex> samples;
};

// Unitary DFT helpers (size fft_size).
std::vector<Complex> fft(std::span<const Complex> x);
std::vector<Complex> ifft(std::span<const Complex> x);

// Symbols must be a multiple of 48. Output: preamble then one 80-sample
// OFDM symbol per 48 data symbols.
ComplexFrame ofdm_modulate(std::span<const Complex> symbols, const OfdmConfig& cfg);
// Inverse of ofdm_modulate for an identity channel (no equalization).
std::vector<Complex> ofdm_demodulate(const ComplexFrame& frame, const OfdmConfig& cfg);

// Pads the payload to a whole number of OFDM symbols, maps to QPSK and
// modulates. The header records payload length, padding and config hash.
ComplexFrame build_frame(std::span<const std::uint8_t> payload, const OfdmConfig& cfg, std::uint64_t config_hash);

struct AwgnChannel {
    double noise_power = 0.0;
};
struct RayleighChannel {
    std::vector<Complex> taps;
    double noise_power = 0.0;
};
using ChannelModel = std::variant<AwgnChannel, RayleighChannel>;

double noise_power_from_snr_db(double snr_db);
// i.i.d. CN(0, p_l) taps with p_l proportional to exp(-l / decay), sum p_l = 1.
std::vector<Complex> draw_rayleigh_taps(std::size_t taps, double decay, std::mt19937_64& rng);
ComplexFrame apply_channel(const ComplexFrame& frame, const ChannelModel& channel, std::mt19937_64& rng);

// Non-unitary frequency response H_k = sum_l h_l exp(-j 2 pi k l / N) per FFT bin.
std::vector<Complex> frequency_response(std::span<const Complex> taps, std::size_t fft_size);

struct Equalized {
    std::vector<Complex> symbols;  // data symbols, in transmit order
    std::vector<bool> erased;      // per symbol, |H_k| below threshold
    std::vector<Complex> channel;  // per FFT bin estimate
};

inline constexpr double kErasureThreshold = 1e-6;

// Least-squares estimate from the preamble, averaged over its symbols,
// then zero-forcing on the data subcarriers.
Equalized estimate_and_equalize(const ComplexFrame& rx, const OfdmConfig& cfg);
// Zero-forcing with a known per-bin channel response.
Equalized equalize_with_csi(const ComplexFrame& rx, const OfdmConfig& cfg, std::span<const Complex> response);

// Hard decisions; erased symbols demap to zero bits. The result is cut to
// the header's payload length.
Bits demap_payload(const Equalized& eq, const FrameHeader& header);

// Q(sqrt(2 Eb/N0)); ebn0_db may be -inf.
double ber_theory_qpsk_awgn(double ebn0_db);
double q_function(double x);
// Eb/N0 seen by the QPSK detector under the per-sample SNR convention.
double effective_ebn0_db(double snr_db, const OfdmConfig& cfg);

// "VQFRM1", u32 payload bits, u8 pad bits, u64 config hash, then
// interleaved f32 I/Q pairs; all little-endian.
std::string encode_frame(const ComplexFrame& frame);
ComplexFrame decode_frame(const std::string& bytes);
void write_frame_file(const std::filesystem::path& path, const ComplexFrame& frame);
ComplexFrame read_frame_file(const std::filesystem::path& path);

}  // namespace vqdisc::phy
