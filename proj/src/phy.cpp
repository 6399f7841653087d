#include "vqdisc/phy.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <mutex>
#include <numbers>

#include "vqdisc/bytes.hpp"

namespace vqdisc::phy {

Bits indices_to_bits(const codec::IndexBundle& bundle, const codec::CodecConfig& cfg)
{
    Bits bits;
    bits.reserve(cfg.payload_bits());
    for (std::size_t s = 0; s < codec::kStages; ++s) {
        const auto width = cfg.index_bits(s);
        if (bundle.indices[s].size() != cfg.stage_tokens(s))
            throw ContractError("indices_to_bits: stage " + std::to_string(s + 1) + " has " +
                                std::to_string(bundle.indices[s].size()) + " indices, expected " +
                                std::to_string(cfg.stage_tokens(s)));
        for (auto idx : bundle.indices[s]) {
            if (idx >= cfg.codebook_size[s]) throw ContractError("indices_to_bits: index out of range");
            for (std::size_t b = width; b-- > 0;) bits.push_back(static_cast<std::uint8_t>((idx >> b) & 1U));
        }
    }
    return bits;
}

codec::IndexBundle bits_to_indices(std::span<const std::uint8_t> bits, const codec::CodecConfig& cfg)
{
    if (bits.size() != cfg.payload_bits())
        throw FramingError("bits_to_indices: got " + std::to_string(bits.size()) + " bits, configuration needs " +
                           std::to_string(cfg.payload_bits()));
    codec::IndexBundle bundle;
    bundle.config_hash = cfg.hash();
    std::size_t pos = 0;
    for (std::size_t s = 0; s < codec::kStages; ++s) {
        const auto width = cfg.index_bits(s);
        const auto shape = cfg.stage_shape(s);
        bundle.grid[s] = {shape[0], shape[1]};
        bundle.indices[s].resize(cfg.stage_tokens(s));
        for (auto& idx : bundle.indices[s]) {
            std::uint32_t v = 0;
            for (std::size_t b = 0; b < width; ++b) v = (v << 1) | (bits[pos++] & 1U);
            idx = v;
        }
    }
    return bundle;
}

std::vector<Complex> qpsk_map(std::span<const std::uint8_t> bits)
{
    if (bits.size() % 2) throw ContractError("qpsk_map: odd number of bits");
    const double a = 1.0 / std::numbers::sqrt2;
    std::vector<Complex> out(bits.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = {bits[2 * i] ? a : -a, bits[2 * i + 1] ? a : -a};
    return out;
}

Bits qpsk_demap(std::span<const Complex> symbols)
{
    Bits out(2 * symbols.size());
    for (std::size_t i = 0; i < symbols.size(); ++i) {
        out[2 * i] = symbols[i].real() > 0.0 ? 1 : 0;
        out[2 * i + 1] = symbols[i].imag() > 0.0 ? 1 : 0;
    }
    return out;
}

OfdmConfig OfdmConfig::ieee80211a()
{
    OfdmConfig c;
    for (int k = -26; k <= 26; ++k)
        if (k != 0 && std::abs(k) != 7 && std::abs(k) != 21) c.data_subcarriers.push_back(k);
    c.pilot_subcarriers = {-21, -7, 7, 21};
    c.pilot_values = {1.0, 1.0, 1.0, -1.0};
    // Long training sequence, subcarriers -26..26.
    c.preamble = {1, 1,  -1, -1, 1,  1,  -1, 1,  -1, 1,  1,  1,  1,  1, 1, -1, -1, 1,
                  1, -1, 1,  -1, 1,  1,  1,  1,  0,  1,  -1, -1, 1,  1, -1, 1, -1, 1,
                  -1, -1, -1, -1, -1, 1, 1, -1, -1, 1,  -1, 1,  -1, 1,  1,  1,  1};
    c.validate();
    return c;
}

void OfdmConfig::validate() const
{
    if (fft_size == 0 || (fft_size & (fft_size - 1))) throw ConfigError("ofdm: fft size must be a power of two");
    if (cyclic_prefix > fft_size) throw ConfigError("ofdm: cyclic prefix longer than symbol");
    if (preamble_symbols == 0) throw ConfigError("ofdm: at least one preamble symbol required");
    if (pilot_values.size() != pilot_subcarriers.size()) throw ConfigError("ofdm: pilot values do not match pilots");
    const int half = static_cast<int>(fft_size / 2);
    std::vector<int> used;
    for (int k : data_subcarriers) used.push_back(k);
    for (int k : pilot_subcarriers) used.push_back(k);
    for (int k : used)
        if (k == 0 || k <= -half || k >= half) throw ConfigError("ofdm: subcarrier " + std::to_string(k) + " not usable");
    std::sort(used.begin(), used.end());
    if (std::adjacent_find(used.begin(), used.end()) != used.end()) throw ConfigError("ofdm: pilot and data sets overlap");
    if (data_subcarriers.empty()) throw ConfigError("ofdm: no data subcarriers");
    // Preamble must cover every used subcarrier.
    const int edge = static_cast<int>(preamble.size() / 2);
    if (preamble.size() % 2 != 1) throw ConfigError("ofdm: preamble must be symmetric around DC");
    for (int k : used)
        if (std::abs(k) > edge || preamble[static_cast<std::size_t>(k + edge)] == 0.0)
            throw ConfigError("ofdm: preamble does not cover subcarrier " + std::to_string(k));
}

std::size_t OfdmConfig::occupied() const { return data_subcarriers.size() + pilot_subcarriers.size(); }

double OfdmConfig::scale() const
{
    return std::sqrt(static_cast<double>(fft_size) / static_cast<double>(occupied()));
}

std::size_t OfdmConfig::bin(int subcarrier) const
{
    const auto n = static_cast<int>(fft_size);
    return static_cast<std::size_t>(((subcarrier % n) + n) % n);
}

namespace {

// FFTW plans are created once per (size, direction); execution on new
// arrays is thread-safe, planning is not.
fftw_plan plan_for(std::size_t n, int sign)
{
    static std::mutex mu;
    static std::map<std::pair<std::size_t, int>, fftw_plan> plans;
    std::lock_guard lock(mu);
    auto& p = plans[{n, sign}];
    if (!p) {
        std::vector<Complex> in(n), out(n);
        p = fftw_plan_dft_1d(static_cast<int>(n), reinterpret_cast<fftw_complex*>(in.data()),
                             reinterpret_cast<fftw_complex*>(out.data()), sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
        if (!p) throw Error("fftw: planning failed");
    }
    return p;
}

std::vector<Complex> transform(std::span<const Complex> x, int sign)
{
    std::vector<Complex> in(x.begin(), x.end()), out(x.size());
    fftw_execute_dft(plan_for(x.size(), sign), reinterpret_cast<fftw_complex*>(in.data()),
                     reinterpret_cast<fftw_complex*>(out.data()));
    const double s = 1.0 / std::sqrt(static_cast<double>(x.size()));
    for (auto& v : out) v *= s;
    return out;
}

void append_symbol(std::vector<Complex>& samples, const std::vector<Complex>& freq, const OfdmConfig& cfg)
{
    const auto body = ifft(freq);
    samples.insert(samples.end(), body.end() - static_cast<std::ptrdiff_t>(cfg.cyclic_prefix), body.end());
    samples.insert(samples.end(), body.begin(), body.end());
}

std::vector<Complex> preamble_freq(const OfdmConfig& cfg)
{
    std::vector<Complex> f(cfg.fft_size);
    const int edge = static_cast<int>(cfg.preamble.size() / 2);
    for (int k = -edge; k <= edge; ++k)
        if (k != 0) f[cfg.bin(k)] = cfg.scale() * cfg.preamble[static_cast<std::size_t>(k + edge)];
    return f;
}

std::size_t payload_symbol_count(const ComplexFrame& frame, const OfdmConfig& cfg)
{
    const auto len = cfg.symbol_length();
    if (frame.samples.size() % len)
        throw FramingError("ofdm: frame length " + std::to_string(frame.samples.size()) +
                           " is not a whole number of OFDM symbols");
    const auto total = frame.samples.size() / len;
    if (total < cfg.preamble_symbols) throw FramingError("ofdm: frame is missing its preamble");
    return total - cfg.preamble_symbols;
}

std::vector<Complex> symbol_spectrum(const ComplexFrame& frame, const OfdmConfig& cfg, std::size_t sym)
{
    const auto start = sym * cfg.symbol_length() + cfg.cyclic_prefix;
    return fft(std::span<const Complex>(frame.samples).subspan(start, cfg.fft_size));
}

}  // namespace

std::vector<Complex> fft(std::span<const Complex> x) { return transform(x, FFTW_FORWARD); }
std::vector<Complex> ifft(std::span<const Complex> x) { return transform(x, FFTW_BACKWARD); }

ComplexFrame ofdm_modulate(std::span<const Complex> symbols, const OfdmConfig& cfg)
{
    const auto per = cfg.data_per_symbol();
    if (symbols.size() % per)
        throw FramingError("ofdm_modulate: " + std::to_string(symbols.size()) + " symbols is not a multiple of " +
                           std::to_string(per));
    const auto n_sym = symbols.size() / per;
    const double g = cfg.scale();
    ComplexFrame frame;
    frame.header.payload_bits = static_cast<std::uint32_t>(2 * symbols.size());
    frame.samples.reserve((cfg.preamble_symbols + n_sym) * cfg.symbol_length());

    const auto pre = preamble_freq(cfg);
    for (std::size_t p = 0; p < cfg.preamble_symbols; ++p) append_symbol(frame.samples, pre, cfg);

    std::vector<Complex> freq(cfg.fft_size);
    for (std::size_t s = 0; s < n_sym; ++s) {
        std::fill(freq.begin(), freq.end(), Complex{});
        for (std::size_t i = 0; i < per; ++i) freq[cfg.bin(cfg.data_subcarriers[i])] = g * symbols[s * per + i];
        for (std::size_t i = 0; i < cfg.pilot_subcarriers.size(); ++i)
            freq[cfg.bin(cfg.pilot_subcarriers[i])] = g * cfg.pilot_values[i];
        append_symbol(frame.samples, freq, cfg);
    }
    return frame;
}

std::vector<Complex> ofdm_demodulate(const ComplexFrame& frame, const OfdmConfig& cfg)
{
    const auto n_sym = payload_symbol_count(frame, cfg);
    const double inv_g = 1.0 / cfg.scale();
    std::vector<Complex> out;
    out.reserve(n_sym * cfg.data_per_symbol());
    for (std::size_t s = 0; s < n_sym; ++s) {
        const auto bins = symbol_spectrum(frame, cfg, cfg.preamble_symbols + s);
        for (int k : cfg.data_subcarriers) out.push_back(bins[cfg.bin(k)] * inv_g);
    }
    return out;
}

ComplexFrame build_frame(std::span<const std::uint8_t> payload, const OfdmConfig& cfg, std::uint64_t config_hash)
{
    const auto per = cfg.bits_per_symbol();
    const auto pad = (per - payload.size() % per) % per;
    if (pad > 255) throw ConfigError("build_frame: padding does not fit the header");
    Bits bits(payload.begin(), payload.end());
    bits.resize(payload.size() + pad, 0);
    auto frame = ofdm_modulate(qpsk_map(bits), cfg);
    frame.header.payload_bits = static_cast<std::uint32_t>(payload.size());
    frame.header.pad_bits = static_cast<std::uint8_t>(pad);
    frame.header.config_hash = config_hash;
    return frame;
}

double noise_power_from_snr_db(double snr_db) { return std::pow(10.0, -snr_db / 10.0); }

std::vector<Complex> draw_rayleigh_taps(std::size_t taps, double decay, std::mt19937_64& rng)
{
    if (taps == 0) throw ContractError("rayleigh: need at least one tap");
    std::vector<double> pdp(taps);
    double total = 0.0;
    for (std::size_t l = 0; l < taps; ++l) total += pdp[l] = std::exp(-static_cast<double>(l) / decay);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<Complex> h(taps);
    for (std::size_t l = 0; l < taps; ++l) {
        const double sd = std::sqrt(pdp[l] / total / 2.0);
        const double re = normal(rng) * sd;
        const double im = normal(rng) * sd;
        h[l] = {re, im};
    }
    return h;
}

namespace {

void add_noise(std::vector<Complex>& x, double noise_power, std::mt19937_64& rng)
{
    if (noise_power < 0.0) throw ContractError("channel: negative noise power");
    if (noise_power == 0.0) return;
    std::normal_distribution<double> normal(0.0, std::sqrt(noise_power / 2.0));
    for (auto& v : x) {
        const double re = normal(rng);
        const double im = normal(rng);
        v += Complex{re, im};
    }
}

}  // namespace

ComplexFrame apply_channel(const ComplexFrame& frame, const ChannelModel& channel, std::mt19937_64& rng)
{
    ComplexFrame out = frame;
    if (const auto* awgn = std::get_if<AwgnChannel>(&channel)) {
        add_noise(out.samples, awgn->noise_power, rng);
        return out;
    }
    const auto& ray = std::get<RayleighChannel>(channel);
    if (ray.taps.empty()) throw ContractError("rayleigh: empty tap vector");
    const auto& x = frame.samples;
    for (std::size_t n = 0; n < x.size(); ++n) {
        Complex acc{};
        for (std::size_t l = 0; l < ray.taps.size() && l <= n; ++l) acc += ray.taps[l] * x[n - l];
        out.samples[n] = acc;
    }
    add_noise(out.samples, ray.noise_power, rng);
    return out;
}

std::vector<Complex> frequency_response(std::span<const Complex> taps, std::size_t fft_size)
{
    std::vector<Complex> h(fft_size);
    for (std::size_t k = 0; k < fft_size; ++k)
        for (std::size_t l = 0; l < taps.size(); ++l)
            h[k] += taps[l] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k * l) /
                                                 static_cast<double>(fft_size));
    return h;
}

namespace {

Equalized zero_force(const ComplexFrame& rx, const OfdmConfig& cfg, std::vector<Complex> response)
{
    const auto n_sym = payload_symbol_count(rx, cfg);
    const double inv_g = 1.0 / cfg.scale();
    Equalized eq;
    eq.symbols.reserve(n_sym * cfg.data_per_symbol());
    eq.erased.reserve(n_sym * cfg.data_per_symbol());
    for (std::size_t s = 0; s < n_sym; ++s) {
        const auto bins = symbol_spectrum(rx, cfg, cfg.preamble_symbols + s);
        for (int k : cfg.data_subcarriers) {
            const auto b = cfg.bin(k);
            const bool dead = std::abs(response[b]) < kErasureThreshold;
            eq.erased.push_back(dead);
            eq.symbols.push_back(dead ? Complex{} : bins[b] / response[b] * inv_g);
        }
    }
    eq.channel = std::move(response);
    return eq;
}

}  // namespace

Equalized estimate_and_equalize(const ComplexFrame& rx, const OfdmConfig& cfg)
{
    payload_symbol_count(rx, cfg);
    const auto ref = preamble_freq(cfg);
    std::vector<Complex> h(cfg.fft_size);
    for (std::size_t p = 0; p < cfg.preamble_symbols; ++p) {
        const auto bins = symbol_spectrum(rx, cfg, p);
        for (std::size_t b = 0; b < cfg.fft_size; ++b)
            if (ref[b] != Complex{}) h[b] += bins[b] / ref[b];
    }
    for (auto& v : h) v /= static_cast<double>(cfg.preamble_symbols);
    return zero_force(rx, cfg, std::move(h));
}

Equalized equalize_with_csi(const ComplexFrame& rx, const OfdmConfig& cfg, std::span<const Complex> response)
{
    if (response.size() != cfg.fft_size) throw ContractError("equalize_with_csi: response must have fft_size bins");
    return zero_force(rx, cfg, {response.begin(), response.end()});
}

Bits demap_payload(const Equalized& eq, const FrameHeader& header)
{
    Bits bits = qpsk_demap(eq.symbols);
    for (std::size_t i = 0; i < eq.erased.size(); ++i)
        if (eq.erased[i]) bits[2 * i] = bits[2 * i + 1] = 0;
    if (bits.size() != static_cast<std::size_t>(header.payload_bits) + header.pad_bits)
        throw FramingError("demap: frame carries " + std::to_string(bits.size()) + " bits, header declares " +
                           std::to_string(header.payload_bits) + " + " + std::to_string(header.pad_bits) + " pad");
    bits.resize(header.payload_bits);
    return bits;
}

double q_function(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

double ber_theory_qpsk_awgn(double ebn0_db)
{
    if (std::isinf(ebn0_db) && ebn0_db < 0) return 0.5;
    return q_function(std::sqrt(2.0 * std::pow(10.0, ebn0_db / 10.0)));
}

double effective_ebn0_db(double snr_db, const OfdmConfig& cfg)
{
    // Per data bin the symbol energy is scale^2 against noise sigma^2; two bits per symbol.
    return snr_db + 10.0 * std::log10(cfg.scale() * cfg.scale()) - 10.0 * std::log10(2.0);
}

namespace {

constexpr char kFrameMagic[6] = {'V', 'Q', 'F', 'R', 'M', '1'};

}  // namespace

std::string encode_frame(const ComplexFrame& frame)
{
    std::string out(kFrameMagic, sizeof(kFrameMagic));
    bytes::put_u32(out, frame.header.payload_bits);
    bytes::put_u8(out, frame.header.pad_bits);
    bytes::put_u64(out, frame.header.config_hash);
    for (const auto& s : frame.samples) {
        bytes::put_f32(out, static_cast<float>(s.real()));
        bytes::put_f32(out, static_cast<float>(s.imag()));
    }
    return out;
}

ComplexFrame decode_frame(const std::string& buf)
{
    if (buf.size() < sizeof(kFrameMagic) || std::memcmp(buf.data(), kFrameMagic, sizeof(kFrameMagic)) != 0)
        throw FramingError("frame: bad magic");
    bytes::Reader in(buf, "frame");
    in.skip(sizeof(kFrameMagic));
    ComplexFrame f;
    f.header.payload_bits = in.u32();
    f.header.pad_bits = in.u8();
    f.header.config_hash = in.u64();
    if (in.remaining() % 8) throw FramingError("frame: sample data is not whole I/Q pairs");
    f.samples.resize(in.remaining() / 8);
    for (auto& s : f.samples) {
        const float re = in.f32();
        const float im = in.f32();
        s = {re, im};
    }
    return f;
}

void write_frame_file(const std::filesystem::path& path, const ComplexFrame& frame)
{
    const auto buf = encode_frame(frame);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write frame file: " + path.string());
    os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

ComplexFrame read_frame_file(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open frame file: " + path.string());
    std::string buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return decode_frame(buf);
}

}  // namespace vqdisc::phy
