#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>

#include "vqdisc/harness.hpp"

namespace vqdisc::harness {

std::string to_string(UpdateMode m)
{
    switch (m) {
    case UpdateMode::kld_ema: return "kld-ema";
    case UpdateMode::ema: return "ema";
    case UpdateMode::none: return "none";
    }
    return "?";
}

std::string to_string(ChannelKind c) { return c == ChannelKind::awgn ? "awgn" : "rayleigh"; }
std::string to_string(CsiMode c) { return c == CsiMode::ls ? "ls" : "perfect"; }

UpdateMode parse_update_mode(const std::string& s)
{
    if (s == "kld-ema") return UpdateMode::kld_ema;
    if (s == "ema") return UpdateMode::ema;
    if (s == "none") return UpdateMode::none;
    throw ConfigError("unknown codebook update mode '" + s + "' (expected kld-ema, ema or none)");
}

ChannelKind parse_channel(const std::string& s)
{
    if (s == "awgn") return ChannelKind::awgn;
    if (s == "rayleigh") return ChannelKind::rayleigh;
    throw ConfigError("unknown channel '" + s + "' (expected awgn or rayleigh)");
}

CsiMode parse_csi(const std::string& s)
{
    if (s == "ls") return CsiMode::ls;
    if (s == "perfect") return CsiMode::perfect;
    throw ConfigError("unknown csi mode '" + s + "' (expected ls or perfect)");
}

std::string format_number(double v)
{
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc{}) throw Error("format_number: conversion failed");
    return {buf, end};
}

double parse_number(const std::string& s)
{
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    double v = 0;
    auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || end != s.data() + s.size()) throw ConfigError("not a number: '" + s + "'");
    return v;
}

namespace {

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep)
{
    std::vector<std::string> out;
    std::string item;
    std::istringstream is(s);
    while (std::getline(is, item, sep)) out.push_back(trim(item));
    return out;
}

std::size_t parse_size(const std::string& s)
{
    std::size_t v = 0;
    auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || end != s.data() + s.size()) throw ConfigError("not a non-negative integer: '" + s + "'");
    return v;
}

bool parse_bool(const std::string& s)
{
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw ConfigError("not a boolean: '" + s + "'");
}

template <std::size_t N>
std::array<std::size_t, N> parse_triple(const std::string& s)
{
    const auto parts = split(s, ',');
    if (parts.size() != N) throw ConfigError("expected " + std::to_string(N) + " comma-separated values: '" + s + "'");
    std::array<std::size_t, N> out{};
    for (std::size_t i = 0; i < N; ++i) out[i] = parse_size(parts[i]);
    return out;
}

template <typename C>
std::string join(const C& c)
{
    std::string s;
    for (const auto& v : c) {
        if (!s.empty()) s += ',';
        if constexpr (std::is_floating_point_v<std::decay_t<decltype(v)>>)
            s += format_number(v);
        else
            s += std::to_string(v);
    }
    return s;
}

struct Field {
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

const std::vector<std::pair<std::string, Field>>& fields()
{
    static const std::vector<std::pair<std::string, Field>> table = [] {
        std::vector<std::pair<std::string, Field>> t;
        auto num = [&t](const std::string& key, double RunConfig::*m) {
            t.push_back({key, {[m](const RunConfig& c) { return format_number(c.*m); },
                               [m](RunConfig& c, const std::string& v) { c.*m = parse_number(v); }}});
        };
        auto size = [&t](const std::string& key, std::size_t RunConfig::*m) {
            t.push_back({key, {[m](const RunConfig& c) { return std::to_string(c.*m); },
                               [m](RunConfig& c, const std::string& v) { c.*m = parse_size(v); }}});
        };
        t.push_back({"seed", {[](const RunConfig& c) { return std::to_string(c.seed); },
                              [](RunConfig& c, const std::string& v) { c.seed = parse_size(v); }}});
        t.push_back({"data.path", {[](const RunConfig& c) { return c.data_path; },
                                   [](RunConfig& c, const std::string& v) { c.data_path = v; }}});
        size("data.synthetic_count", &RunConfig::synthetic_count);
        t.push_back({"data.imbalanced",
                     {[](const RunConfig& c) { return std::string(c.synthetic_imbalanced ? "true" : "false"); },
                      [](RunConfig& c, const std::string& v) { c.synthetic_imbalanced = parse_bool(v); }}});
        t.push_back({"image.height", {[](const RunConfig& c) { return std::to_string(c.codec.height); },
                                      [](RunConfig& c, const std::string& v) { c.codec.height = parse_size(v); }}});
        t.push_back({"image.width", {[](const RunConfig& c) { return std::to_string(c.codec.width); },
                                     [](RunConfig& c, const std::string& v) { c.codec.width = parse_size(v); }}});
        t.push_back({"codec.enc_width", {[](const RunConfig& c) { return join(c.codec.enc_width); },
                                         [](RunConfig& c, const std::string& v) { c.codec.enc_width = parse_triple<3>(v); }}});
        t.push_back({"codec.dec_width", {[](const RunConfig& c) { return join(c.codec.dec_width); },
                                         [](RunConfig& c, const std::string& v) { c.codec.dec_width = parse_triple<3>(v); }}});
        t.push_back({"codec.codebook_size",
                     {[](const RunConfig& c) { return join(c.codec.codebook_size); },
                      [](RunConfig& c, const std::string& v) { c.codec.codebook_size = parse_triple<3>(v); }}});
        t.push_back({"codec.block_depth", {[](const RunConfig& c) { return std::to_string(c.codec.block_depth); },
                                           [](RunConfig& c, const std::string& v) { c.codec.block_depth = parse_size(v); }}});
        t.push_back({"codec.snr_width", {[](const RunConfig& c) { return std::to_string(c.codec.snr_width); },
                                         [](RunConfig& c, const std::string& v) { c.codec.snr_width = parse_size(v); }}});
        num("vq.gamma", &RunConfig::gamma);
        num("vq.eps", &RunConfig::eps);
        t.push_back({"vq.alpha", {[](const RunConfig& c) { return format_number(c.vq_loss.alpha); },
                                  [](RunConfig& c, const std::string& v) { c.vq_loss.alpha = parse_number(v); }}});
        t.push_back({"vq.beta", {[](const RunConfig& c) { return format_number(c.vq_loss.beta); },
                                 [](RunConfig& c, const std::string& v) { c.vq_loss.beta = parse_number(v); }}});
        t.push_back({"vq.tau", {[](const RunConfig& c) { return format_number(c.vq_loss.tau); },
                                [](RunConfig& c, const std::string& v) { c.vq_loss.tau = parse_number(v); }}});
        num("vq.dead_threshold", &RunConfig::dead_threshold);
        t.push_back({"vq.mode", {[](const RunConfig& c) { return to_string(c.mode); },
                                 [](RunConfig& c, const std::string& v) { c.mode = parse_update_mode(v); }}});
        num("optim.lr", &RunConfig::lr);
        num("optim.min_lr", &RunConfig::min_lr);
        num("optim.t_max", &RunConfig::t_max);
        num("optim.weight_decay", &RunConfig::weight_decay);
        num("optim.clip_norm", &RunConfig::clip_norm);
        size("train.epochs", &RunConfig::epochs);
        size("train.batch", &RunConfig::batch);
        num("train.snr_min", &RunConfig::snr_min_db);
        num("train.snr_max", &RunConfig::snr_max_db);
        t.push_back({"eval.snrs", {[](const RunConfig& c) { return join(c.eval_snrs); },
                                   [](RunConfig& c, const std::string& v) {
                                       c.eval_snrs.clear();
                                       for (const auto& p : split(v, ',')) c.eval_snrs.push_back(parse_number(p));
                                   }}});
        size("eval.trials", &RunConfig::eval_trials);
        size("eval.count", &RunConfig::eval_count);
        t.push_back({"eval.channel", {[](const RunConfig& c) { return to_string(c.channel); },
                                      [](RunConfig& c, const std::string& v) { c.channel = parse_channel(v); }}});
        t.push_back({"eval.csi", {[](const RunConfig& c) { return to_string(c.csi); },
                                  [](RunConfig& c, const std::string& v) { c.csi = parse_csi(v); }}});
        size("channel.taps", &RunConfig::rayleigh_taps);
        num("channel.decay", &RunConfig::rayleigh_decay);
        t.push_back({"out.checkpoint", {[](const RunConfig& c) { return c.checkpoint; },
                                        [](RunConfig& c, const std::string& v) { c.checkpoint = v; }}});
        return t;
    }();
    return table;
}

}  // namespace

std::vector<std::string> RunConfig::keys()
{
    std::vector<std::string> k;
    for (const auto& [name, f] : fields()) k.push_back(name);
    return k;
}

void RunConfig::set(const std::string& key, const std::string& value)
{
    for (const auto& [name, f] : fields())
        if (name == key) {
            try {
                f.set(*this, value);
            } catch (const ConfigError& e) {
                throw ConfigError("config key '" + key + "': " + e.what());
            }
            return;
        }
    throw ConfigError("unknown config key '" + key + "'");
}

RunConfig RunConfig::parse(const std::string& text)
{
    RunConfig cfg;
    std::istringstream is(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    cfg.validate();
    return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path)
{
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    return parse(ss.str());
}

std::string RunConfig::to_text() const
{
    std::string out;
    for (const auto& [name, f] : fields()) out += name + " = " + f.get(*this) + "\n";
    return out;
}

void RunConfig::validate() const
{
    codec.validate();
    vq_loss.validate();
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("vq.gamma must lie in [0,1)");
    if (!(eps > 0.0)) throw ConfigError("vq.eps must be positive");
    if (dead_threshold < 0.0) throw ConfigError("vq.dead_threshold must be non-negative");
    if (!(lr > 0.0) || min_lr < 0.0 || min_lr > lr) throw ConfigError("optim: need 0 <= min_lr <= lr, lr > 0");
    if (!(t_max > 0.0)) throw ConfigError("optim.t_max must be positive");
    if (weight_decay < 0.0 || !(clip_norm > 0.0)) throw ConfigError("optim: bad weight decay or clip norm");
    if (batch == 0) throw ConfigError("train.batch must be >= 1");
    if (epochs == 0) throw ConfigError("train.epochs must be >= 1");
    if (snr_min_db > snr_max_db || snr_min_db < modnet::kMinSnrDb || snr_max_db > modnet::kMaxSnrDb)
        throw ConfigError("train SNR range must lie within [-5, 30] dB");
    for (double s : eval_snrs)
        if (s < modnet::kMinSnrDb || s > 60.0) throw ConfigError("eval.snrs must lie within [-5, 60] dB");
    if (eval_trials == 0) throw ConfigError("eval.trials must be >= 1");
    if (rayleigh_taps == 0 || rayleigh_taps > 16) throw ConfigError("channel.taps must be in [1, 16]");
    if (!(rayleigh_decay > 0.0)) throw ConfigError("channel.decay must be positive");
    if (data_path.empty() && synthetic_count == 0) throw ConfigError("data.synthetic_count must be >= 1");
}

}  // namespace vqdisc::harness
