#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "vqdisc/harness.hpp"

namespace vqdisc::harness {

using codec::kStages;

double conditioning_snr(double snr_db)
{
    if (std::isnan(snr_db)) throw ContractError("snr is NaN");
    return std::clamp(snr_db, modnet::kMinSnrDb, modnet::kMaxSnrDb);
}

LinkOutcome transmit_image(const codec::CodecState& state, const Tensor& image, double snr_db,
                           const std::optional<phy::ChannelModel>& channel, CsiMode csi, std::mt19937_64& rng)
{
    const auto& cfg = state.config();
    const auto ofdm = phy::OfdmConfig::ieee80211a();
    const double cond = conditioning_snr(snr_db);

    LinkOutcome out;
    out.sent = state.transmit_indices(image, cond);
    out.tx_bits = phy::indices_to_bits(out.sent, cfg);
    out.frame = phy::build_frame(out.tx_bits, ofdm, cfg.hash());

    const auto rx = channel ? phy::apply_channel(out.frame, *channel, rng) : out.frame;
    if (rx.header.config_hash != cfg.hash()) throw FramingError("frame was built for a different model configuration");

    phy::Equalized eq;
    if (csi == CsiMode::perfect) {
        std::vector<phy::Complex> response(ofdm.fft_size, phy::Complex(1.0, 0.0));
        if (channel)
            if (const auto* ray = std::get_if<phy::RayleighChannel>(&*channel))
                response = phy::frequency_response(ray->taps, ofdm.fft_size);
        eq = phy::equalize_with_csi(rx, ofdm, response);
    } else {
        eq = phy::estimate_and_equalize(rx, ofdm);
    }
    out.rx_bits = phy::demap_payload(eq, rx.header);
    out.received = phy::bits_to_indices(out.rx_bits, cfg);
    out.reconstruction = state.reconstruct(out.received, cond);
    return out;
}

SweepOptions sweep_options(const RunConfig& cfg)
{
    SweepOptions opt;
    opt.snrs = cfg.eval_snrs;
    opt.trials = cfg.eval_trials;
    opt.channel = cfg.channel;
    opt.csi = cfg.csi;
    opt.seed = derive_seed(cfg.seed, {0x5eed});
    opt.count = cfg.eval_count;
    opt.rayleigh_taps = cfg.rayleigh_taps;
    opt.rayleigh_decay = cfg.rayleigh_decay;
    return opt;
}

std::vector<SweepRow> sweep_snr(const codec::CodecState& state, const Dataset& data, const SweepOptions& opt)
{
    const auto& cfg = state.config();
    if (opt.snrs.empty()) throw ConfigError("sweep: empty SNR list");
    if (opt.trials == 0) throw ConfigError("sweep: trials must be >= 1");
    if (data.size() == 0) throw Error("sweep: empty dataset");
    for (const auto& img : data.images)
        if (img.shape != cfg.image_shape())
            throw ConfigError("sweep: dataset extents " + shape_str(img.shape) + " do not match the checkpoint " +
                              shape_str(cfg.image_shape()));
    const auto images = opt.count == 0 ? data.size() : std::min(opt.count, data.size());
    const double bcr = metrics::bcr(cfg.payload_bits(), cfg.height, cfg.width, cfg.channels);

    struct Sample {
        double psnr = 0, ms_ssim = 0, ber = 0;
        std::array<std::vector<std::uint32_t>, kStages> sent;
    };

    std::vector<SweepRow> rows;
    for (std::size_t si = 0; si < opt.snrs.size(); ++si) {
        const double snr = opt.snrs[si];
        const auto jobs = opt.trials * images;
        std::vector<Sample> samples(jobs);
        parallel_for(jobs, [&](std::size_t j) {
            const auto trial = j / images, n = j % images;
            std::mt19937_64 rng(derive_seed(opt.seed, {si, trial, n}));
            std::optional<phy::ChannelModel> channel;
            if (!opt.noiseless) {
                const double np = phy::noise_power_from_snr_db(snr);
                if (opt.channel == ChannelKind::awgn)
                    channel = phy::AwgnChannel{np};
                else
                    channel = phy::RayleighChannel{phy::draw_rayleigh_taps(opt.rayleigh_taps, opt.rayleigh_decay, rng), np};
            }
            const auto link = transmit_image(state, data.images[n], snr, channel, opt.csi, rng);
            auto& s = samples[j];
            s.psnr = metrics::psnr(data.images[n], link.reconstruction);
            s.ms_ssim = metrics::ms_ssim(data.images[n], link.reconstruction);
            s.ber = metrics::ber(link.tx_bits, link.rx_bits);
            s.sent = link.sent.indices;
        });

        SweepRow row;
        row.snr_db = snr;
        row.report.bcr = bcr;
        for (const auto& s : samples) {
            row.report.psnr_db += s.psnr;
            row.report.ms_ssim += s.ms_ssim;
            row.report.ber += s.ber;
        }
        row.report.psnr_db /= static_cast<double>(jobs);
        row.report.ms_ssim /= static_cast<double>(jobs);
        row.report.ber /= static_cast<double>(jobs);
        for (std::size_t st = 0; st < kStages; ++st) {
            std::vector<double> hist(cfg.codebook_size[st], 0.0);
            for (const auto& s : samples)
                for (auto idx : s.sent[st]) hist[idx] += 1.0;
            const auto usage = vq::normalize_counts(std::span<const double>(hist));
            row.report.perplexity[st] = vq::perplexity(usage);
            row.report.kld[st] = vq::kld_uniform(usage);
        }
        rows.push_back(row);
    }
    return rows;
}

namespace {

void write_header(std::ostream& os, const SweepOptions& opt, const char* columns)
{
    os << "# psnr_db and ms_ssim are means of per-image values; channel=" << to_string(opt.channel)
       << " csi=" << to_string(opt.csi) << " trials=" << opt.trials << (opt.noiseless ? " noiseless" : "") << "\n"
       << columns << "\n";
}

void write_row(std::ostream& os, const SweepRow& r)
{
    os << format_number(r.snr_db) << ',' << format_number(r.report.psnr_db) << ',' << format_number(r.report.ms_ssim)
       << ',' << format_number(r.report.ber) << ',' << format_number(r.report.bcr);
    for (double p : r.report.perplexity) os << ',' << format_number(p);
    os << "\n";
}

std::vector<std::string> split(const std::string& line)
{
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

}  // namespace

void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows, const SweepOptions& opt)
{
    write_header(os, opt, kSweepColumns);
    for (const auto& r : rows) write_row(os, r);
}

std::vector<SweepRow> read_sweep_csv(std::istream& is)
{
    std::vector<SweepRow> rows;
    std::string line;
    bool header = false;
    std::size_t offset = 0;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        if (!header) {
            if (line == kSweepColumns)
                offset = 0;
            else if (line == kAblationColumns)
                offset = 1;
            else
                throw FramingError("unexpected CSV header: " + line);
            header = true;
            continue;
        }
        const auto cells = split(line);
        if (cells.size() != 8 + offset) throw FramingError("malformed CSV row: " + line);
        SweepRow r;
        r.snr_db = parse_number(cells[offset + 0]);
        r.report.psnr_db = parse_number(cells[offset + 1]);
        r.report.ms_ssim = parse_number(cells[offset + 2]);
        r.report.ber = parse_number(cells[offset + 3]);
        r.report.bcr = parse_number(cells[offset + 4]);
        for (std::size_t s = 0; s < kStages; ++s) r.report.perplexity[s] = parse_number(cells[offset + 5 + s]);
        rows.push_back(r);
    }
    if (!header) throw FramingError("CSV has no header");
    return rows;
}

double AblationResult::mean_psnr() const
{
    if (rows.empty()) return 0.0;
    double s = 0.0;
    for (const auto& r : rows) s += r.report.psnr_db;
    return s / static_cast<double>(rows.size());
}

double AblationResult::mean_ms_ssim() const
{
    if (rows.empty()) return 0.0;
    double s = 0.0;
    for (const auto& r : rows) s += r.report.ms_ssim;
    return s / static_cast<double>(rows.size());
}

double AblationResult::mean_perplexity() const
{
    if (log.empty()) return 0.0;
    const auto& p = log.back().perplexity;
    return std::accumulate(p.begin(), p.end(), 0.0) / static_cast<double>(p.size());
}

std::vector<AblationResult> ablate_codebook(const RunConfig& cfg, const Dataset& data,
                                            const std::optional<std::filesystem::path>& out_dir,
                                            const EpochCallback& on_epoch)
{
    if (out_dir) std::filesystem::create_directories(*out_dir);
    std::vector<AblationResult> results;
    for (auto mode : {UpdateMode::kld_ema, UpdateMode::ema, UpdateMode::none}) {
        RunConfig run = cfg;
        run.mode = mode;
        auto trained = train(run, data, on_epoch);
        const auto opt = sweep_options(run);
        AblationResult res{mode, sweep_snr(trained.state, data, opt), std::move(trained.log)};
        if (out_dir) {
            const auto path = *out_dir / ("ablation_" + to_string(mode) + ".csv");
            std::ofstream os(path);
            if (!os) throw Error("cannot write " + path.string());
            write_header(os, opt, kAblationColumns);
            for (const auto& r : res.rows) {
                os << to_string(mode) << ',';
                write_row(os, r);
            }
        }
        results.push_back(std::move(res));
    }
    if (out_dir) {
        const auto path = *out_dir / "ablation_summary.csv";
        std::ofstream os(path);
        if (!os) throw Error("cannot write " + path.string());
        os << "# means over the evaluated SNR points; perplexity from the final training epoch\n"
           << "mode,mean_psnr_db,mean_ms_ssim,final_perplexity_1,final_perplexity_2,final_perplexity_3\n";
        for (const auto& r : results) {
            os << to_string(r.mode) << ',' << format_number(r.mean_psnr()) << ',' << format_number(r.mean_ms_ssim());
            for (double p : r.log.back().perplexity) os << ',' << format_number(p);
            os << "\n";
        }
    }
    return results;
}

}  // namespace vqdisc::harness
