// vqdisc: train, sweep, ablate and loopback entry points.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "vqdisc/harness.hpp"
#include "vqdisc/image_io.hpp"

using namespace vqdisc;
namespace h = vqdisc::harness;

namespace {

void print_epoch(const h::EpochLog& e)
{
    std::fprintf(stderr, "epoch %4zu  lr %.3e  loss %.5f  mse %.5f  vq %.5f  ppl %.1f/%.1f/%.1f  reseeded %zu\n",
                 e.epoch + 1, e.lr, e.loss, e.recon_mse, e.vq_loss, e.perplexity[0], e.perplexity[1], e.perplexity[2],
                 e.reseeded);
}

std::vector<double> parse_snrs(const std::string& text)
{
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(h::parse_number(item));
    if (out.empty()) throw ConfigError("empty SNR list");
    return out;
}

h::RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides)
{
    auto cfg = path.empty() ? h::RunConfig{} : h::RunConfig::load(path);
    for (const auto& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.validate();
    return cfg;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"VQ digital semantic image transmission simulator"};
    app.require_subcommand(1);

    std::string config_path, ckpt_path, out_path, out_dir, image_path, frame_path, data_dir, snrs_text;
    std::string channel = "awgn", csi = "ls";
    std::vector<std::string> overrides;
    std::size_t trials = 10, count = 0;
    std::uint64_t seed = 1;
    double snr = 15.0;
    bool noiseless = false;

    auto* train = app.add_subcommand("train", "train a model and write its checkpoint");
    train->add_option("--config", config_path, "key = value run configuration")->check(CLI::ExistingFile);
    train->add_option("--set", overrides, "override a configuration key (key=value)");
    train->add_option("--out", out_path, "checkpoint path (default: out.checkpoint)");

    auto* sweep = app.add_subcommand("sweep", "evaluate a checkpoint across SNRs through the OFDM link");
    sweep->add_option("--ckpt", ckpt_path, "checkpoint")->required()->check(CLI::ExistingFile);
    sweep->add_option("--config", config_path, "configuration supplying data and evaluation defaults");
    sweep->add_option("--set", overrides, "override a configuration key (key=value)");
    sweep->add_option("--snrs", snrs_text, "comma-separated SNRs in dB");
    sweep->add_option("--channel", channel, "awgn or rayleigh");
    sweep->add_option("--csi", csi, "ls or perfect");
    sweep->add_option("--trials", trials, "trials per SNR point");
    sweep->add_option("--data", data_dir, "image directory (default: synthetic corpus)");
    sweep->add_option("--count", count, "images evaluated (0: all)");
    sweep->add_option("--seed", seed, "channel noise seed");
    sweep->add_flag("--noiseless", noiseless, "identity channel");
    sweep->add_option("--out", out_path, "output CSV")->required();

    auto* ablate = app.add_subcommand("ablate", "train and compare the codebook update modes");
    ablate->add_option("--config", config_path, "key = value run configuration")->check(CLI::ExistingFile);
    ablate->add_option("--set", overrides, "override a configuration key (key=value)");
    ablate->add_option("--out-dir", out_dir, "directory for the CSV files")->required();

    auto* loopback = app.add_subcommand("loopback", "send one image through a noiseless link");
    loopback->add_option("--ckpt", ckpt_path, "checkpoint")->required()->check(CLI::ExistingFile);
    loopback->add_option("--image", image_path, "PNG or PPM image")->required()->check(CLI::ExistingFile);
    loopback->add_option("--snr", snr, "SNR used to condition the encoder and decoder");
    loopback->add_option("--out", out_path, "write the reconstruction (.png or .ppm)");
    loopback->add_option("--frame", frame_path, "write the transmitted baseband frame");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) {
            const auto cfg = load_config(config_path, overrides);
            const auto data = h::dataset_for(cfg, &std::cerr);
            std::fprintf(stderr, "training on %zu images, %zu threads\n", data.size(), h::thread_count());
            const auto result = h::train(cfg, data, print_epoch);
            const auto path = out_path.empty() ? cfg.checkpoint : out_path;
            result.state.save(path);
            std::printf("wrote %s\n", path.c_str());
        } else if (*sweep) {
            auto cfg = load_config(config_path, overrides);
            const auto state = codec::CodecState::load(ckpt_path);
            cfg.codec = state.config();
            if (!data_dir.empty()) cfg.data_path = data_dir;
            const auto data = h::dataset_for(cfg, &std::cerr);

            auto opt = h::sweep_options(cfg);
            if (!snrs_text.empty()) opt.snrs = parse_snrs(snrs_text);
            if (sweep->count("--channel")) opt.channel = h::parse_channel(channel);
            if (sweep->count("--csi")) opt.csi = h::parse_csi(csi);
            if (sweep->count("--trials")) opt.trials = trials;
            if (sweep->count("--count")) opt.count = count;
            if (sweep->count("--seed")) opt.seed = seed;
            opt.noiseless = noiseless;

            const auto rows = h::sweep_snr(state, data, opt);
            std::ofstream os(out_path);
            if (!os) throw Error("cannot write " + out_path);
            h::write_sweep_csv(os, rows, opt);
            for (const auto& r : rows)
                std::printf("snr %6.2f dB  psnr %7.3f dB  ms-ssim %.4f  ber %.3e\n", r.snr_db, r.report.psnr_db,
                            r.report.ms_ssim, r.report.ber);
        } else if (*ablate) {
            const auto cfg = load_config(config_path, overrides);
            const auto data = h::dataset_for(cfg, &std::cerr);
            const auto results = h::ablate_codebook(cfg, data, out_dir, print_epoch);
            for (const auto& r : results)
                std::printf("%-8s  psnr %7.3f dB  ms-ssim %.4f  perplexity %.2f\n", h::to_string(r.mode).c_str(),
                            r.mean_psnr(), r.mean_ms_ssim(), r.mean_perplexity());
        } else if (*loopback) {
            const auto state = codec::CodecState::load(ckpt_path);
            const auto& cfg = state.config();
            const auto image = image::center_crop_resize(image::load(image_path), cfg.height, cfg.width);
            std::mt19937_64 rng(0);
            const auto link = h::transmit_image(state, image, snr, std::nullopt, h::CsiMode::ls, rng);
            if (!out_path.empty()) image::save(out_path, link.reconstruction);
            if (!frame_path.empty()) phy::write_frame_file(frame_path, link.frame);
            std::printf("payload %zu bits  bcr %.4f  ber %.3e  psnr %.3f dB  ms-ssim %.4f\n", link.tx_bits.size(),
                        metrics::bcr(cfg.payload_bits(), cfg.height, cfg.width, cfg.channels),
                        metrics::ber(link.tx_bits, link.rx_bits), metrics::psnr(image, link.reconstruction),
                        metrics::ms_ssim(image, link.reconstruction));
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
