#pragma once

// Experiment harness: run configuration, dataset ingestion, the training
// loop, SNR sweeps through the real modem, and codebook-update ablations.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "vqdisc/codec.hpp"
#include "vqdisc/metrics.hpp"
#include "vqdisc/phy.hpp"
#include "vqdisc/vq.hpp"

namespace vqdisc::harness {

enum class UpdateMode { kld_ema, ema, none };
enum class ChannelKind { awgn, rayleigh };
enum class CsiMode { ls, perfect };

std::string to_string(UpdateMode m);
std::string to_string(ChannelKind c);
std::string to_string(CsiMode c);
UpdateMode parse_update_mode(const std::string& s);
ChannelKind parse_channel(const std::string& s);
CsiMode parse_csi(const std::string& s);

/// Every tunable of a run. Serialized as flat "key = value" lines; see
/// RunConfig::keys() for the full list. Unknown keys are rejected.
struct RunConfig {
    std::uint64_t seed = 1;

    // data
    std::string data_path;  // empty: synthetic corpus
    std::size_t synthetic_count = 256;
    bool synthetic_imbalanced = false;

    codec::CodecConfig codec;

    // vq
    double gamma = 0.99;
    double eps = 1e-5;
    vq::VqLossConfig vq_loss;
    double dead_threshold = 1e-3;
    UpdateMode mode = UpdateMode::kld_ema;

    // optimizer
    double lr = 2e-4;
    double min_lr = 1e-6;
    double t_max = 300;
    double weight_decay = 1e-4;
    double clip_norm = 5.0;

    // training
    std::size_t epochs = 300;
    std::size_t batch = 16;
    double snr_min_db = 0.0;
    double snr_max_db = 15.0;

    // evaluation
    std::vector<double> eval_snrs{0, 3, 6, 9, 12, 15};
    std::size_t eval_trials = 10;
    std::size_t eval_count = 0;  // 0: whole dataset
    ChannelKind channel = ChannelKind::awgn;
    CsiMode csi = CsiMode::ls;
    std::size_t rayleigh_taps = 8;
    double rayleigh_decay = 3.0;

    std::string checkpoint = "model.vqd";

    static RunConfig parse(const std::string& text);
    static RunConfig load(const std::filesystem::path& path);
    std::string to_text() const;
    void set(const std::string& key, const std::string& value);
    static std::vector<std::string> keys();
    void validate() const;
};

struct Dataset {
    std::vector<Tensor> images;
    std::vector<std::string> names;

    std::size_t size() const { return images.size(); }
};

// Lexicographic file order; unreadable files are skipped with a warning on
// `warn` (when given). Throws if nothing usable remains.
Dataset load_dataset(const std::filesystem::path& dir, std::size_t height, std::size_t width,
                     std::ostream* warn = nullptr);

// Smooth gradients with a few flat shapes. When `imbalanced`, three out of
// four images come from one narrow, dark, low-saturation style.
Dataset synthetic_corpus(std::size_t count, std::size_t height, std::size_t width, std::uint64_t seed,
                         bool imbalanced);

Dataset dataset_for(const RunConfig& cfg, std::ostream* warn = nullptr);

std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags);

// Worker count from VQDISC_THREADS (default 1).
std::size_t thread_count();
// Runs fn(i) for i in [0, n) across thread_count() workers. Results must
// be written to per-index slots so the outcome is independent of scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

struct EpochLog {
    std::size_t epoch = 0;
    double lr = 0;
    double loss = 0;
    double recon_mse = 0;
    double vq_loss = 0;
    std::array<double, codec::kStages> perplexity{};
    std::array<double, codec::kStages> kld{};
    std::size_t reseeded = 0;
};

struct TrainResult {
    codec::CodecState state;
    std::vector<EpochLog> log;
};

using EpochCallback = std::function<void(const EpochLog&)>;

// Flips every payload bit independently with the given probability.
void corrupt_indices(codec::IndexBundle& bundle, const codec::CodecConfig& cfg, double flip_prob,
                     std::mt19937_64& rng);

TrainResult train(const RunConfig& cfg, const Dataset& data, const EpochCallback& on_epoch = {});

struct SweepOptions {
    std::vector<double> snrs{0, 3, 6, 9, 12, 15};
    std::size_t trials = 10;
    ChannelKind channel = ChannelKind::awgn;
    CsiMode csi = CsiMode::ls;
    bool noiseless = false;
    std::uint64_t seed = 1;
    std::size_t count = 0;  // images evaluated; 0: whole dataset
    std::size_t rayleigh_taps = 8;
    double rayleigh_decay = 3.0;
};

SweepOptions sweep_options(const RunConfig& cfg);

struct SweepRow {
    double snr_db = 0;
    metrics::MetricReport report;
};

/// Outcome of sending one image through the digital chain.
struct LinkOutcome {
    codec::IndexBundle sent;
    codec::IndexBundle received;
    Tensor reconstruction;
    phy::Bits tx_bits;
    phy::Bits rx_bits;
    phy::ComplexFrame frame;
};

// The SNR fed to the ModNet blocks: snr_db clamped to their valid range.
double conditioning_snr(double snr_db);

// Full chain: encode at snr_db, quantize, serialize, QPSK/OFDM, channel,
// equalize, demap, lookup, decode at snr_db. `channel` nullopt means an
// identity channel.
LinkOutcome transmit_image(const codec::CodecState& state, const Tensor& image, double snr_db,
                           const std::optional<phy::ChannelModel>& channel, CsiMode csi, std::mt19937_64& rng);

std::vector<SweepRow> sweep_snr(const codec::CodecState& state, const Dataset& data, const SweepOptions& opt);

inline constexpr const char* kSweepColumns = "snr_db,psnr_db,ms_ssim,ber,bcr,perplexity_1,perplexity_2,perplexity_3";
inline constexpr const char* kAblationColumns =
    "mode,snr_db,psnr_db,ms_ssim,ber,bcr,perplexity_1,perplexity_2,perplexity_3";

std::string format_number(double v);
double parse_number(const std::string& s);

void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows, const SweepOptions& opt);
std::vector<SweepRow> read_sweep_csv(std::istream& is);

struct AblationResult {
    UpdateMode mode;
    std::vector<SweepRow> rows;
    std::vector<EpochLog> log;

    double mean_psnr() const;
    double mean_ms_ssim() const;
    double mean_perplexity() const;
};

// Trains one model per update mode from the same seed and data, then
// sweeps each. Writes ablation_<mode>.csv and ablation_summary.csv when
// out_dir is given.
std::vector<AblationResult> ablate_codebook(const RunConfig& cfg, const Dataset& data,
                                            const std::optional<std::filesystem::path>& out_dir,
                                            const EpochCallback& on_epoch = {});

}  // namespace vqdisc::harness
