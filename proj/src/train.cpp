#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "vqdisc/harness.hpp"
#include "vqdisc/optim.hpp"

namespace vqdisc::harness {

using codec::kStages;

void corrupt_indices(codec::IndexBundle& bundle, const codec::CodecConfig& cfg, double flip_prob, std::mt19937_64& rng)
{
    if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) throw ContractError("corrupt_indices: flip probability outside [0,1]");
    if (flip_prob == 0.0) return;
    auto bits = phy::indices_to_bits(bundle, cfg);
    std::bernoulli_distribution flip(flip_prob);
    for (auto& b : bits)
        if (flip(rng)) b ^= 1U;
    auto out = phy::bits_to_indices(bits, cfg);
    out.config_hash = bundle.config_hash;
    bundle = std::move(out);
}

namespace {

// Row-stacks one stage's features from every sample of a batch.
Tensor stack_rows(const std::vector<codec::Model::EncoderTrace>& traces, std::size_t stage)
{
    const auto& first = traces.front().features[stage];
    const auto per = first.numel();
    Tensor out({traces.size() * first.rows(), first.last()});
    for (std::size_t i = 0; i < traces.size(); ++i)
        std::copy(traces[i].features[stage].data.begin(), traces[i].features[stage].data.end(),
                  out.data.begin() + static_cast<std::ptrdiff_t>(i * per));
    return out;
}

Tensor slice_rows(const Tensor& stacked, std::size_t sample, const Shape& shape)
{
    const auto per = shape_numel(shape);
    Tensor out(shape);
    std::copy_n(stacked.data.begin() + static_cast<std::ptrdiff_t>(sample * per), per, out.data.begin());
    return out;
}

std::string where(std::size_t epoch, std::size_t batch)
{
    std::ostringstream os;
    os << "epoch " << epoch << ", batch " << batch;
    return os.str();
}

}  // namespace

TrainResult train(const RunConfig& cfg, const Dataset& data, const EpochCallback& on_epoch)
{
    cfg.validate();
    if (data.size() == 0) throw Error("train: empty dataset");
    const auto& ccfg = cfg.codec;
    for (const auto& img : data.images) require_shape(img, ccfg.image_shape(), "train: dataset image");

    TrainResult result{codec::CodecState(ccfg, derive_seed(cfg.seed, {0x11}), cfg.gamma, cfg.eps), {}};
    auto& state = result.state;
    auto& model = state.model;
    auto& params = model.params();

    AdamW opt(AdamWConfig{cfg.weight_decay});
    const CosineSchedule schedule{cfg.lr, cfg.min_lr, cfg.t_max};
    const auto ofdm = phy::OfdmConfig::ieee80211a();

    vq::VqLossConfig loss_cfg = cfg.vq_loss;
    if (cfg.mode != UpdateMode::kld_ema) loss_cfg.beta = 0.0;

    std::mt19937_64 order_rng(derive_seed(cfg.seed, {0x22}));
    std::mt19937_64 codebook_rng(derive_seed(cfg.seed, {0x33}));
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    const auto batch = std::min(cfg.batch, data.size());
    const auto batches = (data.size() + batch - 1) / batch;
    bool initialized = false;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = schedule.lr(static_cast<double>(epoch));
        std::shuffle(order.begin(), order.end(), order_rng);

        std::array<vq::EmaAccumulator, kStages> acc;
        for (std::size_t s = 0; s < kStages; ++s) acc[s] = vq::EmaAccumulator(ccfg.codebook_size[s], ccfg.enc_width[s]);
        std::array<Tensor, kStages> last_features;

        EpochLog log;
        log.epoch = epoch;
        log.lr = lr;

        for (std::size_t b = 0; b < batches; ++b) {
            const auto begin = b * batch, end = std::min(begin + batch, data.size());
            const auto count = end - begin;
            std::mt19937_64 batch_rng(derive_seed(cfg.seed, {0x44, epoch, b}));
            const double mu = std::uniform_real_distribution<double>(cfg.snr_min_db, cfg.snr_max_db)(batch_rng);
            const double flip_prob = phy::ber_theory_qpsk_awgn(phy::effective_ebn0_db(mu, ofdm));

            std::vector<codec::Model::EncoderTrace> enc(count);
            parallel_for(count, [&](std::size_t i) { enc[i] = model.encode_traced(data.images[order[begin + i]], mu); });

            std::array<Tensor, kStages> stacked;
            for (std::size_t s = 0; s < kStages; ++s) stacked[s] = stack_rows(enc, s);
            if (!initialized) {
                for (std::size_t s = 0; s < kStages; ++s)
                    vq::init_from_features(state.codebooks[s], stacked[s], codebook_rng);
                initialized = true;
            }

            std::array<vq::AssignResult, kStages> assign;
            std::array<vq::VqLoss, kStages> vql;
            double vq_total = 0.0;
            for (std::size_t s = 0; s < kStages; ++s) {
                assign[s] = vq::nearest_codeword(stacked[s], state.codebooks[s], true, loss_cfg.tau);
                vql[s] = vq::vq_loss(stacked[s], assign[s], state.codebooks[s], loss_cfg);
                acc[s].add(stacked[s], assign[s]);
                vq_total += vql[s].total;
            }

            // Per-sample channel corruption seeds are drawn in sample order
            // so the result does not depend on the worker count.
            std::vector<std::uint64_t> sample_seeds(count);
            for (auto& sd : sample_seeds) sd = batch_rng();

            std::vector<Gradients> grads(count);
            std::vector<double> sample_mse(count);
            parallel_for(count, [&](std::size_t i) {
                codec::IndexBundle bundle;
                bundle.config_hash = ccfg.hash();
                for (std::size_t s = 0; s < kStages; ++s) {
                    const auto m = ccfg.stage_tokens(s);
                    bundle.indices[s].assign(assign[s].indices.begin() + static_cast<std::ptrdiff_t>(i * m),
                                             assign[s].indices.begin() + static_cast<std::ptrdiff_t>((i + 1) * m));
                    const auto shape = ccfg.stage_shape(s);
                    bundle.grid[s] = {shape[0], shape[1]};
                }
                std::mt19937_64 rng(sample_seeds[i]);
                corrupt_indices(bundle, ccfg, flip_prob, rng);
                const auto fhat = codec::lookup_stages(bundle, state.codebooks, ccfg);

                const auto dec = model.decode_traced(fhat, mu);
                const auto& target = data.images[order[begin + i]];
                Tensor dout(dec.output.shape);
                double se = 0.0;
                const double scale = 2.0 / static_cast<double>(target.numel() * count);
                for (std::size_t p = 0; p < target.numel(); ++p) {
                    const double diff = static_cast<double>(dec.output[p]) - static_cast<double>(target[p]);
                    se += diff * diff;
                    dout[p] = static_cast<Real>(scale * diff);
                }
                sample_mse[i] = se / static_cast<double>(target.numel());

                grads[i] = model.params().make_gradients();
                // Straight-through: the decoder-input gradient reaches the
                // encoder features unchanged, on top of the VQ loss terms.
                auto dfeat = model.decode_backward(dec, dout, grads[i]);
                for (std::size_t s = 0; s < kStages; ++s)
                    add_inplace(dfeat[s], slice_rows(vql[s].grad_features, i, ccfg.stage_shape(s)));
                model.encode_backward(enc[i], dfeat, grads[i]);
            });

            const double recon = std::accumulate(sample_mse.begin(), sample_mse.end(), 0.0) / static_cast<double>(count);
            const double loss = recon + vq_total;
            if (!std::isfinite(loss)) throw Error("non-finite training loss at " + where(epoch, b));

            params.zero_grad();
            for (const auto& g : grads) params.accumulate(g);
            clip_global_norm(params, cfg.clip_norm);
            try {
                opt.step(params, lr);
            } catch (const Error& e) {
                throw Error(std::string(e.what()) + " at " + where(epoch, b));
            }

            log.loss += loss / static_cast<double>(batches);
            log.recon_mse += recon / static_cast<double>(batches);
            log.vq_loss += vq_total / static_cast<double>(batches);
            last_features = std::move(stacked);
        }

        for (std::size_t s = 0; s < kStages; ++s) {
            const auto usage = vq::normalize_counts(std::span<const double>(acc[s].counts));
            log.perplexity[s] = vq::perplexity(usage);
            log.kld[s] = vq::kld_uniform(usage);
            if (cfg.mode == UpdateMode::none) continue;
            vq::ema_update(state.codebooks[s], acc[s]);
            log.reseeded += vq::reseed_dead_codes(state.codebooks[s], last_features[s], cfg.dead_threshold, codebook_rng);
        }
        if (on_epoch) on_epoch(log);
        result.log.push_back(log);
    }
    return result;
}

}  // namespace vqdisc::harness
