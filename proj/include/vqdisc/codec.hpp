#pragma once

// Hierarchical semantic encoder / decoder with per-stage vector
// quantization. Encoder: patch partition, three stages of
// [patch merge -> mixing block -> SNR ModNet], each tapped as F1..F3.
// Decoder: multi-scale fusion at H/8, three [x2 transposed conv -> mixing
// block -> SNR ModNet] cascades and a sigmoid output head.

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <vector>

#include "vqdisc/backbone.hpp"
#include "vqdisc/checkpoint.hpp"
#include "vqdisc/modnet.hpp"
#include "vqdisc/params.hpp"
#include "vqdisc/vq.hpp"

namespace vqdisc::codec {

inline constexpr std::size_t kStages = 3;

struct CodecConfig {
    std::size_t height = 32;
    std::size_t width = 32;
    std::size_t channels = 3;
    std::array<std::size_t, kStages> enc_width{16, 32, 64};     // C1..C3
    std::array<std::size_t, kStages> dec_width{64, 32, 16};     // C4..C6
    std::array<std::size_t, kStages> codebook_size{64, 64, 64}; // N1..N3
    std::size_t block_depth = 1;
    std::size_t snr_width = 16;

    void validate() const;
    // Token grid of stage i (0-based): [H/2^(i+1), W/2^(i+1), C_(i+1)].
    Shape stage_shape(std::size_t stage) const;
    std::size_t stage_tokens(std::size_t stage) const;
    std::size_t index_bits(std::size_t stage) const;  // log2 N_i
    std::size_t payload_bits() const;                 // sum_i M_i log2 N_i
    Shape image_shape() const { return {height, width, channels}; }

    // FNV-1a over the architecture fields.
    std::uint64_t hash() const;
    std::vector<float> to_array() const;
    static CodecConfig from_array(const std::vector<float>& a);

    friend bool operator==(const CodecConfig&, const CodecConfig&) = default;
};

using StageFeatures = std::array<Tensor, kStages>;

struct IndexBundle {
    std::array<std::vector<std::uint32_t>, kStages> indices;
    std::array<Shape, kStages> grid;  // [Ht, Wt] per stage
    std::uint64_t config_hash = 0;

    std::size_t total() const;
    friend bool operator==(const IndexBundle&, const IndexBundle&) = default;
};

using Codebooks = std::array<vq::Codebook, kStages>;

class Model {
public:
    struct EncoderTrace {
        std::array<Tensor, kStages> stage_input;   // space_to_depth output
        std::array<Tensor, kStages> embedded;      // after linear
        std::array<std::vector<TokenMixer::Cache>, kStages> blocks;
        std::array<modnet::ModNetCache, kStages> modnet;
        StageFeatures features;
    };

    struct DecoderTrace {
        StageFeatures inputs;
        std::array<Tensor, kStages> pooled;        // area-downsampled inputs at H/8
        std::array<Tensor, kStages> up_input;
        std::array<std::vector<TokenMixer::Cache>, kStages> blocks;
        std::array<modnet::ModNetCache, kStages> modnet;
        Tensor head_input;
        Tensor output;
    };

    Model(CodecConfig cfg, std::uint64_t seed);

    const CodecConfig& config() const { return cfg_; }
    ParamSet& params() { return params_; }
    const ParamSet& params() const { return params_; }

    EncoderTrace encode_traced(const Tensor& image, double snr_db) const;
    // Accumulates parameter gradients from per-stage feature gradients.
    void encode_backward(const EncoderTrace& trace, const StageFeatures& grad_features, Gradients& g) const;

    DecoderTrace decode_traced(const StageFeatures& fhat, double snr_db) const;
    // Returns the gradient with respect to each decoder input stage.
    StageFeatures decode_backward(const DecoderTrace& trace, const Tensor& grad_image, Gradients& g) const;

    StageFeatures encode(const Tensor& image, double snr_db) const;
    Tensor decode(const StageFeatures& fhat, double snr_db) const;

    // Fusion of the three stages onto the H/8 grid with C4 channels.
    Tensor fuse(const StageFeatures& fhat) const;
    StageFeatures fuse_backward(const StageFeatures& fhat, const Tensor& dfused, Gradients& g) const;

    std::size_t encoder_param_count() const { return encoder_params_; }

private:
    struct Layer {
        std::size_t w, b;
    };

    void check_stage_features(const StageFeatures& f, const char* what) const;

    CodecConfig cfg_;
    ParamSet params_;
    std::array<Layer, kStages> merge_{};
    std::array<std::vector<std::unique_ptr<TokenMixer>>, kStages> enc_blocks_;
    std::array<modnet::ModNetLayout, kStages> enc_modnet_{};
    std::array<Layer, kStages> fuse_{};
    std::array<Layer, kStages> up_{};
    std::array<std::vector<std::unique_ptr<TokenMixer>>, kStages> dec_blocks_;
    std::array<modnet::ModNetLayout, kStages> dec_modnet_{};
    Layer head_{};
    std::size_t encoder_params_ = 0;
};

std::pair<IndexBundle, StageFeatures> quantize_stages(const StageFeatures& feats, const Codebooks& cbs,
                                                      const CodecConfig& cfg);
StageFeatures lookup_stages(const IndexBundle& bundle, const Codebooks& cbs, const CodecConfig& cfg);

/// A model together with its per-stage codebooks; the unit that is
/// checkpointed and transmitted against.
struct CodecState {
    Model model;
    Codebooks codebooks;

    CodecState(CodecConfig cfg, std::uint64_t seed, double gamma = 0.99, double eps = 1e-5);

    const CodecConfig& config() const { return model.config(); }

    std::vector<NamedArray> to_arrays() const;
    void save(const std::filesystem::path& path) const;
    static CodecState from_arrays(const std::vector<NamedArray>& arrays);
    static CodecState load(const std::filesystem::path& path);

    IndexBundle transmit_indices(const Tensor& image, double snr_db) const;
    Tensor reconstruct(const IndexBundle& bundle, double snr_db) const;
};

}  // namespace vqdisc::codec
