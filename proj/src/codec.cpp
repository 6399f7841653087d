#include "vqdisc/codec.hpp"

#include <bit>
#include <cmath>

#include "vqdisc/nn.hpp"

namespace vqdisc::codec {

namespace {

constexpr std::size_t kPatch = 2;
constexpr std::size_t kArchFields = 14;

std::string stage_name(std::size_t i) { return std::to_string(i + 1); }

std::size_t fuse_factor(std::size_t stage) { return std::size_t{1} << (kStages - 1 - stage); }

}  // namespace

void CodecConfig::validate() const
{
    if (height == 0 || width == 0 || height % 8 || width % 8)
        throw ConfigError("codec: image extents must be positive multiples of 8");
    if (channels != 3) throw ConfigError("codec: only 3-channel images are supported");
    for (std::size_t i = 0; i < kStages; ++i) {
        if (enc_width[i] == 0 || dec_width[i] == 0) throw ConfigError("codec: zero channel width");
        if (codebook_size[i] < 2 || !std::has_single_bit(codebook_size[i]))
            throw ConfigError("codec: codebook sizes must be powers of two >= 2");
        if (codebook_size[i] > (std::size_t{1} << 31)) throw ConfigError("codec: codebook too large");
    }
    if (block_depth == 0) throw ConfigError("codec: block depth must be >= 1");
    if (snr_width == 0) throw ConfigError("codec: snr width must be >= 1");
}

Shape CodecConfig::stage_shape(std::size_t stage) const
{
    const std::size_t f = std::size_t{2} << stage;
    return {height / f, width / f, enc_width.at(stage)};
}

std::size_t CodecConfig::stage_tokens(std::size_t stage) const
{
    const auto s = stage_shape(stage);
    return s[0] * s[1];
}

std::size_t CodecConfig::index_bits(std::size_t stage) const
{
    return static_cast<std::size_t>(std::countr_zero(codebook_size.at(stage)));
}

std::size_t CodecConfig::payload_bits() const
{
    std::size_t b = 0;
    for (std::size_t i = 0; i < kStages; ++i) b += stage_tokens(i) * index_bits(i);
    return b;
}

std::vector<float> CodecConfig::to_array() const
{
    std::vector<float> a{static_cast<float>(height), static_cast<float>(width), static_cast<float>(channels)};
    for (auto v : enc_width) a.push_back(static_cast<float>(v));
    for (auto v : dec_width) a.push_back(static_cast<float>(v));
    for (auto v : codebook_size) a.push_back(static_cast<float>(v));
    a.push_back(static_cast<float>(block_depth));
    a.push_back(static_cast<float>(snr_width));
    return a;
}

CodecConfig CodecConfig::from_array(const std::vector<float>& a)
{
    if (a.size() != kArchFields) throw FramingError("codec: architecture record has wrong length");
    auto get = [&](std::size_t i) {
        const float v = a[i];
        if (!(v >= 0.0f) || v != std::floor(v)) throw FramingError("codec: corrupt architecture record");
        return static_cast<std::size_t>(v);
    };
    CodecConfig c;
    c.height = get(0);
    c.width = get(1);
    c.channels = get(2);
    for (std::size_t i = 0; i < kStages; ++i) {
        c.enc_width[i] = get(3 + i);
        c.dec_width[i] = get(6 + i);
        c.codebook_size[i] = get(9 + i);
    }
    c.block_depth = get(12);
    c.snr_width = get(13);
    c.validate();
    return c;
}

std::uint64_t CodecConfig::hash() const
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (float f : to_array()) {
        auto v = static_cast<std::uint64_t>(f);
        for (int i = 0; i < 8; ++i) {
            h ^= (v >> (8 * i)) & 0xFF;
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

std::size_t IndexBundle::total() const
{
    std::size_t n = 0;
    for (const auto& v : indices) n += v.size();
    return n;
}

Model::Model(CodecConfig cfg, std::uint64_t seed) : cfg_(cfg)
{
    cfg_.validate();
    std::mt19937_64 rng(seed);
    const auto d = cfg_.snr_width;

    for (std::size_t i = 0; i < kStages; ++i) {
        const auto c = cfg_.enc_width[i];
        const auto in = kPatch * kPatch * (i == 0 ? cfg_.channels : cfg_.enc_width[i - 1]);
        const std::string pre = i == 0 ? "enc.embed" : "enc.merge." + stage_name(i);
        merge_[i].w = params_.add(pre + ".w", init_uniform({in, c}, in, rng));
        merge_[i].b = params_.add(pre + ".b", Tensor({c}));
        for (std::size_t k = 0; k < cfg_.block_depth; ++k)
            enc_blocks_[i].push_back(std::make_unique<ResidualMlp>(
                params_, "enc.block." + stage_name(i) + "." + std::to_string(k), c, c, rng));
        enc_modnet_[i] = modnet::ModNetLayout::create(params_, "modnet.enc." + stage_name(i), c, d, rng);
    }
    encoder_params_ = params_.size();

    const auto c4 = cfg_.dec_width[0];
    for (std::size_t i = 0; i < kStages; ++i) {
        const auto in = cfg_.enc_width[i];
        fuse_[i].w = params_.add("dec.fuse." + stage_name(i) + ".w", init_uniform({in, c4}, in, rng));
        fuse_[i].b = params_.add("dec.fuse." + stage_name(i) + ".b", Tensor({c4}));
    }
    for (std::size_t i = 0; i < kStages; ++i) {
        const auto in = cfg_.dec_width[i];
        const auto out = cfg_.dec_width[std::min(i + 1, kStages - 1)];
        up_[i].w = params_.add("dec.up." + stage_name(i) + ".w", init_uniform({kPatch, kPatch, in, out}, in, rng));
        up_[i].b = params_.add("dec.up." + stage_name(i) + ".b", Tensor({out}));
        for (std::size_t k = 0; k < cfg_.block_depth; ++k)
            dec_blocks_[i].push_back(std::make_unique<ResidualMlp>(
                params_, "dec.block." + stage_name(i) + "." + std::to_string(k), out, out, rng));
        dec_modnet_[i] = modnet::ModNetLayout::create(params_, "modnet.dec." + stage_name(i), out, d, rng);
    }
    const auto c6 = cfg_.dec_width[kStages - 1];
    head_.w = params_.add("dec.head.w", init_uniform({c6, cfg_.channels}, c6, rng));
    head_.b = params_.add("dec.head.b", Tensor({cfg_.channels}));
}

Model::EncoderTrace Model::encode_traced(const Tensor& image, double snr_db) const
{
    require_shape(image, cfg_.image_shape(), "encode");
    const modnet::SnrContext ctx(snr_db);
    EncoderTrace t;
    const Tensor* prev = &image;
    for (std::size_t i = 0; i < kStages; ++i) {
        t.stage_input[i] = nn::space_to_depth(*prev, kPatch);
        t.embedded[i] = nn::linear(t.stage_input[i], params_.value(merge_[i].w), params_.value(merge_[i].b));
        Tensor x = t.embedded[i];
        t.blocks[i].resize(enc_blocks_[i].size());
        for (std::size_t k = 0; k < enc_blocks_[i].size(); ++k) x = enc_blocks_[i][k]->forward(params_, x, t.blocks[i][k]);
        t.features[i] = modnet::forward(x, ctx, enc_modnet_[i].weights(params_), t.modnet[i]);
        prev = &t.features[i];
    }
    return t;
}

void Model::encode_backward(const EncoderTrace& t, const StageFeatures& grad_features, Gradients& g) const
{
    Tensor carry;
    for (std::size_t s = kStages; s-- > 0;) {
        Tensor d = grad_features[s];
        require_shape(d, t.features[s].shape, "encode_backward");
        if (!carry.data.empty()) add_inplace(d, carry);
        d = modnet::backward(t.modnet[s], enc_modnet_[s].weights(params_), d, enc_modnet_[s].grads(g));
        for (std::size_t k = enc_blocks_[s].size(); k-- > 0;) d = enc_blocks_[s][k]->backward(params_, t.blocks[s][k], d, g);
        const Tensor dinput =
            nn::linear_backward(t.stage_input[s], params_.value(merge_[s].w), d, g[merge_[s].w], g[merge_[s].b]);
        if (s > 0) carry = nn::depth_to_space(dinput, kPatch);
    }
}

void Model::check_stage_features(const StageFeatures& f, const char* what) const
{
    for (std::size_t i = 0; i < kStages; ++i) require_shape(f[i], cfg_.stage_shape(i), what);
}

Tensor Model::fuse(const StageFeatures& fhat) const
{
    check_stage_features(fhat, "fuse");
    Tensor fused;
    for (std::size_t i = 0; i < kStages; ++i) {
        const Tensor pooled = nn::area_downsample(fhat[i], fuse_factor(i));
        Tensor proj = nn::linear(pooled, params_.value(fuse_[i].w), params_.value(fuse_[i].b));
        if (i == 0)
            fused = std::move(proj);
        else
            add_inplace(fused, proj);
    }
    return fused;
}

StageFeatures Model::fuse_backward(const StageFeatures& fhat, const Tensor& dfused, Gradients& g) const
{
    StageFeatures out;
    for (std::size_t i = 0; i < kStages; ++i) {
        const Tensor pooled = nn::area_downsample(fhat[i], fuse_factor(i));
        const Tensor dpooled =
            nn::linear_backward(pooled, params_.value(fuse_[i].w), dfused, g[fuse_[i].w], g[fuse_[i].b]);
        out[i] = nn::area_downsample_backward(fhat[i].shape, fuse_factor(i), dpooled);
    }
    return out;
}

Model::DecoderTrace Model::decode_traced(const StageFeatures& fhat, double snr_db) const
{
    check_stage_features(fhat, "decode");
    const modnet::SnrContext ctx(snr_db);
    DecoderTrace t;
    t.inputs = fhat;
    Tensor x = fuse(fhat);
    for (std::size_t i = 0; i < kStages; ++i) {
        t.up_input[i] = x;
        x = nn::transposed_conv2d(x, params_.value(up_[i].w), params_.value(up_[i].b), kPatch);
        t.blocks[i].resize(dec_blocks_[i].size());
        for (std::size_t k = 0; k < dec_blocks_[i].size(); ++k) x = dec_blocks_[i][k]->forward(params_, x, t.blocks[i][k]);
        x = modnet::forward(x, ctx, dec_modnet_[i].weights(params_), t.modnet[i]);
    }
    t.head_input = x;
    t.output = nn::sigmoid(nn::linear(x, params_.value(head_.w), params_.value(head_.b)));
    return t;
}

StageFeatures Model::decode_backward(const DecoderTrace& t, const Tensor& grad_image, Gradients& g) const
{
    require_shape(grad_image, t.output.shape, "decode_backward");
    const Tensor dpre = nn::activation_backward(t.output, grad_image, nn::Activation::sigmoid);
    Tensor d = nn::linear_backward(t.head_input, params_.value(head_.w), dpre, g[head_.w], g[head_.b]);
    for (std::size_t s = kStages; s-- > 0;) {
        d = modnet::backward(t.modnet[s], dec_modnet_[s].weights(params_), d, dec_modnet_[s].grads(g));
        for (std::size_t k = dec_blocks_[s].size(); k-- > 0;) d = dec_blocks_[s][k]->backward(params_, t.blocks[s][k], d, g);
        d = nn::transposed_conv2d_backward(t.up_input[s], params_.value(up_[s].w), kPatch, d, g[up_[s].w], g[up_[s].b]);
    }
    return fuse_backward(t.inputs, d, g);
}

StageFeatures Model::encode(const Tensor& image, double snr_db) const { return encode_traced(image, snr_db).features; }

Tensor Model::decode(const StageFeatures& fhat, double snr_db) const { return decode_traced(fhat, snr_db).output; }

std::pair<IndexBundle, StageFeatures> quantize_stages(const StageFeatures& feats, const Codebooks& cbs,
                                                      const CodecConfig& cfg)
{
    IndexBundle bundle;
    bundle.config_hash = cfg.hash();
    StageFeatures quantized;
    for (std::size_t i = 0; i < kStages; ++i) {
        require_shape(feats[i], cfg.stage_shape(i), "quantize_stages");
        if (cbs[i].size != cfg.codebook_size[i] || cbs[i].dim != cfg.enc_width[i])
            throw ContractError("quantize_stages: codebook " + stage_name(i) + " does not match config");
        auto r = vq::nearest_codeword(feats[i], cbs[i]);
        bundle.indices[i] = std::move(r.indices);
        bundle.grid[i] = {feats[i].dim(0), feats[i].dim(1)};
        quantized[i] = std::move(r.quantized);
    }
    return {std::move(bundle), std::move(quantized)};
}

StageFeatures lookup_stages(const IndexBundle& bundle, const Codebooks& cbs, const CodecConfig& cfg)
{
    if (bundle.config_hash != cfg.hash()) throw ContractError("index bundle was produced by a different model configuration");
    StageFeatures out;
    for (std::size_t i = 0; i < kStages; ++i) out[i] = vq::lookup(cbs[i], bundle.indices[i], cfg.stage_shape(i));
    return out;
}

CodecState::CodecState(CodecConfig cfg, std::uint64_t seed, double gamma, double eps)
    : model(cfg, seed),
      codebooks{vq::Codebook(cfg.codebook_size[0], cfg.enc_width[0], gamma, eps),
                vq::Codebook(cfg.codebook_size[1], cfg.enc_width[1], gamma, eps),
                vq::Codebook(cfg.codebook_size[2], cfg.enc_width[2], gamma, eps)}
{
}

std::vector<NamedArray> CodecState::to_arrays() const
{
    std::vector<NamedArray> out;
    out.push_back({"meta.arch", {kArchFields}, config().to_array()});
    for (const auto& p : model.params()) out.push_back(to_named_array(p.name, p.value));
    for (std::size_t i = 0; i < kStages; ++i) {
        const auto& cb = codebooks[i];
        const std::string pre = "vq." + stage_name(i);
        out.push_back(to_named_array(pre + ".vectors", Tensor({cb.size, cb.dim}, cb.vectors)));
        out.push_back(to_named_array(pre + ".ema_count", Tensor({cb.size}, cb.ema_count)));
        out.push_back(to_named_array(pre + ".ema_sum", Tensor({cb.size, cb.dim}, cb.ema_sum)));
        out.push_back({pre + ".hparams", {2}, {static_cast<float>(cb.gamma), static_cast<float>(cb.eps)}});
    }
    return out;
}

void CodecState::save(const std::filesystem::path& path) const { write_checkpoint(path, to_arrays()); }

CodecState CodecState::from_arrays(const std::vector<NamedArray>& arrays)
{
    const auto cfg = CodecConfig::from_array(find_array(arrays, "meta.arch").data);
    CodecState st(cfg, 0);
    for (auto& p : st.model.params()) {
        const auto& a = find_array(arrays, p.name);
        if (a.shape != p.value.shape) throw FramingError("checkpoint: shape mismatch for '" + p.name + "'");
        p.value = to_tensor(a);
    }
    for (std::size_t i = 0; i < kStages; ++i) {
        auto& cb = st.codebooks[i];
        const std::string pre = "vq." + stage_name(i);
        auto load = [&](const std::string& name, std::vector<Real>& dst, const Shape& shape) {
            const auto& a = find_array(arrays, pre + name);
            if (a.shape != shape) throw FramingError("checkpoint: shape mismatch for '" + pre + name + "'");
            dst = to_tensor(a).data;
        };
        load(".vectors", cb.vectors, {cb.size, cb.dim});
        load(".ema_count", cb.ema_count, {cb.size});
        load(".ema_sum", cb.ema_sum, {cb.size, cb.dim});
        const auto& h = find_array(arrays, pre + ".hparams");
        if (h.data.size() != 2) throw FramingError("checkpoint: bad codebook hyperparameters");
        cb.gamma = h.data[0];
        cb.eps = h.data[1];
    }
    return st;
}

CodecState CodecState::load(const std::filesystem::path& path) { return from_arrays(read_checkpoint(path)); }

IndexBundle CodecState::transmit_indices(const Tensor& image, double snr_db) const
{
    return quantize_stages(model.encode(image, snr_db), codebooks, config()).first;
}

Tensor CodecState::reconstruct(const IndexBundle& bundle, double snr_db) const
{
    return model.decode(lookup_stages(bundle, codebooks, config()), snr_db);
}

}  // namespace vqdisc::codec
