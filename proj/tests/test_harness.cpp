#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "vqdisc/harness.hpp"

using namespace vqdisc;
using namespace vqdisc::harness;
namespace fs = std::filesystem;

namespace {

RunConfig tiny_config()
{
    RunConfig cfg;
    cfg.codec.height = cfg.codec.width = 16;
    cfg.codec.enc_width = {8, 8, 8};
    cfg.codec.dec_width = {8, 8, 8};
    cfg.codec.codebook_size = {8, 8, 8};
    cfg.synthetic_count = 8;
    cfg.batch = 4;
    cfg.epochs = 2;
    cfg.t_max = 2;
    cfg.eval_snrs = {0, 15};
    cfg.eval_trials = 2;
    return cfg;
}

fs::path scratch_dir(const std::string& name)
{
    const auto dir = fs::temp_directory_path() / ("vqdisc_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_bytes(const fs::path& p, const std::string& bytes)
{
    std::ofstream os(p, std::ios::binary);
    os << bytes;
}

std::string read_bytes(const fs::path& p)
{
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

struct ThreadEnv {
    explicit ThreadEnv(const char* v) { setenv("VQDISC_THREADS", v, 1); }
    ~ThreadEnv() { unsetenv("VQDISC_THREADS"); }
};

}  // namespace

TEST_CASE("run configuration")
{
    RunConfig defaults;
    defaults.validate();
    CHECK(defaults.gamma == 0.99);
    CHECK(defaults.eps == 1e-5);
    CHECK(defaults.vq_loss.alpha == 0.25);
    CHECK(defaults.vq_loss.beta == 0.05);

    const auto cfg = RunConfig::parse("# comment\nseed = 9\nvq.mode = ema  # trailing\n\neval.snrs = 0,7.5\n");
    CHECK(cfg.seed == 9);
    CHECK(cfg.mode == UpdateMode::ema);
    CHECK(cfg.eval_snrs == std::vector<double>{0.0, 7.5});
    CHECK(RunConfig::parse(cfg.to_text()).to_text() == cfg.to_text());
    CHECK(RunConfig::keys().size() >= 30);

    CHECK_THROWS_AS(RunConfig::parse("no.such.key = 1\n"), ConfigError);
    CHECK_THROWS_AS(RunConfig::parse("seed\n"), ConfigError);
    CHECK_THROWS_AS(RunConfig::parse("vq.mode = sometimes\n"), ConfigError);
    CHECK_THROWS_AS(RunConfig::parse("train.batch = 0\n"), ConfigError);
    CHECK_THROWS_AS(RunConfig::parse("train.batch = 4x\n"), ConfigError);
}

TEST_CASE("number formatting round-trips")
{
    for (double v : {0.0, 1.0 / 3.0, -2.5e-7, 48.13080360867910, 1e300})
        CHECK(parse_number(format_number(v)) == v);
    CHECK(std::isinf(parse_number(format_number(std::numeric_limits<double>::infinity()))));
}

TEST_CASE("dataset ingestion")
{
    const auto dir = scratch_dir("data");
    write_bytes(dir / "b.ppm", std::string("P6 2 2 255\n") + std::string(12, '\xff'));
    write_bytes(dir / "a.ppm", std::string("P6\n# comment\n2 2\n255\n") + std::string(12, '\x00'));
    write_bytes(dir / "c.ppm", "P6 2 2 255\n\x01\x02");
    write_bytes(dir / "d.txt", "not an image");

    std::ostringstream warn;
    const auto ds = load_dataset(dir, 2, 2, &warn);
    REQUIRE(ds.size() == 2);
    CHECK(ds.names == std::vector<std::string>{"a.ppm", "b.ppm"});
    CHECK(ds.images[0].shape == Shape{2, 2, 3});
    for (Real v : ds.images[1].data) CHECK(v == 1.0f);
    CHECK(warn.str().find("c.ppm") != std::string::npos);
    CHECK(warn.str().find("d.txt") != std::string::npos);
    CHECK(load_dataset(dir, 2, 2).names == ds.names);

    const auto empty = scratch_dir("empty");
    CHECK_THROWS_AS(load_dataset(empty, 2, 2), Error);
    CHECK_THROWS_AS(load_dataset(dir / "missing", 2, 2), Error);
    fs::remove_all(dir);
    fs::remove_all(empty);
}

TEST_CASE("synthetic corpus and seeds")
{
    const auto a = synthetic_corpus(6, 16, 16, 5, true);
    const auto b = synthetic_corpus(6, 16, 16, 5, true);
    for (std::size_t i = 0; i < 6; ++i) {
        CHECK(a.images[i].data == b.images[i].data);
        for (Real v : a.images[i].data) CHECK((v >= 0.0f && v <= 1.0f));
    }
    CHECK(synthetic_corpus(6, 16, 16, 6, true).images[0].data != a.images[0].data);
    CHECK(derive_seed(1, {2}) != derive_seed(1, {3}));
    CHECK(derive_seed(1, {2, 3}) != derive_seed(1, {3, 2}));
}

TEST_CASE("parallel_for fills every slot")
{
    const ThreadEnv env("3");
    CHECK(thread_count() == 3);
    std::vector<int> out(100, 0);
    parallel_for(out.size(), [&](std::size_t i) { out[i] = static_cast<int>(i) * 2; });
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == static_cast<int>(i) * 2);
    CHECK_THROWS_AS(parallel_for(10, [](std::size_t i) {
                        if (i == 7) throw Error("boom");
                    }),
                    Error);
}

TEST_CASE("bit-flip surrogate")
{
    const auto cfg = tiny_config().codec;
    codec::IndexBundle b;
    b.config_hash = cfg.hash();
    for (std::size_t s = 0; s < codec::kStages; ++s) {
        const auto shape = cfg.stage_shape(s);
        b.grid[s] = {shape[0], shape[1]};
        b.indices[s].assign(cfg.stage_tokens(s), 3);
    }
    std::mt19937_64 rng(1);
    auto same = b;
    corrupt_indices(same, cfg, 0.0, rng);
    CHECK(same == b);
    auto flipped = b;
    corrupt_indices(flipped, cfg, 1.0, rng);
    for (auto idx : flipped.indices[0]) CHECK(idx == 4);  // 011 -> 100
    CHECK_THROWS_AS(corrupt_indices(flipped, cfg, 1.5, rng), ContractError);
}

TEST_CASE("training smoke run and determinism")
{
    const auto cfg = tiny_config();
    const auto data = dataset_for(cfg);
    std::size_t epochs_seen = 0;
    const auto a = train(cfg, data, [&](const EpochLog& e) {
        ++epochs_seen;
        CHECK(std::isfinite(e.loss));
        CHECK(e.perplexity[0] >= 1.0);
    });
    CHECK(epochs_seen == 2);
    const auto b = train(cfg, data);
    CHECK(encode_checkpoint(a.state.to_arrays()) == encode_checkpoint(b.state.to_arrays()));

    const ThreadEnv env("3");
    const auto c = train(cfg, data);
    CHECK(encode_checkpoint(a.state.to_arrays()) == encode_checkpoint(c.state.to_arrays()));
}

TEST_CASE("frozen codebooks in mode none")
{
    auto cfg = tiny_config();
    cfg.mode = UpdateMode::none;
    const auto data = dataset_for(cfg);
    cfg.epochs = 1;
    const auto first = train(cfg, data);
    cfg.epochs = 3;
    cfg.t_max = 3;
    const auto later = train(cfg, data);
    for (std::size_t s = 0; s < codec::kStages; ++s) {
        CHECK(first.state.codebooks[s].vectors == later.state.codebooks[s].vectors);
        CHECK(first.state.codebooks[s].ema_count == later.state.codebooks[s].ema_count);
    }
}

TEST_CASE("snr sweep")
{
    const auto cfg = tiny_config();
    const auto data = dataset_for(cfg);
    const auto trained = train(cfg, data);
    auto opt = sweep_options(cfg);

    SUBCASE("noiseless trials agree and match the high-SNR limit")
    {
        opt.snrs = {60.0};
        opt.noiseless = true;
        const auto clean = sweep_snr(trained.state, data, opt);
        CHECK(clean[0].report.ber == 0.0);
        CHECK(sweep_snr(trained.state, data, opt)[0].report.psnr_db == clean[0].report.psnr_db);
        opt.noiseless = false;
        const auto high = sweep_snr(trained.state, data, opt);
        CHECK(high[0].report.ber == 0.0);
        CHECK(high[0].report.psnr_db == clean[0].report.psnr_db);
        CHECK(high[0].report.ms_ssim == clean[0].report.ms_ssim);
    }
    SUBCASE("csv round trip")
    {
        const auto rows = sweep_snr(trained.state, data, opt);
        CHECK(rows.size() == 2);
        CHECK(rows[0].report.ber > rows[1].report.ber);
        CHECK(rows[0].report.bcr == doctest::Approx(cfg.codec.payload_bits() / (16.0 * 16.0 * 3.0 * 8.0)));
        std::stringstream ss;
        write_sweep_csv(ss, rows, opt);
        const auto text = ss.str();
        CHECK(text.find(kSweepColumns) != std::string::npos);
        const auto back = read_sweep_csv(ss);
        REQUIRE(back.size() == rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            CHECK(back[i].snr_db == rows[i].snr_db);
            CHECK(back[i].report.psnr_db == rows[i].report.psnr_db);
            CHECK(back[i].report.ms_ssim == rows[i].report.ms_ssim);
            CHECK(back[i].report.ber == rows[i].report.ber);
            CHECK(back[i].report.perplexity == rows[i].report.perplexity);
        }
        std::stringstream bad("snr,psnr\n1,2\n");
        CHECK_THROWS_AS(read_sweep_csv(bad), FramingError);
    }
    SUBCASE("rayleigh channel with both receivers")
    {
        opt.channel = ChannelKind::rayleigh;
        opt.snrs = {30.0};
        opt.trials = 1;
        const auto ls = sweep_snr(trained.state, data, opt);
        opt.csi = CsiMode::perfect;
        const auto perfect = sweep_snr(trained.state, data, opt);
        CHECK(std::isfinite(ls[0].report.psnr_db));
        CHECK(std::isfinite(perfect[0].report.psnr_db));
    }
    SUBCASE("mismatched data is refused")
    {
        const auto other = synthetic_corpus(2, 32, 32, 1, false);
        CHECK_THROWS_AS(sweep_snr(trained.state, other, opt), ConfigError);
    }
}

TEST_CASE("ablation csv schema")
{
    auto cfg = tiny_config();
    cfg.epochs = 1;
    cfg.eval_trials = 1;
    const auto dir = scratch_dir("ablate");
    const auto results = ablate_codebook(cfg, dataset_for(cfg), dir);
    REQUIRE(results.size() == 3);
    std::string header;
    for (const auto* mode : {"kld-ema", "ema", "none"}) {
        std::ifstream is(dir / ("ablation_" + std::string(mode) + ".csv"));
        std::string comment, columns, row;
        std::getline(is, comment);
        std::getline(is, columns);
        std::getline(is, row);
        CHECK(columns == kAblationColumns);
        CHECK(row.rfind(std::string(mode) + ",", 0) == 0);
        if (header.empty()) header = comment + columns;
        CHECK(comment + columns == header);
    }
    CHECK(fs::exists(dir / "ablation_summary.csv"));
    std::ifstream is(dir / "ablation_ema.csv");
    CHECK(read_sweep_csv(is).size() == 2);
    fs::remove_all(dir);
}
