#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numbers>
#include <ostream>
#include <random>
#include <thread>

#include "vqdisc/harness.hpp"
#include "vqdisc/image_io.hpp"

namespace vqdisc::harness {

Dataset load_dataset(const std::filesystem::path& dir, std::size_t height, std::size_t width, std::ostream* warn)
{
    if (!std::filesystem::is_directory(dir)) throw Error("dataset directory not found: " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir))
        if (entry.is_regular_file()) files.push_back(entry.path());
    std::sort(files.begin(), files.end());

    Dataset ds;
    for (const auto& f : files) {
        try {
            ds.images.push_back(image::center_crop_resize(image::load(f), height, width));
            ds.names.push_back(f.filename().string());
        } catch (const Error& e) {
            if (warn) *warn << "warning: skipping " << f.string() << ": " << e.what() << "\n";
        }
    }
    if (ds.images.empty()) throw Error("no readable images in " + dir.string());
    return ds;
}

namespace {

using Rgb = std::array<double, 3>;

void paint(Tensor& img, std::size_t i, std::size_t j, const Rgb& c)
{
    for (std::size_t k = 0; k < 3; ++k) img.data[(i * img.dim(1) + j) * 3 + k] = static_cast<Real>(c[k]);
}

Tensor render(std::size_t h, std::size_t w, const Rgb& c0, const Rgb& c1, double angle,
              const std::vector<std::pair<std::array<double, 5>, Rgb>>& shapes)
{
    Tensor img({h, w, 3});
    const double ca = std::cos(angle), sa = std::sin(angle);
    const double span = std::abs(ca) * static_cast<double>(w) + std::abs(sa) * static_cast<double>(h);
    const double base = std::min(0.0, ca * static_cast<double>(w)) + std::min(0.0, sa * static_cast<double>(h));
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
            const double t = std::clamp((ca * static_cast<double>(j) + sa * static_cast<double>(i) - base) / span, 0.0, 1.0);
            Rgb c{};
            for (std::size_t k = 0; k < 3; ++k) c[k] = (1.0 - t) * c0[k] + t * c1[k];
            paint(img, i, j, c);
        }
    // Shape record: kind (<0.5 rectangle, else ellipse), center y, center x, half-height, half-width, all in [0,1].
    for (const auto& [geo, color] : shapes) {
        const double cy = geo[1] * static_cast<double>(h), cx = geo[2] * static_cast<double>(w);
        const double ry = geo[3] * static_cast<double>(h), rx = geo[4] * static_cast<double>(w);
        for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j) {
                const double dy = (static_cast<double>(i) + 0.5 - cy) / ry;
                const double dx = (static_cast<double>(j) + 0.5 - cx) / rx;
                const bool inside = geo[0] < 0.5 ? (std::abs(dy) <= 1.0 && std::abs(dx) <= 1.0) : (dy * dy + dx * dx <= 1.0);
                if (inside) paint(img, i, j, color);
            }
    }
    return img;
}

}  // namespace

Dataset synthetic_corpus(std::size_t count, std::size_t height, std::size_t width, std::uint64_t seed, bool imbalanced)
{
    if (count == 0) throw Error("synthetic corpus: count must be >= 1");
    Dataset ds;
    for (std::size_t n = 0; n < count; ++n) {
        std::mt19937_64 rng(derive_seed(seed, {0x5e7, n}));
        std::uniform_real_distribution<double> u(0.0, 1.0);
        const bool dominant = imbalanced && u(rng) < 0.75;

        auto color = [&] {
            if (dominant) {
                const Rgb base{0.22, 0.27, 0.36};
                return Rgb{base[0] + 0.08 * (u(rng) - 0.5), base[1] + 0.08 * (u(rng) - 0.5), base[2] + 0.08 * (u(rng) - 0.5)};
            }
            return Rgb{u(rng), u(rng), u(rng)};
        };
        const Rgb c0 = color(), c1 = color();
        const double angle = 2.0 * std::numbers::pi * u(rng);
        const std::size_t n_shapes = dominant ? 1 : 1 + static_cast<std::size_t>(u(rng) * 3.0);
        std::vector<std::pair<std::array<double, 5>, Rgb>> shapes;
        for (std::size_t s = 0; s < n_shapes; ++s) {
            std::array<double, 5> geo{u(rng), 0.15 + 0.7 * u(rng), 0.15 + 0.7 * u(rng), 0.1 + 0.25 * u(rng), 0.1 + 0.25 * u(rng)};
            shapes.push_back({geo, color()});
        }
        ds.images.push_back(render(height, width, c0, c1, angle, shapes));
        ds.names.push_back("synthetic_" + std::to_string(n));
    }
    return ds;
}

Dataset dataset_for(const RunConfig& cfg, std::ostream* warn)
{
    if (!cfg.data_path.empty()) return load_dataset(cfg.data_path, cfg.codec.height, cfg.codec.width, warn);
    return synthetic_corpus(cfg.synthetic_count, cfg.codec.height, cfg.codec.width, derive_seed(cfg.seed, {0xda7a}),
                            cfg.synthetic_imbalanced);
}

namespace {

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags)
{
    std::uint64_t h = splitmix64(base);
    for (auto t : tags) h = splitmix64(h ^ splitmix64(t + 0x632be59bd9b4e019ULL));
    return h;
}

std::size_t thread_count()
{
    if (const char* env = std::getenv("VQDISC_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0) return static_cast<std::size_t>(v);
    }
    return 1;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn)
{
    const auto workers = std::min(thread_count(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < n; i += workers) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace vqdisc::harness
