#include "vqdisc/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <vector>

namespace vqdisc::image {

namespace {

std::string read_file(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open image: " + path.string());
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

std::uint8_t to_byte(Real v)
{
    const double c = std::clamp(static_cast<double>(v), 0.0, 1.0);
    return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

Tensor from_rgb8(const std::uint8_t* px, std::size_t h, std::size_t w)
{
    Tensor t({h, w, 3});
    for (std::size_t i = 0; i < h * w * 3; ++i) t[i] = static_cast<Real>(px[i]) / Real(255);
    return t;
}

Tensor decode_png(const std::string& bytes)
{
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size()))
        throw Error(std::string("png: ") + img.message);
    img.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
        png_image_free(&img);
        throw Error(std::string("png: ") + img.message);
    }
    return from_rgb8(buf.data(), img.height, img.width);
}

}  // namespace

Tensor decode_ppm(const std::string& bytes)
{
    std::size_t pos = 0;
    auto skip_space = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto number = [&] {
        skip_space();
        std::size_t v = 0, digits = 0;
        while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
            v = v * 10 + static_cast<std::size_t>(bytes[pos++] - '0');
            if (++digits > 9) throw Error("ppm: header value too large");
        }
        if (digits == 0) throw Error("ppm: malformed header");
        return v;
    };
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') throw Error("ppm: not a binary P6 file");
    pos = 2;
    const auto w = number(), h = number(), maxval = number();
    if (w == 0 || h == 0) throw Error("ppm: zero extent");
    if (maxval == 0 || maxval > 255) throw Error("ppm: only 8-bit maxval is supported");
    if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) throw Error("ppm: malformed header");
    ++pos;
    if (bytes.size() - pos < w * h * 3) throw Error("ppm: truncated pixel data");
    Tensor t({h, w, 3});
    for (std::size_t i = 0; i < w * h * 3; ++i)
        t[i] = static_cast<Real>(static_cast<unsigned char>(bytes[pos + i])) / static_cast<Real>(maxval);
    return t;
}

Tensor load(const std::filesystem::path& path)
{
    const auto bytes = read_file(path);
    if (bytes.size() >= 8 && static_cast<unsigned char>(bytes[0]) == 0x89 && bytes.compare(1, 3, "PNG") == 0)
        return decode_png(bytes);
    if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') return decode_ppm(bytes);
    throw Error("unsupported image format: " + path.string());
}

void save_ppm(const std::filesystem::path& path, const Tensor& img)
{
    if (img.rank() != 3 || img.dim(2) != 3) throw ContractError("save_ppm: expected [H,W,3]");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write image: " + path.string());
    os << "P6\n" << img.dim(1) << ' ' << img.dim(0) << "\n255\n";
    for (Real v : img.data) os.put(static_cast<char>(to_byte(v)));
}

void save_png(const std::filesystem::path& path, const Tensor& img)
{
    if (img.rank() != 3 || img.dim(2) != 3) throw ContractError("save_png: expected [H,W,3]");
    std::vector<std::uint8_t> px(img.numel());
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = to_byte(img[i]);
    png_image out{};
    out.version = PNG_IMAGE_VERSION;
    out.width = static_cast<png_uint_32>(img.dim(1));
    out.height = static_cast<png_uint_32>(img.dim(0));
    out.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&out, path.string().c_str(), 0, px.data(), 0, nullptr))
        throw Error(std::string("png write: ") + out.message);
}

void save(const std::filesystem::path& path, const Tensor& img)
{
    if (path.extension() == ".png")
        save_png(path, img);
    else
        save_ppm(path, img);
}

Tensor center_crop_resize(const Tensor& img, std::size_t height, std::size_t width)
{
    if (img.rank() != 3) throw ContractError("center_crop_resize: expected [H,W,C]");
    const auto h = img.dim(0), w = img.dim(1), c = img.dim(2);
    if (height == 0 || width == 0 || h == 0 || w == 0) throw ContractError("center_crop_resize: zero extent");
    // Largest crop with the target aspect ratio.
    std::size_t ch = h, cw = w;
    if (h * width > w * height)
        ch = std::max<std::size_t>(1, w * height / width);
    else
        cw = std::max<std::size_t>(1, h * width / height);
    const auto top = (h - ch) / 2, left = (w - cw) / 2;
    Tensor out({height, width, c});
    for (std::size_t i = 0; i < height; ++i) {
        const auto si = top + i * ch / height;
        for (std::size_t j = 0; j < width; ++j) {
            const auto sj = left + j * cw / width;
            std::copy_n(img.data.data() + (si * w + sj) * c, c, out.data.data() + (i * width + j) * c);
        }
    }
    return out;
}

}  // namespace vqdisc::image
