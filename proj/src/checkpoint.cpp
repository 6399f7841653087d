#include "vqdisc/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "vqdisc/bytes.hpp"

namespace vqdisc {

namespace {

constexpr char kMagic[8] = {'V', 'Q', 'D', 'I', 'S', 'C', '1', '\0'};

}  // namespace

std::string encode_checkpoint(const std::vector<NamedArray>& arrays)
{
    std::string out(kMagic, sizeof(kMagic));
    bytes::put_u32(out, static_cast<std::uint32_t>(arrays.size()));
    for (const auto& a : arrays) {
        if (a.data.size() != shape_numel(a.shape))
            throw ContractError("checkpoint: array '" + a.name + "' data does not match its shape");
        bytes::put_u32(out, static_cast<std::uint32_t>(a.name.size()));
        out += a.name;
        bytes::put_u32(out, static_cast<std::uint32_t>(a.shape.size()));
        for (auto e : a.shape) bytes::put_u32(out, static_cast<std::uint32_t>(e));
        for (float v : a.data) bytes::put_f32(out, v);
    }
    return out;
}

std::vector<NamedArray> decode_checkpoint(const std::string& bytes)
{
    bytes::Reader in(bytes, "checkpoint");
    if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
        throw FramingError("checkpoint: bad magic");
    in.skip(sizeof(kMagic));
    const auto count = in.u32();
    std::vector<NamedArray> arrays;
    arrays.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        NamedArray a;
        a.name = in.str(in.u32());
        const auto rank = in.u32();
        for (std::uint32_t r = 0; r < rank; ++r) a.shape.push_back(in.u32());
        const auto n = shape_numel(a.shape);
        a.data.resize(n);
        for (auto& v : a.data) v = in.f32();
        arrays.push_back(std::move(a));
    }
    if (!in.done()) throw FramingError("checkpoint: trailing bytes");
    return arrays;
}

void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedArray>& arrays)
{
    const auto bytes = encode_checkpoint(arrays);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write checkpoint: " + path.string());
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw Error("short write on checkpoint: " + path.string());
}

std::vector<NamedArray> read_checkpoint(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open checkpoint: " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

const NamedArray& find_array(const std::vector<NamedArray>& arrays, const std::string& name)
{
    for (const auto& a : arrays)
        if (a.name == name) return a;
    throw FramingError("checkpoint: missing array '" + name + "'");
}

NamedArray to_named_array(const std::string& name, const Tensor& t)
{
    NamedArray a{name, t.shape, {}};
    a.data.reserve(t.numel());
    for (Real v : t.data) a.data.push_back(static_cast<float>(v));
    return a;
}

Tensor to_tensor(const NamedArray& a)
{
    Tensor t(a.shape);
    for (std::size_t i = 0; i < a.data.size(); ++i) t[i] = static_cast<Real>(a.data[i]);
    return t;
}

}  // namespace vqdisc
