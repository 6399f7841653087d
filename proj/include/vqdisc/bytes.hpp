#pragma once

// Little-endian byte helpers shared by the checkpoint and frame formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>

#include "vqdisc/tensor.hpp"

namespace vqdisc::bytes {

template <typename U>
void put_le(std::string& out, U v)
{
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_u8(std::string& out, std::uint8_t v) { out.push_back(static_cast<char>(v)); }
inline void put_u32(std::string& out, std::uint32_t v) { put_le(out, v); }
inline void put_u64(std::string& out, std::uint64_t v) { put_le(out, v); }
inline void put_f32(std::string& out, float v) { put_le(out, std::bit_cast<std::uint32_t>(v)); }

class Reader {
public:
    Reader(const std::string& buf, const char* what) : buf_(buf), what_(what) {}

    void skip(std::size_t n)
    {
        need(n);
        pos_ += n;
    }
    std::uint8_t u8()
    {
        need(1);
        return static_cast<std::uint8_t>(buf_[pos_++]);
    }
    std::uint32_t u32() { return le<std::uint32_t>(); }
    std::uint64_t u64() { return le<std::uint64_t>(); }
    float f32() { return std::bit_cast<float>(le<std::uint32_t>()); }
    std::string str(std::size_t n)
    {
        need(n);
        std::string s = buf_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::size_t remaining() const { return buf_.size() - pos_; }
    bool done() const { return pos_ == buf_.size(); }

private:
    template <typename U>
    U le()
    {
        need(sizeof(U));
        U v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i)
            v |= static_cast<U>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
        pos_ += sizeof(U);
        return v;
    }
    void need(std::size_t n) const
    {
        if (buf_.size() - pos_ < n) throw FramingError(std::string(what_) + ": truncated input");
    }

    const std::string& buf_;
    const char* what_;
    std::size_t pos_ = 0;
};

}  // namespace vqdisc::bytes
