#pragma once

// Checkpoint container: magic "VQDISC1\0", u32 array count, then per array
// u32 name length, UTF-8 name, u32 rank, u32 extents, f32 data. All
// integers and floats little-endian.

#include <filesystem>
#include <string>
#include <vector>

#include "vqdisc/tensor.hpp"

namespace vqdisc {

struct NamedArray {
    std::string name;
    Shape shape;
    std::vector<float> data;
};

std::string encode_checkpoint(const std::vector<NamedArray>& arrays);
std::vector<NamedArray> decode_checkpoint(const std::string& bytes);

void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedArray>& arrays);
std::vector<NamedArray> read_checkpoint(const std::filesystem::path& path);

const NamedArray& find_array(const std::vector<NamedArray>& arrays, const std::string& name);

NamedArray to_named_array(const std::string& name, const Tensor& t);
Tensor to_tensor(const NamedArray& a);

}  // namespace vqdisc
