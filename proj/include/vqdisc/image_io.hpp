#pragma once

#include <filesystem>
#include <string>

#include "vqdisc/tensor.hpp"

namespace vqdisc::image {

// Decodes PNG or binary PPM (P6, maxval <= 255) into [H, W, 3] in [0,1].
Tensor load(const std::filesystem::path& path);
Tensor decode_ppm(const std::string& bytes);

void save_ppm(const std::filesystem::path& path, const Tensor& img);
void save_png(const std::filesystem::path& path, const Tensor& img);
// Chooses the format from the extension (.png, otherwise PPM).
void save(const std::filesystem::path& path, const Tensor& img);

// Center-crops to the target aspect ratio, then nearest-neighbour resizes.
Tensor center_crop_resize(const Tensor& img, std::size_t height, std::size_t width);

}  // namespace vqdisc::image
