#pragma once

#include <filesystem>

#include "endocss/image.hpp"

namespace endocss {

/// 8-bit RGB PNG -> float image in [0,1] (value/255).
Image read_image_png(const std::filesystem::path& path);

/// Writes round(value*255) as 8-bit RGB. Lossless for images that came from
/// read_image_png.
void write_image_png(const std::filesystem::path& path, const Image& image);

/// 8-bit grayscale PNG with raw label values.
Mask read_mask_png(const std::filesystem::path& path);
void write_mask_png(const std::filesystem::path& path, const Mask& mask);

}  // namespace endocss
