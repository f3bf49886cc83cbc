#pragma once

#include <cstdint>
#include <vector>

#include "endocss/tensor.hpp"

namespace endocss {

/// RGB image, interleaved row-major, values in [0,1].
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> px;  // height*width*3

  Image() = default;
  Image(int h, int w) : height(h), width(w), px(static_cast<std::size_t>(h) * w * 3, 0.f) {}

  float& at(int y, int x, int c) { return px[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  float at(int y, int x, int c) const { return px[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  long numel() const { return static_cast<long>(px.size()); }
};

/// Single-channel integer label mask. Values are class ids or ignore_index.
struct Mask {
  int height = 0;
  int width = 0;
  std::vector<std::int32_t> v;  // height*width

  Mask() = default;
  Mask(int h, int w, std::int32_t value = 0)
      : height(h), width(w), v(static_cast<std::size_t>(h) * w, value) {}

  std::int32_t& at(int y, int x) { return v[static_cast<std::size_t>(y) * width + x]; }
  std::int32_t at(int y, int x) const { return v[static_cast<std::size_t>(y) * width + x]; }
  long numel() const { return static_cast<long>(v.size()); }
};

Image resize_bilinear(const Image& in, int out_h, int out_w);
Mask resize_nearest(const Mask& in, int out_h, int out_w);
Image hflip(const Image& in);
Mask hflip(const Mask& in);
Image crop(const Image& in, int y0, int x0, int h, int w);
Mask crop(const Mask& in, int y0, int x0, int h, int w);

/// h in [0,360), s and v in [0,1].
void rgb_to_hsv(float r, float g, float b, float& h, float& s, float& v);
void hsv_to_rgb(float h, float s, float v, float& r, float& g, float& b);

/// Stack equally sized images/masks into {B,H,W,3} / {B,H,W} tensors.
Tensor to_tensor(const std::vector<const Image*>& images);
TensorI to_tensor(const std::vector<const Mask*>& masks);
Image to_image(const Tensor& batch, long index);
Mask to_mask(const TensorI& batch, long index);

inline float clamp01(float v) { return v < 0.f ? 0.f : (v > 1.f ? 1.f : v); }

}  // namespace endocss
