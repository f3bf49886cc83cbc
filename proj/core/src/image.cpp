#include "endocss/image.hpp"

#include <algorithm>
#include <cmath>

#include "endocss/error.hpp"

namespace endocss {

Image resize_bilinear(const Image& in, int out_h, int out_w) {
  require(out_h >= 1 && out_w >= 1, "resize target must be positive");
  Image out(out_h, out_w);
  const float sy = static_cast<float>(in.height) / static_cast<float>(out_h);
  const float sx = static_cast<float>(in.width) / static_cast<float>(out_w);
  for (int y = 0; y < out_h; ++y) {
    const float fy = (static_cast<float>(y) + 0.5f) * sy - 0.5f;
    const int y0 = std::clamp(static_cast<int>(std::floor(fy)), 0, in.height - 1);
    const int y1 = std::min(y0 + 1, in.height - 1);
    const float wy = std::clamp(fy - static_cast<float>(y0), 0.0f, 1.0f);
    for (int x = 0; x < out_w; ++x) {
      const float fx = (static_cast<float>(x) + 0.5f) * sx - 0.5f;
      const int x0 = std::clamp(static_cast<int>(std::floor(fx)), 0, in.width - 1);
      const int x1 = std::min(x0 + 1, in.width - 1);
      const float wx = std::clamp(fx - static_cast<float>(x0), 0.0f, 1.0f);
      for (int c = 0; c < 3; ++c) {
        const float top = in.at(y0, x0, c) * (1.0f - wx) + in.at(y0, x1, c) * wx;
        const float bot = in.at(y1, x0, c) * (1.0f - wx) + in.at(y1, x1, c) * wx;
        out.at(y, x, c) = top * (1.0f - wy) + bot * wy;
      }
    }
  }
  return out;
}

Mask resize_nearest(const Mask& in, int out_h, int out_w) {
  require(out_h >= 1 && out_w >= 1, "resize target must be positive");
  Mask out(out_h, out_w);
  const float sy = static_cast<float>(in.height) / static_cast<float>(out_h);
  const float sx = static_cast<float>(in.width) / static_cast<float>(out_w);
  for (int y = 0; y < out_h; ++y) {
    const int yin = std::min(static_cast<int>((static_cast<float>(y) + 0.5f) * sy), in.height - 1);
    for (int x = 0; x < out_w; ++x) {
      const int xin = std::min(static_cast<int>((static_cast<float>(x) + 0.5f) * sx), in.width - 1);
      out.at(y, x) = in.at(yin, xin);
    }
  }
  return out;
}

Image hflip(const Image& in) {
  Image out(in.height, in.width);
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x)
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = in.at(y, in.width - 1 - x, c);
  return out;
}

Mask hflip(const Mask& in) {
  Mask out(in.height, in.width);
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x) out.at(y, x) = in.at(y, in.width - 1 - x);
  return out;
}

Image crop(const Image& in, int y0, int x0, int h, int w) {
  require(y0 >= 0 && x0 >= 0 && y0 + h <= in.height && x0 + w <= in.width,
          "crop window out of bounds");
  Image out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = in.at(y0 + y, x0 + x, c);
  return out;
}

Mask crop(const Mask& in, int y0, int x0, int h, int w) {
  require(y0 >= 0 && x0 >= 0 && y0 + h <= in.height && x0 + w <= in.width,
          "crop window out of bounds");
  Mask out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out.at(y, x) = in.at(y0 + y, x0 + x);
  return out;
}

void rgb_to_hsv(float r, float g, float b, float& h, float& s, float& v) {
  const float mx = std::max({r, g, b});
  const float mn = std::min({r, g, b});
  const float d = mx - mn;
  v = mx;
  s = mx > 0.f ? d / mx : 0.f;
  if (d <= 0.f) {
    h = 0.f;
    return;
  }
  if (mx == r)
    h = 60.f * std::fmod((g - b) / d + 6.f, 6.f);
  else if (mx == g)
    h = 60.f * ((b - r) / d + 2.f);
  else
    h = 60.f * ((r - g) / d + 4.f);
}

void hsv_to_rgb(float h, float s, float v, float& r, float& g, float& b) {
  const float c = v * s;
  const float hp = h / 60.f;
  const float x = c * (1.f - std::abs(std::fmod(hp, 2.f) - 1.f));
  r = g = b = 0.f;
  if (hp < 1.f) {
    r = c;
    g = x;
  } else if (hp < 2.f) {
    r = x;
    g = c;
  } else if (hp < 3.f) {
    g = c;
    b = x;
  } else if (hp < 4.f) {
    g = x;
    b = c;
  } else if (hp < 5.f) {
    r = x;
    b = c;
  } else {
    r = c;
    b = x;
  }
  const float m = v - c;
  r += m;
  g += m;
  b += m;
}

Tensor to_tensor(const std::vector<const Image*>& images) {
  require(!images.empty(), "cannot stack an empty image list");
  const int h = images[0]->height, w = images[0]->width;
  Tensor out({static_cast<long>(images.size()), h, w, 3});
  for (std::size_t b = 0; b < images.size(); ++b) {
    require(images[b]->height == h && images[b]->width == w,
            "stacked images must share one size; item ", b, " is ", images[b]->width, "x",
            images[b]->height, " not ", w, "x", h);
    std::copy(images[b]->px.begin(), images[b]->px.end(),
              out.data() + static_cast<long>(b) * h * w * 3);
  }
  return out;
}

TensorI to_tensor(const std::vector<const Mask*>& masks) {
  require(!masks.empty(), "cannot stack an empty mask list");
  const int h = masks[0]->height, w = masks[0]->width;
  TensorI out({static_cast<long>(masks.size()), h, w});
  for (std::size_t b = 0; b < masks.size(); ++b) {
    require(masks[b]->height == h && masks[b]->width == w,
            "stacked masks must share one size; item ", b, " is ", masks[b]->width, "x",
            masks[b]->height, " not ", w, "x", h);
    std::copy(masks[b]->v.begin(), masks[b]->v.end(),
              out.data() + static_cast<long>(b) * h * w);
  }
  return out;
}

Image to_image(const Tensor& batch, long index) {
  require(batch.rank() == 4 && batch.dim(3) == 3, "expected {B,H,W,3} image tensor");
  require(index >= 0 && index < batch.dim(0), "image index ", index, " out of range");
  Image out(static_cast<int>(batch.dim(1)), static_cast<int>(batch.dim(2)));
  const float* src = batch.data() + index * out.numel();
  std::copy(src, src + out.numel(), out.px.begin());
  return out;
}

Mask to_mask(const TensorI& batch, long index) {
  require(batch.rank() == 3, "expected {B,H,W} mask tensor");
  require(index >= 0 && index < batch.dim(0), "mask index ", index, " out of range");
  Mask out(static_cast<int>(batch.dim(1)), static_cast<int>(batch.dim(2)));
  const std::int32_t* src = batch.data() + index * out.numel();
  std::copy(src, src + out.numel(), out.v.begin());
  return out;
}

}  // namespace endocss
