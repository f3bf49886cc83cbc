#include "endocss/nn.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "endocss/error.hpp"

namespace endocss {
namespace {

using MatrixRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatrixRM>;
using ConstMapRM = Eigen::Map<const MatrixRM>;

long out_size(long in, int ksize, int stride) {
  const int pad = (ksize - 1) / 2;
  return (in + 2 * pad - ksize) / stride + 1;
}

// Unrolls conv patches into a {B*OH*OW, k*k*Cin} row-major matrix. The NHWC
// layout makes each (ky,kx) slab a contiguous memcpy when fully inside the
// image.
void im2col(const Tensor& x, int ksize, int stride, Tensor& col) {
  const long batch = x.dim(0), in_h = x.dim(1), in_w = x.dim(2), ch = x.dim(3);
  const int pad = (ksize - 1) / 2;
  const long oh = out_size(in_h, ksize, stride);
  const long ow = out_size(in_w, ksize, stride);
  const long patch = static_cast<long>(ksize) * ksize * ch;

  float* dst = col.data();
  for (long b = 0; b < batch; ++b) {
    const float* img = x.data() + b * in_h * in_w * ch;
    for (long oy = 0; oy < oh; ++oy) {
      for (long ox = 0; ox < ow; ++ox) {
        float* row = dst + ((b * oh + oy) * ow + ox) * patch;
        for (int ky = 0; ky < ksize; ++ky) {
          const long iy = oy * stride - pad + ky;
          for (int kx = 0; kx < ksize; ++kx) {
            const long ix = ox * stride - pad + kx;
            float* cell = row + (static_cast<long>(ky) * ksize + kx) * ch;
            if (iy < 0 || iy >= in_h || ix < 0 || ix >= in_w) {
              std::memset(cell, 0, static_cast<std::size_t>(ch) * sizeof(float));
            } else {
              std::memcpy(cell, img + (iy * in_w + ix) * ch,
                          static_cast<std::size_t>(ch) * sizeof(float));
            }
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-adds column gradients back into image layout.
void col2im(const Tensor& col, int ksize, int stride, Tensor& dx) {
  const long batch = dx.dim(0), in_h = dx.dim(1), in_w = dx.dim(2), ch = dx.dim(3);
  const int pad = (ksize - 1) / 2;
  const long oh = out_size(in_h, ksize, stride);
  const long ow = out_size(in_w, ksize, stride);
  const long patch = static_cast<long>(ksize) * ksize * ch;

  const float* src = col.data();
  for (long b = 0; b < batch; ++b) {
    float* img = dx.data() + b * in_h * in_w * ch;
    for (long oy = 0; oy < oh; ++oy) {
      for (long ox = 0; ox < ow; ++ox) {
        const float* row = src + ((b * oh + oy) * ow + ox) * patch;
        for (int ky = 0; ky < ksize; ++ky) {
          const long iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= in_h) continue;
          for (int kx = 0; kx < ksize; ++kx) {
            const long ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= in_w) continue;
            const float* cell = row + (static_cast<long>(ky) * ksize + kx) * ch;
            float* out = img + (iy * in_w + ix) * ch;
            for (long c = 0; c < ch; ++c) out[c] += cell[c];
          }
        }
      }
    }
  }
}

}  // namespace

Conv2d Conv2d::make(int in_ch, int out_ch, int ksize, int stride, Rng& rng) {
  Conv2d conv;
  conv.in_ch = in_ch;
  conv.out_ch = out_ch;
  conv.ksize = ksize;
  conv.stride = stride;
  conv.w = Tensor({ksize, ksize, in_ch, out_ch});
  conv.b = Tensor({out_ch});
  const double fan_in = static_cast<double>(ksize) * ksize * in_ch;
  const double bound = std::sqrt(6.0 / fan_in);
  for (long i = 0; i < conv.w.numel(); ++i)
    conv.w[i] = static_cast<float>(rng.uniform(-bound, bound));
  return conv;
}

Tensor Conv2d::forward(const Tensor& x) const {
  require(x.rank() == 4 && x.dim(3) == in_ch, "conv input must be {B,H,W,", in_ch,
          "}, got channel dim ", x.rank() == 4 ? x.dim(3) : -1);
  const long batch = x.dim(0);
  const long oh = out_size(x.dim(1), ksize, stride);
  const long ow = out_size(x.dim(2), ksize, stride);
  const long rows = batch * oh * ow;
  const long patch = static_cast<long>(ksize) * ksize * in_ch;

  Tensor y({batch, oh, ow, out_ch});
  MapRM ym(y.data(), rows, out_ch);
  ConstMapRM wm(w.data(), patch, out_ch);

  if (ksize == 1 && stride == 1) {
    // Sequential per-channel reduction: each output channel's sum order
    // depends only on in_ch, so growing out_ch never perturbs old channels.
    for (long r = 0; r < rows; ++r) {
      const float* in = x.data() + r * in_ch;
      float* out = y.data() + r * out_ch;
      for (int c = 0; c < out_ch; ++c) {
        float acc = 0.0f;
        for (int i = 0; i < in_ch; ++i) acc += in[i] * w[static_cast<long>(i) * out_ch + c];
        out[c] = acc;
      }
    }
  } else {
    Tensor col({rows, patch});
    im2col(x, ksize, stride, col);
    ConstMapRM cm(col.data(), rows, patch);
    ym.noalias() = cm * wm;
  }
  for (long r = 0; r < rows; ++r) {
    float* row = y.data() + r * out_ch;
    for (int c = 0; c < out_ch; ++c) row[c] += b[c];
  }
  return y;
}

Tensor Conv2d::backward(const Tensor& x, const Tensor& dy, Tensor& dw, Tensor& db) const {
  const long batch = x.dim(0);
  const long oh = dy.dim(1), ow = dy.dim(2);
  const long rows = batch * oh * ow;
  const long patch = static_cast<long>(ksize) * ksize * in_ch;
  require(dw.same_shape(w) && db.same_shape(b), "gradient buffers not sized for this conv");

  ConstMapRM dym(dy.data(), rows, out_ch);
  MapRM dwm(dw.data(), patch, out_ch);
  ConstMapRM wm(w.data(), patch, out_ch);

  for (long r = 0; r < rows; ++r) {
    const float* row = dy.data() + r * out_ch;
    for (int c = 0; c < out_ch; ++c) db[c] += row[c];
  }

  Tensor dx(x.shape());
  if (ksize == 1 && stride == 1) {
    ConstMapRM xm(x.data(), rows, in_ch);
    dwm.noalias() += xm.transpose() * dym;
    MapRM dxm(dx.data(), rows, in_ch);
    dxm.noalias() = dym * wm.transpose();
  } else {
    Tensor col({rows, patch});
    im2col(x, ksize, stride, col);
    ConstMapRM cm(col.data(), rows, patch);
    dwm.noalias() += cm.transpose() * dym;

    Tensor dcol({rows, patch});
    MapRM dcm(dcol.data(), rows, patch);
    dcm.noalias() = dym * wm.transpose();
    col2im(dcol, ksize, stride, dx);
  }
  return dx;
}

Tensor relu(const Tensor& x) {
  Tensor y = x;
  for (long i = 0; i < y.numel(); ++i)
    if (y[i] < 0.0f) y[i] = 0.0f;
  return y;
}

void relu_backward_inplace(const Tensor& activated, Tensor& grad) {
  require(activated.same_shape(grad), "relu backward shape mismatch");
  for (long i = 0; i < grad.numel(); ++i)
    if (activated[i] <= 0.0f) grad[i] = 0.0f;
}

Tensor upsample2(const Tensor& x) {
  const long batch = x.dim(0), in_h = x.dim(1), in_w = x.dim(2), ch = x.dim(3);
  const long oh = in_h * 2, ow = in_w * 2;
  Tensor y({batch, oh, ow, ch});
  for (long b = 0; b < batch; ++b) {
    for (long oy = 0; oy < oh; ++oy) {
      const double fy = (static_cast<double>(oy) + 0.5) / 2.0 - 0.5;
      const long y0 = std::max<long>(0, static_cast<long>(std::floor(fy)));
      const long y1 = std::min(y0 + 1, in_h - 1);
      const float wy = static_cast<float>(std::clamp(fy - std::floor(fy), 0.0, 1.0) * (fy >= 0.0 ? 1.0 : 0.0));
      for (long ox = 0; ox < ow; ++ox) {
        const double fx = (static_cast<double>(ox) + 0.5) / 2.0 - 0.5;
        const long x0 = std::max<long>(0, static_cast<long>(std::floor(fx)));
        const long x1 = std::min(x0 + 1, in_w - 1);
        const float wx = static_cast<float>(std::clamp(fx - std::floor(fx), 0.0, 1.0) * (fx >= 0.0 ? 1.0 : 0.0));
        const float* p00 = x.data() + ((b * in_h + y0) * in_w + x0) * ch;
        const float* p01 = x.data() + ((b * in_h + y0) * in_w + x1) * ch;
        const float* p10 = x.data() + ((b * in_h + y1) * in_w + x0) * ch;
        const float* p11 = x.data() + ((b * in_h + y1) * in_w + x1) * ch;
        float* out = y.data() + ((b * oh + oy) * ow + ox) * ch;
        for (long c = 0; c < ch; ++c) {
          const float top = p00[c] * (1.0f - wx) + p01[c] * wx;
          const float bot = p10[c] * (1.0f - wx) + p11[c] * wx;
          out[c] = top * (1.0f - wy) + bot * wy;
        }
      }
    }
  }
  return y;
}

Tensor upsample2_backward(const Tensor& dy) {
  const long batch = dy.dim(0), oh = dy.dim(1), ow = dy.dim(2), ch = dy.dim(3);
  const long in_h = oh / 2, in_w = ow / 2;
  Tensor dx({batch, in_h, in_w, ch});
  for (long b = 0; b < batch; ++b) {
    for (long oy = 0; oy < oh; ++oy) {
      const double fy = (static_cast<double>(oy) + 0.5) / 2.0 - 0.5;
      const long y0 = std::max<long>(0, static_cast<long>(std::floor(fy)));
      const long y1 = std::min(y0 + 1, in_h - 1);
      const float wy = static_cast<float>(std::clamp(fy - std::floor(fy), 0.0, 1.0) * (fy >= 0.0 ? 1.0 : 0.0));
      for (long ox = 0; ox < ow; ++ox) {
        const double fx = (static_cast<double>(ox) + 0.5) / 2.0 - 0.5;
        const long x0 = std::max<long>(0, static_cast<long>(std::floor(fx)));
        const long x1 = std::min(x0 + 1, in_w - 1);
        const float wx = static_cast<float>(std::clamp(fx - std::floor(fx), 0.0, 1.0) * (fx >= 0.0 ? 1.0 : 0.0));
        const float* g = dy.data() + ((b * oh + oy) * ow + ox) * ch;
        float* d00 = dx.data() + ((b * in_h + y0) * in_w + x0) * ch;
        float* d01 = dx.data() + ((b * in_h + y0) * in_w + x1) * ch;
        float* d10 = dx.data() + ((b * in_h + y1) * in_w + x0) * ch;
        float* d11 = dx.data() + ((b * in_h + y1) * in_w + x1) * ch;
        for (long c = 0; c < ch; ++c) {
          d00[c] += g[c] * (1.0f - wy) * (1.0f - wx);
          d01[c] += g[c] * (1.0f - wy) * wx;
          d10[c] += g[c] * wy * (1.0f - wx);
          d11[c] += g[c] * wy * wx;
        }
      }
    }
  }
  return dx;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require(a.dim(0) == b.dim(0) && a.dim(1) == b.dim(1) && a.dim(2) == b.dim(2),
          "concat operands must share B,H,W");
  const long batch = a.dim(0), h = a.dim(1), w = a.dim(2);
  const long ca = a.dim(3), cb = b.dim(3);
  Tensor out({batch, h, w, ca + cb});
  const long pixels = batch * h * w;
  for (long p = 0; p < pixels; ++p) {
    std::memcpy(out.data() + p * (ca + cb), a.data() + p * ca,
                static_cast<std::size_t>(ca) * sizeof(float));
    std::memcpy(out.data() + p * (ca + cb) + ca, b.data() + p * cb,
                static_cast<std::size_t>(cb) * sizeof(float));
  }
  return out;
}

void split_channels_grad(const Tensor& d, long channels_a, Tensor& da, Tensor& db) {
  const long batch = d.dim(0), h = d.dim(1), w = d.dim(2), ct = d.dim(3);
  const long cb = ct - channels_a;
  da = Tensor({batch, h, w, channels_a});
  db = Tensor({batch, h, w, cb});
  const long pixels = batch * h * w;
  for (long p = 0; p < pixels; ++p) {
    std::memcpy(da.data() + p * channels_a, d.data() + p * ct,
                static_cast<std::size_t>(channels_a) * sizeof(float));
    std::memcpy(db.data() + p * cb, d.data() + p * ct + channels_a,
                static_cast<std::size_t>(cb) * sizeof(float));
  }
}

}  // namespace endocss
