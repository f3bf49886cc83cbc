#pragma once

#include "endocss/rng.hpp"
#include "endocss/tensor.hpp"

namespace endocss {

/// 2-D convolution over NHWC tensors. Square kernel, zero padding of
/// (ksize-1)/2 so stride 1 preserves the spatial size and stride 2 halves it.
struct Conv2d {
  int in_ch = 0;
  int out_ch = 0;
  int ksize = 1;
  int stride = 1;
  Tensor w;  // {ksize, ksize, in_ch, out_ch}
  Tensor b;  // {out_ch}

  /// Kaiming-uniform weights, zero bias.
  static Conv2d make(int in_ch, int out_ch, int ksize, int stride, Rng& rng);

  Tensor forward(const Tensor& x) const;

  /// Accumulates parameter gradients into dw/db (shapes must match w/b) and
  /// returns the gradient w.r.t. x.
  Tensor backward(const Tensor& x, const Tensor& dy, Tensor& dw, Tensor& db) const;
};

Tensor relu(const Tensor& x);
/// Zeroes grad wherever the activation was clipped. `activated` is the relu
/// output (post > 0 iff pre > 0).
void relu_backward_inplace(const Tensor& activated, Tensor& grad);

/// Bilinear 2x upsampling, half-pixel centers (align_corners = false).
Tensor upsample2(const Tensor& x);
/// Adjoint of upsample2; dy has shape {B, 2H, 2W, C}.
Tensor upsample2_backward(const Tensor& dy);

Tensor concat_channels(const Tensor& a, const Tensor& b);
void split_channels_grad(const Tensor& d, long channels_a, Tensor& da, Tensor& db);

}  // namespace endocss
