#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "endocss/nn.hpp"
#include "endocss/rng.hpp"
#include "endocss/tensor.hpp"

namespace endocss {

enum class HeadInit { kUniform, kZeros };

struct ModelConfig {
  std::vector<int> widths = {16, 32, 64, 128};
  int n_classes = 2;
  int in_ch = 3;
  HeadInit head_init = HeadInit::kUniform;
};

/// Activations cached by the training forward pass, consumed by backward().
struct ForwardTrace {
  Tensor input;
  std::array<Tensor, 4> enc_act;  // encoder outputs, post-relu, H/2 .. H/16
  std::array<Tensor, 3> dec_in;   // concatenated decoder inputs, H/8 .. H/2
  std::array<Tensor, 3> dec_act;  // decoder outputs, post-relu
  Tensor head_in;                 // full-resolution features entering the head
  Tensor logits;
};

/// Small encoder/decoder segmentation net over NHWC float tensors.
///
/// Four stride-2 3x3 conv stages halve the resolution each; the decoder
/// mirrors them with bilinear 2x upsampling, skip concatenation and a 3x3
/// conv, and a final 1x1 head produces per-class logits at input resolution.
/// Input height and width must be divisible by 16.
class SegModel {
 public:
  static SegModel create(const ModelConfig& config, Rng& rng);

  Tensor forward(const Tensor& images) const;
  Tensor forward(const Tensor& images, ForwardTrace& trace) const;

  /// Accumulates parameter gradients (aligned with parameter_names()) and
  /// returns the gradient w.r.t. the input images.
  Tensor backward(const ForwardTrace& trace, const Tensor& dlogits,
                  std::vector<Tensor>& grads) const;

  /// Grows the head to `new_n_classes` outputs. Existing class logits are
  /// reproduced bit-exactly; the added outputs have zero weights and bias.
  void expand_head(int new_n_classes);

  std::vector<Tensor> zero_grads() const;
  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  std::vector<std::string> parameter_names() const;
  long parameter_count() const;

  const ModelConfig& config() const { return config_; }
  int n_classes() const { return config_.n_classes; }

 private:
  ModelConfig config_;
  std::array<Conv2d, 4> enc_;
  std::array<Conv2d, 3> dec_;
  Conv2d head_;
};

Tensor forward_logits(const SegModel& model, const Tensor& images);
/// Softmax over the class dimension, computed in double and rounded back.
Tensor predict_probs(const SegModel& model, const Tensor& images);
TensorI argmax_labels(const Tensor& logits);

struct CheckpointMeta {
  int step = 0;
  std::vector<std::string> class_names;
  std::string config_digest;
  std::string note;
};

void save_checkpoint(const SegModel& model, const std::filesystem::path& path,
                     const CheckpointMeta& meta);
/// Rebuilds the model stored at `path`. When `meta` is non-null it receives
/// the stored metadata.
SegModel load_checkpoint(const std::filesystem::path& path, CheckpointMeta* meta = nullptr);

}  // namespace endocss
