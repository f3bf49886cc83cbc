#include "endocss/segmodel.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <utility>

#include <nlohmann/json.hpp>

#include "endocss/error.hpp"

namespace endocss {
namespace {

constexpr char kCheckpointMagic[8] = {'E', 'N', 'D', 'O', 'C', 'S', 'S', '1'};

}  // namespace

SegModel SegModel::create(const ModelConfig& config, Rng& rng) {
  require(config.widths.size() == 4, "model widths must list 4 stages, got ",
          config.widths.size());
  for (const int w : config.widths) require(w > 0, "model width must be positive, got ", w);
  require(config.n_classes >= 2, "model needs at least 2 classes, got ", config.n_classes);
  require(config.in_ch >= 1, "model needs at least 1 input channel, got ", config.in_ch);

  SegModel m;
  m.config_ = config;
  const auto& w = config.widths;
  m.enc_[0] = Conv2d::make(config.in_ch, w[0], 3, 2, rng);
  m.enc_[1] = Conv2d::make(w[0], w[1], 3, 2, rng);
  m.enc_[2] = Conv2d::make(w[1], w[2], 3, 2, rng);
  m.enc_[3] = Conv2d::make(w[2], w[3], 3, 2, rng);
  m.dec_[0] = Conv2d::make(w[3] + w[2], w[2], 3, 1, rng);
  m.dec_[1] = Conv2d::make(w[2] + w[1], w[1], 3, 1, rng);
  m.dec_[2] = Conv2d::make(w[1] + w[0], w[0], 3, 1, rng);
  m.head_ = Conv2d::make(w[0], config.n_classes, 1, 1, rng);
  if (config.head_init == HeadInit::kZeros) {
    m.head_.w.fill(0.0f);
    m.head_.b.fill(0.0f);
  }
  return m;
}

Tensor SegModel::forward(const Tensor& images) const {
  ForwardTrace trace;
  forward(images, trace);
  return std::move(trace.logits);
}

Tensor SegModel::forward(const Tensor& images, ForwardTrace& trace) const {
  require(images.rank() == 4 && images.dim(3) == config_.in_ch,
          "model expects {B,H,W,", config_.in_ch, "} input");
  require(images.dim(1) % 16 == 0 && images.dim(2) % 16 == 0,
          "input height and width must be divisible by 16, got ", images.dim(1), "x",
          images.dim(2));

  trace.input = images;
  const Tensor* prev = &trace.input;
  for (int i = 0; i < 4; ++i) {
    trace.enc_act[i] = relu(enc_[i].forward(*prev));
    prev = &trace.enc_act[i];
  }
  const Tensor* deep = &trace.enc_act[3];
  for (int i = 0; i < 3; ++i) {
    trace.dec_in[i] = concat_channels(upsample2(*deep), trace.enc_act[2 - i]);
    trace.dec_act[i] = relu(dec_[i].forward(trace.dec_in[i]));
    deep = &trace.dec_act[i];
  }
  trace.head_in = upsample2(trace.dec_act[2]);
  trace.logits = head_.forward(trace.head_in);
  return trace.logits;
}

Tensor SegModel::backward(const ForwardTrace& trace, const Tensor& dlogits,
                          std::vector<Tensor>& grads) const {
  require(grads.size() == 16, "expected 16 gradient buffers, got ", grads.size());
  auto gw = [&](int slot) -> Tensor& { return grads[2 * static_cast<std::size_t>(slot)]; };
  auto gb = [&](int slot) -> Tensor& { return grads[2 * static_cast<std::size_t>(slot) + 1]; };

  Tensor d = upsample2_backward(head_.backward(trace.head_in, dlogits, gw(7), gb(7)));
  std::array<Tensor, 3> skip;  // gradient flowing into enc_act[0..2] via concat
  for (int i = 2; i >= 0; --i) {
    relu_backward_inplace(trace.dec_act[i], d);
    Tensor dk = dec_[i].backward(trace.dec_in[i], d, gw(4 + i), gb(4 + i));
    const long deep_ch = trace.dec_in[i].dim(3) - trace.enc_act[2 - i].dim(3);
    Tensor dup;
    split_channels_grad(dk, deep_ch, dup, skip[2 - i]);
    d = upsample2_backward(dup);
  }
  for (int i = 3; i >= 0; --i) {
    relu_backward_inplace(trace.enc_act[i], d);
    const Tensor& in = (i == 0) ? trace.input : trace.enc_act[i - 1];
    Tensor dprev = enc_[i].backward(in, d, gw(i), gb(i));
    if (i >= 1) {
      const Tensor& s = skip[i - 1];
      for (long j = 0; j < dprev.numel(); ++j) dprev[j] += s[j];
    }
    d = std::move(dprev);
  }
  return d;
}

void SegModel::expand_head(int new_n_classes) {
  const int old_c = config_.n_classes;
  require(new_n_classes > old_c, "expand_head needs more than the current ", old_c,
          " classes, got ", new_n_classes);
  Conv2d grown;
  grown.in_ch = head_.in_ch;
  grown.out_ch = new_n_classes;
  grown.ksize = 1;
  grown.stride = 1;
  grown.w = Tensor({1, 1, head_.in_ch, new_n_classes});
  grown.b = Tensor({new_n_classes});
  for (int i = 0; i < head_.in_ch; ++i)
    for (int c = 0; c < old_c; ++c)
      grown.w[static_cast<long>(i) * new_n_classes + c] = head_.w[static_cast<long>(i) * old_c + c];
  for (int c = 0; c < old_c; ++c) grown.b[c] = head_.b[c];
  head_ = std::move(grown);
  config_.n_classes = new_n_classes;
}

std::vector<Tensor> SegModel::zero_grads() const {
  std::vector<Tensor> grads;
  for (const Tensor* p : parameters()) grads.emplace_back(p->shape());
  return grads;
}

std::vector<Tensor*> SegModel::parameters() {
  std::vector<Tensor*> out;
  for (auto& c : enc_) {
    out.push_back(&c.w);
    out.push_back(&c.b);
  }
  for (auto& c : dec_) {
    out.push_back(&c.w);
    out.push_back(&c.b);
  }
  out.push_back(&head_.w);
  out.push_back(&head_.b);
  return out;
}

std::vector<const Tensor*> SegModel::parameters() const {
  std::vector<const Tensor*> out;
  for (const auto& c : enc_) {
    out.push_back(&c.w);
    out.push_back(&c.b);
  }
  for (const auto& c : dec_) {
    out.push_back(&c.w);
    out.push_back(&c.b);
  }
  out.push_back(&head_.w);
  out.push_back(&head_.b);
  return out;
}

std::vector<std::string> SegModel::parameter_names() const {
  std::vector<std::string> names;
  for (int i = 0; i < 4; ++i) {
    names.push_back(msg("enc", i, ".w"));
    names.push_back(msg("enc", i, ".b"));
  }
  for (int i = 0; i < 3; ++i) {
    names.push_back(msg("dec", i, ".w"));
    names.push_back(msg("dec", i, ".b"));
  }
  names.push_back("head.w");
  names.push_back("head.b");
  return names;
}

long SegModel::parameter_count() const {
  long n = 0;
  for (const Tensor* p : parameters()) n += p->numel();
  return n;
}

Tensor forward_logits(const SegModel& model, const Tensor& images) {
  return model.forward(images);
}

Tensor predict_probs(const SegModel& model, const Tensor& images) {
  Tensor logits = model.forward(images);
  const long pixels = logits.dim(0) * logits.dim(1) * logits.dim(2);
  const long n_cls = logits.dim(3);
  Tensor probs(logits.shape());
  std::vector<double> e(static_cast<std::size_t>(n_cls));
  for (long p = 0; p < pixels; ++p) {
    const float* row = logits.data() + p * n_cls;
    double mx = row[0];
    for (long c = 1; c < n_cls; ++c) mx = std::max<double>(mx, row[c]);
    double sum = 0.0;
    for (long c = 0; c < n_cls; ++c) {
      e[static_cast<std::size_t>(c)] = std::exp(static_cast<double>(row[c]) - mx);
      sum += e[static_cast<std::size_t>(c)];
    }
    float* out = probs.data() + p * n_cls;
    for (long c = 0; c < n_cls; ++c)
      out[c] = static_cast<float>(e[static_cast<std::size_t>(c)] / sum);
  }
  return probs;
}

TensorI argmax_labels(const Tensor& logits) {
  require(logits.rank() == 4, "argmax_labels expects {B,H,W,C} logits");
  const long pixels = logits.dim(0) * logits.dim(1) * logits.dim(2);
  const long n_cls = logits.dim(3);
  TensorI labels({logits.dim(0), logits.dim(1), logits.dim(2)});
  for (long p = 0; p < pixels; ++p) {
    const float* row = logits.data() + p * n_cls;
    long best = 0;
    for (long c = 1; c < n_cls; ++c)
      if (row[c] > row[best]) best = c;
    labels[p] = static_cast<std::int32_t>(best);
  }
  return labels;
}

void save_checkpoint(const SegModel& model, const std::filesystem::path& path,
                     const CheckpointMeta& meta) {
  nlohmann::json j;
  const ModelConfig& config = model.config();
  j["model"] = {{"widths", config.widths},
                {"n_classes", config.n_classes},
                {"in_ch", config.in_ch},
                {"head_init", config.head_init == HeadInit::kZeros ? "zeros" : "uniform"}};
  j["meta"] = {{"step", meta.step},
               {"class_names", meta.class_names},
               {"config_digest", meta.config_digest},
               {"note", meta.note}};
  const auto params = model.parameters();
  const auto names = model.parameter_names();
  nlohmann::json tensors = nlohmann::json::array();
  for (std::size_t i = 0; i < params.size(); ++i)
    tensors.push_back({{"name", names[i]}, {"shape", params[i]->shape()}});
  j["tensors"] = std::move(tensors);
  const std::string header = j.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), "cannot open checkpoint for writing: ", path.string());
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  const std::uint64_t len = header.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const Tensor* t : params)
    out.write(reinterpret_cast<const char*>(t->data()),
              static_cast<std::streamsize>(t->numel() * sizeof(float)));
  out.flush();
  require(out.good(), "failed writing checkpoint: ", path.string());
}

SegModel load_checkpoint(const std::filesystem::path& path, CheckpointMeta* meta) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot open checkpoint: ", path.string());
  char magic[sizeof(kCheckpointMagic)] = {};
  in.read(magic, sizeof(magic));
  require(in.good() && std::memcmp(magic, kCheckpointMagic, sizeof(magic)) == 0,
          "not a checkpoint file: ", path.string());
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  require(in.good() && len > 0 && len < (1ull << 26), "corrupt checkpoint header: ",
          path.string());
  std::string header(len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(len));
  require(in.good(), "truncated checkpoint header: ", path.string());

  nlohmann::json j = nlohmann::json::parse(header, nullptr, false);
  require(!j.is_discarded(), "corrupt checkpoint metadata: ", path.string());

  ModelConfig config;
  config.widths = j.at("model").at("widths").get<std::vector<int>>();
  config.n_classes = j.at("model").at("n_classes").get<int>();
  config.in_ch = j.at("model").at("in_ch").get<int>();
  config.head_init = j.at("model").value("head_init", "uniform") == std::string("zeros")
                         ? HeadInit::kZeros
                         : HeadInit::kUniform;
  if (meta) {
    const auto& m = j.at("meta");
    meta->step = m.value("step", 0);
    meta->class_names = m.value("class_names", std::vector<std::string>{});
    meta->config_digest = m.value("config_digest", std::string());
    meta->note = m.value("note", std::string());
  }

  Rng rng(0);
  SegModel model = SegModel::create(config, rng);
  const auto params = model.parameters();
  const auto names = model.parameter_names();
  const auto& tensors = j.at("tensors");
  require(tensors.size() == params.size(), "checkpoint lists ", tensors.size(),
          " tensors, expected ", params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    require(tensors[i].at("name").get<std::string>() == names[i],
            "unexpected tensor order in checkpoint: ", path.string());
    const auto shape = tensors[i].at("shape").get<std::vector<long>>();
    require(shape == params[i]->shape(), "tensor ", names[i],
            " has mismatched shape in checkpoint: ", path.string());
    in.read(reinterpret_cast<char*>(params[i]->data()),
            static_cast<std::streamsize>(params[i]->numel() * sizeof(float)));
    require(in.good(), "truncated checkpoint payload at tensor ", names[i], ": ",
            path.string());
  }
  in.peek();
  require(in.eof(), "checkpoint has trailing bytes: ", path.string());
  return model;
}

}  // namespace endocss
