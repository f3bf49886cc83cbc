#include "endocss/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <utility>

#include <nlohmann/json.hpp>

#include "endocss/error.hpp"
#include "endocss/image.hpp"
#include "endocss/rng.hpp"
#include "endocss/sampler.hpp"

namespace endocss {
namespace {

struct AugPair {
  Image image;
  Mask mask;
};

/// Resized crop + resize to the training resolution + horizontal flip.
/// Draw counts per item are fixed by the config, never by the data.
AugPair augment(const Image& image, const Mask& mask, const TrainConfig& c, Rng& rng) {
  AugPair out{image, mask};
  if (c.resized_crop) {
    const double side = std::sqrt(rng.uniform(c.crop_scale_min, 1.0));
    int ch = std::min<int>(image.height, std::max<int>(1, std::lround(image.height * side)));
    int cw = std::min<int>(image.width, std::max<int>(1, std::lround(image.width * side)));
    const int y0 = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(image.height - ch + 1)));
    const int x0 = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(image.width - cw + 1)));
    out.image = crop(out.image, y0, x0, ch, cw);
    out.mask = crop(out.mask, y0, x0, ch, cw);
  }
  if (out.image.height != c.image_size || out.image.width != c.image_size) {
    out.image = resize_bilinear(out.image, c.image_size, c.image_size);
    out.mask = resize_nearest(out.mask, c.image_size, c.image_size);
  }
  if (c.hflip && rng.bernoulli(0.5)) {
    out.image = hflip(out.image);
    out.mask = hflip(out.mask);
  }
  return out;
}

TrainBatch make_batch(const BatchIndices& indices, const Dataset& current,
                      const ReplaySet& replay, const TrainConfig& c, Rng& aug_rng) {
  std::vector<AugPair> items;
  items.reserve(indices.current.size() + indices.replay.size());
  for (const long i : indices.current) {
    const SegSample& s = current.samples[static_cast<std::size_t>(i)];
    items.push_back(augment(s.image, s.mask, c, aug_rng));
  }
  for (const long i : indices.replay) {
    const ReplayItem& r = replay.items[static_cast<std::size_t>(i)];
    items.push_back(augment(r.image, r.mask, c, aug_rng));
  }

  std::vector<const Image*> images;
  std::vector<const Mask*> masks;
  images.reserve(items.size());
  masks.reserve(items.size());
  for (const AugPair& p : items) {
    images.push_back(&p.image);
    masks.push_back(&p.mask);
  }
  TrainBatch batch;
  batch.images = to_tensor(images);
  batch.masks = to_tensor(masks);
  batch.is_replay.assign(items.size(), 0);
  for (std::size_t i = indices.current.size(); i < items.size(); ++i) batch.is_replay[i] = 1;
  batch.padded = indices.padded;
  return batch;
}

void log_batch(std::ostream& out, int step, int epoch, long batch, const BatchIndices& indices,
               const Dataset& current, const ReplaySet& replay, float loss) {
  out << "step=" << step << " epoch=" << epoch << " batch=" << batch
      << " padded=" << (indices.padded ? 1 : 0) << " loss=" << loss << " current=[";
  for (std::size_t i = 0; i < indices.current.size(); ++i) {
    if (i) out << ',';
    out << current.samples[static_cast<std::size_t>(indices.current[i])].id;
  }
  out << "] replay=[";
  for (std::size_t i = 0; i < indices.replay.size(); ++i) {
    if (i) out << ',';
    const ReplayItem& r = replay.items[static_cast<std::size_t>(indices.replay[i])];
    out << 'r' << indices.replay[i] << '(' << r.source_id << ')';
  }
  out << "]\n";
}

int head_classes(const StepView& view) {
  int top = 0;
  for (const int c : view.seen_classes) top = std::max(top, c);
  return top + 1;
}

std::vector<std::string> visible_names(const Dataset& data, int n) {
  std::vector<std::string> names(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    names[static_cast<std::size_t>(i)] =
        i < data.n_classes() ? data.class_names[static_cast<std::size_t>(i)] : msg("class_", i);
  return names;
}

std::optional<double> all_group_miou(const GroupedReport& report) {
  for (std::size_t g = 0; g < report.groups.size(); ++g) {
    if (report.groups[g].first == "All") return report.group_miou[g];
  }
  return std::nullopt;
}

}  // namespace

TrainMode parse_train_mode(const std::string& name) {
  if (name == "endocss") return TrainMode::kEndoCSS;
  if (name == "finetune") return TrainMode::kFinetune;
  if (name == "joint") return TrainMode::kJoint;
  fail("unknown mode '", name, "'; expected endocss, finetune, or joint");
}

std::string to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::kEndoCSS: return "endocss";
    case TrainMode::kFinetune: return "finetune";
    case TrainMode::kJoint: return "joint";
  }
  fail("invalid TrainMode");
}

void validate(const TrainConfig& c) {
  require(c.batch_size >= 1, "batch_size must be >= 1, got ", c.batch_size);
  require(c.epochs_first >= 1 && c.epochs_later >= 1, "epoch counts must be >= 1");
  require(c.lr_first > 0.0 && c.lr_later > 0.0, "learning rates must be positive");
  require(c.momentum >= 0.0 && c.momentum < 1.0, "momentum must be in [0,1), got ", c.momentum);
  require(c.crop_scale_min > 0.0 && c.crop_scale_min <= 1.0,
          "crop_scale_min must be in (0,1], got ", c.crop_scale_min);
  require(c.image_size >= 16 && c.image_size % 16 == 0,
          "image_size must be a positive multiple of 16, got ", c.image_size);
  require(c.sigma >= 0.0, "sigma must be >= 0, got ", c.sigma);
  require(c.k_per_class >= 1, "k_per_class must be >= 1, got ", c.k_per_class);
  require(c.n_per_source >= 1, "n_per_source must be >= 1, got ", c.n_per_source);
  require(c.per_class_cap >= 0, "per_class_cap cannot be negative, got ", c.per_class_cap);
  require(c.widths.size() == 4, "widths expects 4 encoder stages, got ", c.widths.size());
  for (const int w : c.widths) require(w >= 1, "widths must be positive");
  make_generator(c.generator);
}

std::string config_json(const TrainConfig& c) {
  nlohmann::json j;
  j["batch_size"] = c.batch_size;
  j["epochs_first"] = c.epochs_first;
  j["epochs_later"] = c.epochs_later;
  j["lr_first"] = c.lr_first;
  j["lr_later"] = c.lr_later;
  j["momentum"] = c.momentum;
  j["hflip"] = c.hflip;
  j["resized_crop"] = c.resized_crop;
  j["crop_scale_min"] = c.crop_scale_min;
  j["image_size"] = c.image_size;
  j["mu"] = c.mu;
  j["sigma"] = c.sigma;
  j["step_indexing_from_one"] = c.step_indexing_from_one;
  j["ignore_index"] = c.ignore_index;
  j["k_per_class"] = c.k_per_class;
  j["n_per_source"] = c.n_per_source;
  j["theta"] = c.theta;
  j["per_class_cap"] = c.per_class_cap;
  j["generator"] = c.generator;
  j["widths"] = c.widths;
  j["include_background"] = c.include_background;
  j["disjoint"] = c.disjoint;
  j["seed"] = c.seed;
  return j.dump(2);
}

TrainConfig config_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail("config is not valid JSON: ", e.what());
  }
  TrainConfig c;
  try {
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs_first = j.value("epochs_first", c.epochs_first);
    c.epochs_later = j.value("epochs_later", c.epochs_later);
    c.lr_first = j.value("lr_first", c.lr_first);
    c.lr_later = j.value("lr_later", c.lr_later);
    c.momentum = j.value("momentum", c.momentum);
    c.hflip = j.value("hflip", c.hflip);
    c.resized_crop = j.value("resized_crop", c.resized_crop);
    c.crop_scale_min = j.value("crop_scale_min", c.crop_scale_min);
    c.image_size = j.value("image_size", c.image_size);
    c.mu = j.value("mu", c.mu);
    c.sigma = j.value("sigma", c.sigma);
    c.step_indexing_from_one = j.value("step_indexing_from_one", c.step_indexing_from_one);
    c.ignore_index = j.value("ignore_index", c.ignore_index);
    c.k_per_class = j.value("k_per_class", c.k_per_class);
    c.n_per_source = j.value("n_per_source", c.n_per_source);
    c.theta = j.value("theta", c.theta);
    c.per_class_cap = j.value("per_class_cap", c.per_class_cap);
    c.generator = j.value("generator", c.generator);
    c.widths = j.value("widths", c.widths);
    c.include_background = j.value("include_background", c.include_background);
    c.disjoint = j.value("disjoint", c.disjoint);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    fail("config field has the wrong type: ", e.what());
  }
  validate(c);
  return c;
}

std::string config_digest(const TrainConfig& config) {
  const std::string text = config_json(config);
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (const unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

LossFn make_sance_loss(const SanCEConfig& config) {
  validate(config);
  return [config](const Tensor& logits, const TensorI& targets, Rng& noise_rng, Tensor* grad) {
    return sance_loss(logits, targets, config, noise_rng, grad);
  };
}

TrainStepStats train_step(SegModel& model, const StepView& step, const ReplaySet& replay,
                          const TrainConfig& config, TrainMode mode, std::ostream* batch_log,
                          const LossFn& loss_fn) {
  validate(config);
  const Dataset& data = step.train_set;
  require(data.size() >= 1, "step ", step.step_index, " has no training samples");
  require(replay.empty() || replay.ignore_index == config.ignore_index,
          "replay ignore_index ", replay.ignore_index, " does not match the config's ",
          config.ignore_index);

  const bool first = step.step_index == 0;
  const int epochs = first ? config.epochs_first : config.epochs_later;
  const double lr = first ? config.lr_first : config.lr_later;

  SanCEConfig loss_cfg;
  loss_cfg.mu = config.mu;
  loss_cfg.sigma = config.sigma;
  loss_cfg.ignore_index = config.ignore_index;
  loss_cfg.cur_step = mode == TrainMode::kEndoCSS
                          ? step.step_index + (config.step_indexing_from_one ? 1 : 0)
                          : 0;
  const LossFn loss = loss_fn ? loss_fn : make_sance_loss(loss_cfg);

  const BatchPlan plan = compute_ratio(data.size(), replay.size(), config.batch_size);
  BatchSampler sampler(data.size(), replay.size(), plan,
                       derive_seed(config.seed, msg("sampler/", step.step_index)));
  Rng aug_rng(derive_seed(config.seed, msg("aug/", step.step_index)));
  Rng noise_rng(derive_seed(config.seed, msg("noise/", step.step_index)));

  std::vector<Tensor*> params = model.parameters();
  std::vector<Tensor> velocity;
  velocity.reserve(params.size());
  for (const Tensor* p : params) velocity.emplace_back(p->shape());

  TrainStepStats stats;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    if (epoch > 0) sampler.start_epoch();
    double epoch_loss = 0.0;
    long epoch_batches = 0;
    while (const auto indices = sampler.next()) {
      const TrainBatch batch = make_batch(*indices, data, replay, config, aug_rng);
      ForwardTrace trace;
      const Tensor logits = model.forward(batch.images, trace);
      Tensor dlogits(logits.shape());
      const LossResult<float> result = loss(logits, batch.masks, noise_rng, &dlogits);
      if (!std::isfinite(result.value))
        throw std::runtime_error(msg("training diverged at step ", step.step_index, ", epoch ",
                                     epoch, ", batch ", epoch_batches, " (loss=", result.value,
                                     ", lr=", lr, "); lower the learning rate or noise scale"));

      std::vector<Tensor> grads = model.zero_grads();
      model.backward(trace, dlogits, grads);
      for (std::size_t i = 0; i < params.size(); ++i) {
        float* v = velocity[i].data();
        float* p = params[i]->data();
        const float* g = grads[i].data();
        const long n = params[i]->numel();
        const float m = static_cast<float>(config.momentum);
        const float step_size = static_cast<float>(lr);
        for (long k = 0; k < n; ++k) {
          v[k] = m * v[k] + g[k];
          p[k] -= step_size * v[k];
        }
      }

      if (batch_log)
        log_batch(*batch_log, step.step_index, epoch, epoch_batches, *indices, data, replay,
                  result.value);
      epoch_loss += result.value;
      ++epoch_batches;
    }
    const double mean_loss = epoch_loss / static_cast<double>(epoch_batches);
    if (epoch == 0) stats.first_epoch_loss = mean_loss;
    stats.last_epoch_loss = mean_loss;
    stats.batches += epoch_batches;
  }
  return stats;
}

GroupedReport evaluate_step(const SegModel& model, const Dataset& test_set,
                            const ClassGroups& groups, const TrainConfig& config) {
  require(test_set.size() >= 1, "evaluation needs at least one test sample");
  ConfusionMatrix cm(model.n_classes(), test_set.ignore_index);
  for (const SegSample& sample : test_set.samples) {
    const bool native =
        sample.image.height == config.image_size && sample.image.width == config.image_size;
    Image resized;
    const Image* input = &sample.image;
    if (!native) {
      resized = resize_bilinear(sample.image, config.image_size, config.image_size);
      input = &resized;
    }
    const Tensor logits = forward_logits(model, to_tensor({input}));
    Mask pred = to_mask(argmax_labels(logits), 0);
    if (!native) pred = resize_nearest(pred, sample.mask.height, sample.mask.width);
    cm.accumulate(pred, sample.mask);
  }
  return grouped_report(cm, groups, visible_names(test_set, model.n_classes()),
                        config.include_background);
}

StepView make_joint_view(const Dataset& train_set, const Protocol& protocol) {
  StepView view;
  view.step_index = 0;
  view.seen_classes = protocol.seen_classes(protocol.total_steps() - 1);
  view.current_classes = view.seen_classes;
  view.train_set = train_set;
  return view;
}

RunRecord run_continual(const std::vector<StepView>& steps, const Protocol& protocol,
                        const Dataset& test_set, const TrainConfig& config, TrainMode mode,
                        const std::filesystem::path& out_dir, const CrossSplit* cross) {
  namespace fs = std::filesystem;
  validate(config);
  require(!steps.empty(), "run_continual needs at least one step");
  require(mode != TrainMode::kJoint || steps.size() == 1,
          "joint mode trains in a single pass, got ", steps.size(), " steps");
  const auto started = std::chrono::steady_clock::now();

  fs::create_directories(out_dir);
  {
    nlohmann::json j = nlohmann::json::parse(config_json(config));
    j["protocol"] = protocol.spec_string;
    j["mode"] = to_string(mode);
    std::ofstream out(out_dir / "config.json");
    require(out.good(), "cannot write ", (out_dir / "config.json").string());
    out << j.dump(2) << "\n";
  }
  std::ofstream log(out_dir / "batches.log");
  require(log.good(), "cannot write ", (out_dir / "batches.log").string());

  Rng model_rng(derive_seed(config.seed, "model-init"));
  ModelConfig mc;
  mc.widths = config.widths;
  mc.n_classes = head_classes(steps.front());
  SegModel model = SegModel::create(mc, model_rng);

  const std::unique_ptr<GeneratorPlugin> plugin = make_generator(config.generator);
  static const ReplaySet kNoReplay;
  ReplaySet pool;
  pool.ignore_index = config.ignore_index;

  RunRecord record;
  record.protocol_spec = protocol.spec_string;
  record.mode = to_string(mode);
  record.dir = out_dir;

  for (std::size_t i = 0; i < steps.size(); ++i) {
    const StepView& view = steps[i];
    const int t = view.step_index;

    if (mode == TrainMode::kEndoCSS && i >= 1) {
      ReplayBuildConfig rc;
      rc.k_per_class = config.k_per_class;
      rc.n_per_source = config.n_per_source;
      rc.theta = config.theta;
      rc.per_class_cap = config.per_class_cap;
      rc.step = t;
      rc.seed = derive_seed(config.seed, msg("replay/", t));
      append_replay(pool, build_replay_set(model, steps[i - 1].train_set, *plugin, rc));
    }
    if (i >= 1) model.expand_head(head_classes(view));

    const ReplaySet& replay = mode == TrainMode::kEndoCSS ? pool : kNoReplay;
    StepRecord sr;
    sr.step = t;
    sr.replay_pool = replay.size();
    sr.stats = train_step(model, view, replay, config, mode, &log);
    log.flush();

    const fs::path step_dir = out_dir / msg("step_", t);
    fs::create_directories(step_dir);
    CheckpointMeta meta;
    meta.step = t;
    meta.class_names = visible_names(view.train_set, model.n_classes());
    meta.config_digest = config_digest(config);
    sr.checkpoint_path = step_dir / "checkpoint";
    save_checkpoint(model, sr.checkpoint_path, meta);

    const int report_step = mode == TrainMode::kJoint ? protocol.total_steps() - 1 : t;
    const Dataset eval_set = remap_dataset(test_set, view.seen_classes);
    sr.report.step = t;
    sr.report.protocol_spec = protocol.spec_string;
    sr.report.mode = record.mode;
    sr.report.grouped =
        evaluate_step(model, eval_set, report_groups(protocol, report_step, cross), config);
    write_report_csv(sr.report, step_dir / "report.csv");
    write_report_json(sr.report, step_dir / "report.json");
    record.steps.push_back(std::move(sr));
  }

  record.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  {
    nlohmann::json j;
    j["protocol"] = record.protocol_spec;
    j["mode"] = record.mode;
    j["wall_seconds"] = record.wall_seconds;
    nlohmann::json arr = nlohmann::json::array();
    for (const StepRecord& sr : record.steps) {
      nlohmann::json s;
      s["step"] = sr.step;
      s["checkpoint"] = fs::relative(sr.checkpoint_path, out_dir).generic_string();
      s["replay_pool"] = sr.replay_pool;
      s["first_epoch_loss"] = sr.stats.first_epoch_loss;
      s["last_epoch_loss"] = sr.stats.last_epoch_loss;
      const auto miou = all_group_miou(sr.report.grouped);
      if (miou)
        s["miou_all"] = *miou;
      else
        s["miou_all"] = nullptr;
      arr.push_back(std::move(s));
    }
    j["steps"] = std::move(arr);
    std::ofstream out(out_dir / "run.json");
    require(out.good(), "cannot write ", (out_dir / "run.json").string());
    out << j.dump(2) << "\n";
  }
  return record;
}

RunRecord run_continual(const Dataset& train_set, const Dataset& test_set,
                        const Protocol& protocol, const TrainConfig& config, TrainMode mode,
                        const std::filesystem::path& out_dir) {
  require(protocol.mode == ProtocolMode::kSingleDataset,
          "cross-dataset runs pass explicit step views");
  std::vector<StepView> steps;
  if (mode == TrainMode::kJoint) {
    steps.push_back(make_joint_view(train_set, protocol));
  } else {
    steps = split_dataset(train_set, protocol,
                          config.disjoint ? LabelPolicy::kCurrentOnly : LabelPolicy::kSeen);
  }
  return run_continual(steps, protocol, test_set, config, mode, out_dir, nullptr);
}

}  // namespace endocss
