#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "endocss/datamodel.hpp"
#include "endocss/loss.hpp"
#include "endocss/metrics.hpp"
#include "endocss/protocol.hpp"
#include "endocss/replay.hpp"
#include "endocss/report_io.hpp"
#include "endocss/segmodel.hpp"

namespace endocss {

enum class TrainMode { kEndoCSS, kFinetune, kJoint };

TrainMode parse_train_mode(const std::string& name);
std::string to_string(TrainMode mode);

struct TrainConfig {
  int batch_size = 16;
  int epochs_first = 30;
  int epochs_later = 15;
  double lr_first = 1e-2;
  double lr_later = 1e-3;
  double momentum = 0.9;

  bool hflip = true;
  bool resized_crop = true;
  double crop_scale_min = 0.6;  // smallest retained area fraction
  int image_size = 64;          // training resolution, divisible by 16

  double mu = 0.0;     // SAN-CE noise mean
  double sigma = 0.1;  // SAN-CE noise scale
  bool step_indexing_from_one = false;
  int ignore_index = kDefaultIgnoreIndex;

  int k_per_class = 10;
  int n_per_source = 1;
  double theta = -1.0;  // < 0 resolves to default_theta
  int per_class_cap = 0;
  std::string generator = "jitter-warp";

  std::vector<int> widths = {16, 32, 64, 128};
  bool include_background = false;
  bool disjoint = false;  // keep only current-step labels during training
  std::uint64_t seed = 0;
};

void validate(const TrainConfig& config);

std::string config_json(const TrainConfig& config);
TrainConfig config_from_json(const std::string& text);
std::string config_digest(const TrainConfig& config);

/// Loss hook: logits {B,H,W,C} + targets -> loss and d(loss)/d(logits).
/// The default is SAN-CE with cur_step taken from the protocol step.
using LossFn = std::function<LossResult<float>(const Tensor& logits, const TensorI& targets,
                                               Rng& noise_rng, Tensor* grad)>;

LossFn make_sance_loss(const SanCEConfig& config);

struct TrainStepStats {
  double first_epoch_loss = 0.0;
  double last_epoch_loss = 0.0;
  long batches = 0;
};

/// Runs the optimizer loop for one protocol step, mutating `model` in place.
/// Replay items join every batch per compute_ratio; augmentation covers
/// current and replay items alike. A non-finite loss aborts with context.
TrainStepStats train_step(SegModel& model, const StepView& step, const ReplaySet& replay,
                          const TrainConfig& config, TrainMode mode,
                          std::ostream* batch_log = nullptr, const LossFn& loss_fn = {});

/// Confusion over the full test set; images are resized to the training
/// resolution for inference and predictions mapped back for scoring.
GroupedReport evaluate_step(const SegModel& model, const Dataset& test_set,
                            const ClassGroups& groups, const TrainConfig& config);

struct StepRecord {
  int step = 0;
  TrainStepStats stats;
  long replay_pool = 0;  // accumulated replay size entering the step
  EvalReport report;
  std::filesystem::path checkpoint_path;
};

struct RunRecord {
  std::string protocol_spec;
  std::string mode;
  std::filesystem::path dir;
  std::vector<StepRecord> steps;
  double wall_seconds = 0.0;
};

/// Single StepView covering every class at once, for joint training.
StepView make_joint_view(const Dataset& train_set, const Protocol& protocol);

/// Walks the protocol steps: (endocss only) extend the replay pool from the
/// previous step's model and data, widen the head, train, checkpoint, and
/// evaluate on the test set restricted to the classes seen so far.
///
/// out_dir receives config.json up front, then batches.log, step_<t>/
/// checkpoint + report.{csv,json} as they complete, and run.json at the end,
/// so an aborted run leaves a usable partial record.
RunRecord run_continual(const std::vector<StepView>& steps, const Protocol& protocol,
                        const Dataset& test_set, const TrainConfig& config, TrainMode mode,
                        const std::filesystem::path& out_dir, const CrossSplit* cross = nullptr);

/// Splits `train_set` by the protocol first (joint mode trains once on the
/// whole set instead).
RunRecord run_continual(const Dataset& train_set, const Dataset& test_set,
                        const Protocol& protocol, const TrainConfig& config, TrainMode mode,
                        const std::filesystem::path& out_dir);

}  // namespace endocss
