#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "endocss/datamodel.hpp"
#include "endocss/segmodel.hpp"
#include "endocss/tensor.hpp"

namespace endocss {

/// Per-sample ranking signal: IoU of the previous model's prediction against
/// ground truth, for exactly the classes present in that sample's mask.
struct SourceScore {
  std::string sample_id;
  std::map<int, double> class_iou;
};

struct ReplayItem {
  Image image;  // pseudo image
  Mask mask;    // entropy-filtered pseudo label
  int source_class = 0;
  std::string source_id;
  int step_generated = 0;
};

struct ReplaySet {
  std::vector<ReplayItem> items;
  double theta_used = 0.0;
  int ignore_index = kDefaultIgnoreIndex;

  long size() const { return static_cast<long>(items.size()); }
  bool empty() const { return items.empty(); }
};

/// Pseudo-image source. Implementations must be deterministic under `seed`
/// and preserve the source dimensions.
class GeneratorPlugin {
 public:
  virtual ~GeneratorPlugin() = default;
  virtual std::string name() const = 0;
  virtual std::vector<Image> generate(const Image& source, int n_variants,
                                      std::uint64_t seed) const = 0;
};

class IdentityGenerator : public GeneratorPlugin {
 public:
  std::string name() const override { return "identity"; }
  std::vector<Image> generate(const Image& source, int n_variants,
                              std::uint64_t seed) const override;
};

/// Default surrogate generator: seeded photometric jitter (brightness,
/// contrast, hue) plus a small smooth elastic warp. A heavier generative
/// adapter can be dropped in behind the same interface.
class JitterWarpGenerator : public GeneratorPlugin {
 public:
  struct Params {
    double brightness = 0.15;   // additive shift drawn from ±brightness
    double contrast = 0.2;      // multiplicative factor drawn from 1±contrast
    double hue_shift = 0.06;    // hue rotation, fraction of the full circle
    double warp_amplitude = 2.5;  // displacement in pixels
    double warp_cell = 16.0;      // control-grid spacing in pixels
  };

  JitterWarpGenerator() = default;
  explicit JitterWarpGenerator(Params params) : params_(params) {}

  std::string name() const override { return "jitter-warp"; }
  std::vector<Image> generate(const Image& source, int n_variants,
                              std::uint64_t seed) const override;

 private:
  Params params_;
};

/// Factory for the registered generators: "identity", "jitter-warp".
std::unique_ptr<GeneratorPlugin> make_generator(const std::string& name);

/// Entropy threshold default, half the ceiling ln C.
double default_theta(int n_classes);

/// Softmax of the model's logits on one image, in double precision, {H,W,C}.
TensorD predict_probs_image(const SegModel& model, const Image& image);

std::vector<SourceScore> score_sources(const SegModel& prev_model, const Dataset& prev_data);

/// Top k_per_class sample ids per foreground class, by descending IoU with
/// ties broken toward the ascending sample id. Classes with fewer than k
/// scored samples return all of them with a warning.
std::map<int, std::vector<std::string>> select_exemplar_sources(
    const std::vector<SourceScore>& scores, int k_per_class);

/// Shannon entropy per pixel, natural log, 0·ln 0 = 0. probs is {H,W,C} with
/// rows summing to 1 (±1e-5); negative entries are an error.
TensorD entropy_map(const TensorD& probs);

/// Keeps the argmax class (ties toward the lowest id) where entropy < theta,
/// ignore_index elsewhere.
Mask filter_pseudo_label(const TensorD& probs, double theta, int ignore_index);

/// Runs the plugin, rethrowing any failure with the source id attached.
std::vector<Image> generate_pseudo_images(const GeneratorPlugin& plugin,
                                          const SegSample& source, int n_per_source,
                                          std::uint64_t seed);

struct ReplayBuildConfig {
  int k_per_class = 10;
  int n_per_source = 1;
  double theta = -1.0;    // < 0 resolves to default_theta(model classes)
  int per_class_cap = 0;  // 0 = no cap
  int step = 1;           // step being entered; recorded as provenance
  std::uint64_t seed = 0;
};

/// score -> select -> generate -> re-predict -> filter. A source selected
/// for several classes is generated once, attributed to its lowest class.
ReplaySet build_replay_set(const SegModel& prev_model, const Dataset& prev_data,
                           const GeneratorPlugin& plugin, const ReplayBuildConfig& config);

/// R_{1:t-1} accumulation across steps.
void append_replay(ReplaySet& into, ReplaySet&& add);

/// Directory layout mirrors datasets (images/, masks/) plus replay.json
/// carrying theta and per-item provenance.
void save_replay_set(const ReplaySet& set, const std::filesystem::path& dir);
ReplaySet load_replay_set(const std::filesystem::path& dir);

}  // namespace endocss
