#include "endocss/replay.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "endocss/error.hpp"
#include "endocss/png_io.hpp"
#include "endocss/rng.hpp"

namespace endocss {
namespace {

float sample_bilinear(const Image& img, float y, float x, int c) {
  const float cy = std::clamp(y, 0.f, static_cast<float>(img.height - 1));
  const float cx = std::clamp(x, 0.f, static_cast<float>(img.width - 1));
  const int y0 = static_cast<int>(cy);
  const int x0 = static_cast<int>(cx);
  const int y1 = std::min(y0 + 1, img.height - 1);
  const int x1 = std::min(x0 + 1, img.width - 1);
  const float wy = cy - static_cast<float>(y0);
  const float wx = cx - static_cast<float>(x0);
  const float top = img.at(y0, x0, c) * (1.f - wx) + img.at(y0, x1, c) * wx;
  const float bot = img.at(y1, x0, c) * (1.f - wx) + img.at(y1, x1, c) * wx;
  return top * (1.f - wy) + bot * wy;
}

std::string sanitize_stem(const std::string& id) {
  std::string out = id;
  for (char& c : out)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '-';
  return out;
}

}  // namespace

std::vector<Image> IdentityGenerator::generate(const Image& source, int n_variants,
                                               std::uint64_t) const {
  require(n_variants >= 1, "generator needs n_variants >= 1, got ", n_variants);
  return std::vector<Image>(static_cast<std::size_t>(n_variants), source);
}

std::vector<Image> JitterWarpGenerator::generate(const Image& source, int n_variants,
                                                 std::uint64_t seed) const {
  require(n_variants >= 1, "generator needs n_variants >= 1, got ", n_variants);
  require(source.height >= 2 && source.width >= 2, "source image too small to warp");
  std::vector<Image> out;
  out.reserve(static_cast<std::size_t>(n_variants));
  for (int variant = 0; variant < n_variants; ++variant) {
    Rng rng(derive_seed(seed, "variant", static_cast<std::uint64_t>(variant)));
    const float db = static_cast<float>(rng.uniform(-params_.brightness, params_.brightness));
    const float fc = static_cast<float>(1.0 + rng.uniform(-params_.contrast, params_.contrast));
    const float dh =
        static_cast<float>(rng.uniform(-params_.hue_shift, params_.hue_shift) * 360.0);

    // Coarse control grid of displacements, bilinearly interpolated per pixel.
    const int cell = std::max(2, static_cast<int>(params_.warp_cell));
    const int gh = source.height / cell + 2;
    const int gw = source.width / cell + 2;
    std::vector<float> gy(static_cast<std::size_t>(gh) * gw);
    std::vector<float> gx(static_cast<std::size_t>(gh) * gw);
    for (std::size_t i = 0; i < gy.size(); ++i) {
      gy[i] = static_cast<float>(rng.uniform(-params_.warp_amplitude, params_.warp_amplitude));
      gx[i] = static_cast<float>(rng.uniform(-params_.warp_amplitude, params_.warp_amplitude));
    }
    auto field = [&](const std::vector<float>& g, float y, float x) {
      const float fy = y / static_cast<float>(cell);
      const float fx = x / static_cast<float>(cell);
      const int y0 = std::min(static_cast<int>(fy), gh - 2);
      const int x0 = std::min(static_cast<int>(fx), gw - 2);
      const float wy = fy - static_cast<float>(y0);
      const float wx = fx - static_cast<float>(x0);
      const float top = g[static_cast<std::size_t>(y0) * gw + x0] * (1.f - wx) +
                        g[static_cast<std::size_t>(y0) * gw + x0 + 1] * wx;
      const float bot = g[static_cast<std::size_t>(y0 + 1) * gw + x0] * (1.f - wx) +
                        g[static_cast<std::size_t>(y0 + 1) * gw + x0 + 1] * wx;
      return top * (1.f - wy) + bot * wy;
    };

    Image img(source.height, source.width);
    for (int y = 0; y < source.height; ++y) {
      for (int x = 0; x < source.width; ++x) {
        const float sy = static_cast<float>(y) + field(gy, static_cast<float>(y),
                                                       static_cast<float>(x));
        const float sx = static_cast<float>(x) + field(gx, static_cast<float>(y),
                                                       static_cast<float>(x));
        float r = sample_bilinear(source, sy, sx, 0);
        float g = sample_bilinear(source, sy, sx, 1);
        float b = sample_bilinear(source, sy, sx, 2);
        float h, s, v;
        rgb_to_hsv(r, g, b, h, s, v);
        h = std::fmod(h + dh + 360.f, 360.f);
        hsv_to_rgb(h, s, v, r, g, b);
        img.at(y, x, 0) = clamp01((r - 0.5f) * fc + 0.5f + db);
        img.at(y, x, 1) = clamp01((g - 0.5f) * fc + 0.5f + db);
        img.at(y, x, 2) = clamp01((b - 0.5f) * fc + 0.5f + db);
      }
    }
    out.push_back(std::move(img));
  }
  return out;
}

std::unique_ptr<GeneratorPlugin> make_generator(const std::string& name) {
  if (name == "identity") return std::make_unique<IdentityGenerator>();
  if (name == "jitter-warp") return std::make_unique<JitterWarpGenerator>();
  fail("unknown generator '", name, "'; registered: identity, jitter-warp");
}

double default_theta(int n_classes) {
  require(n_classes >= 2, "theta default needs at least 2 classes, got ", n_classes);
  return 0.5 * std::log(static_cast<double>(n_classes));
}

TensorD predict_probs_image(const SegModel& model, const Image& image) {
  const Tensor logits = model.forward(to_tensor(std::vector<const Image*>{&image}));
  const long h = logits.dim(1), w = logits.dim(2), n_cls = logits.dim(3);
  TensorD probs({h, w, n_cls});
  std::vector<double> e(static_cast<std::size_t>(n_cls));
  for (long p = 0; p < h * w; ++p) {
    const float* row = logits.data() + p * n_cls;
    double mx = row[0];
    for (long c = 1; c < n_cls; ++c) mx = std::max<double>(mx, row[c]);
    double sum = 0.0;
    for (long c = 0; c < n_cls; ++c) {
      e[static_cast<std::size_t>(c)] = std::exp(static_cast<double>(row[c]) - mx);
      sum += e[static_cast<std::size_t>(c)];
    }
    for (long c = 0; c < n_cls; ++c) probs[p * n_cls + c] = e[static_cast<std::size_t>(c)] / sum;
  }
  return probs;
}

std::vector<SourceScore> score_sources(const SegModel& prev_model, const Dataset& prev_data) {
  require(!prev_data.samples.empty(), "cannot score an empty dataset");
  std::vector<SourceScore> scores;
  scores.reserve(prev_data.samples.size());
  for (const SegSample& sample : prev_data.samples) {
    const Tensor logits =
        prev_model.forward(to_tensor(std::vector<const Image*>{&sample.image}));
    const TensorI pred = argmax_labels(logits);
    require(pred.dim(1) == sample.mask.height && pred.dim(2) == sample.mask.width,
            "prediction size mismatch on sample ", sample.id);

    std::map<int, long> inter, uni;
    for (int y = 0; y < sample.mask.height; ++y) {
      for (int x = 0; x < sample.mask.width; ++x) {
        const std::int32_t g = sample.mask.at(y, x);
        if (g == prev_data.ignore_index) continue;
        const std::int32_t p = pred(0, y, x);
        if (g == p) {
          ++inter[g];
          ++uni[g];
        } else {
          ++uni[g];
          ++uni[p];
        }
      }
    }
    SourceScore score;
    score.sample_id = sample.id;
    // Score only classes present in the ground truth.
    std::unordered_set<std::int32_t> in_gt;
    for (const std::int32_t g : sample.mask.v)
      if (g != prev_data.ignore_index) in_gt.insert(g);
    for (const std::int32_t c : in_gt)
      score.class_iou[c] =
          static_cast<double>(inter.count(c) ? inter[c] : 0) / static_cast<double>(uni[c]);
    scores.push_back(std::move(score));
  }
  return scores;
}

std::map<int, std::vector<std::string>> select_exemplar_sources(
    const std::vector<SourceScore>& scores, int k_per_class) {
  require(k_per_class >= 1, "k_per_class must be >= 1, got ", k_per_class);
  std::map<int, std::vector<std::pair<double, std::string>>> per_class;
  for (const SourceScore& s : scores) {
    for (const auto& [cls, iou] : s.class_iou) {
      require(iou >= 0.0 && iou <= 1.0, "IoU ", iou, " out of [0,1] for sample ", s.sample_id);
      if (cls == 0) continue;  // background is never a replay source class
      per_class[cls].emplace_back(iou, s.sample_id);
    }
  }
  std::map<int, std::vector<std::string>> selected;
  for (auto& [cls, ranked] : per_class) {
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    if (static_cast<int>(ranked.size()) < k_per_class)
      warn("class ", cls, " has only ", ranked.size(), " scored samples; requested ",
           k_per_class, " per class");
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < ranked.size() && i < static_cast<std::size_t>(k_per_class); ++i)
      ids.push_back(ranked[i].second);
    selected[cls] = std::move(ids);
  }
  return selected;
}

TensorD entropy_map(const TensorD& probs) {
  require(probs.rank() == 3, "entropy_map expects {H,W,C} probabilities");
  const long h = probs.dim(0), w = probs.dim(1), n_cls = probs.dim(2);
  require(n_cls >= 1, "entropy_map needs at least one class");
  TensorD ent({h, w});
  for (long p = 0; p < h * w; ++p) {
    const double* row = probs.data() + p * n_cls;
    double sum = 0.0, e = 0.0;
    for (long c = 0; c < n_cls; ++c) {
      const double v = row[c];
      require(v >= 0.0, "negative probability ", v, " at pixel ", p, ", class ", c);
      sum += v;
      if (v > 0.0) e -= v * std::log(v);
    }
    require(std::abs(sum - 1.0) <= 1e-5, "probabilities at pixel ", p, " sum to ", sum,
            ", not 1");
    ent[p] = e;
  }
  return ent;
}

Mask filter_pseudo_label(const TensorD& probs, double theta, int ignore_index) {
  require(theta > 0.0, "entropy threshold must be > 0, got ", theta);
  const TensorD ent = entropy_map(probs);
  const long h = probs.dim(0), w = probs.dim(1), n_cls = probs.dim(2);
  Mask mask(static_cast<int>(h), static_cast<int>(w));
  for (long p = 0; p < h * w; ++p) {
    if (ent[p] >= theta) {
      mask.v[static_cast<std::size_t>(p)] = ignore_index;
      continue;
    }
    const double* row = probs.data() + p * n_cls;
    long best = 0;
    for (long c = 1; c < n_cls; ++c)
      if (row[c] > row[best]) best = c;
    mask.v[static_cast<std::size_t>(p)] = static_cast<std::int32_t>(best);
  }
  return mask;
}

std::vector<Image> generate_pseudo_images(const GeneratorPlugin& plugin,
                                          const SegSample& source, int n_per_source,
                                          std::uint64_t seed) {
  std::vector<Image> variants;
  try {
    variants = plugin.generate(source.image, n_per_source, seed);
  } catch (const std::exception& e) {
    fail("generator '", plugin.name(), "' failed on source ", source.id, ": ", e.what());
  }
  require(static_cast<int>(variants.size()) == n_per_source, "generator '", plugin.name(),
          "' returned ", variants.size(), " variants for source ", source.id, ", expected ",
          n_per_source);
  for (const Image& v : variants)
    require(v.height == source.image.height && v.width == source.image.width,
            "generator '", plugin.name(), "' changed dimensions of source ", source.id);
  return variants;
}

ReplaySet build_replay_set(const SegModel& prev_model, const Dataset& prev_data,
                           const GeneratorPlugin& plugin, const ReplayBuildConfig& config) {
  require(config.n_per_source >= 1, "n_per_source must be >= 1, got ", config.n_per_source);
  require(config.per_class_cap >= 0, "per_class_cap must be >= 0, got ", config.per_class_cap);
  require(config.step >= 1, "replay is built entering step >= 1, got ", config.step);

  const auto scores = score_sources(prev_model, prev_data);
  const auto selected = select_exemplar_sources(scores, config.k_per_class);
  require(!selected.empty(),
          "no replay sources: no foreground class present in the previous task data");

  std::unordered_map<std::string, const SegSample*> by_id;
  for (const SegSample& s : prev_data.samples) by_id[s.id] = &s;

  // A source serving several classes is generated once, attributed to the
  // lowest class that selected it (map iteration is ascending).
  std::vector<std::pair<std::string, int>> sources;
  std::unordered_set<std::string> seen;
  for (const auto& [cls, ids] : selected)
    for (const std::string& id : ids)
      if (seen.insert(id).second) sources.emplace_back(id, cls);

  ReplaySet set;
  set.theta_used =
      config.theta < 0.0 ? default_theta(prev_model.n_classes()) : config.theta;
  set.ignore_index = prev_data.ignore_index;

  std::map<int, int> per_class_count;
  for (const auto& [id, cls] : sources) {
    if (config.per_class_cap > 0 && per_class_count[cls] >= config.per_class_cap) continue;
    const SegSample& source = *by_id.at(id);
    const auto variants = generate_pseudo_images(plugin, source, config.n_per_source,
                                                 derive_seed(config.seed, id));
    for (const Image& variant : variants) {
      if (config.per_class_cap > 0 && per_class_count[cls] >= config.per_class_cap) break;
      ReplayItem item;
      item.image = variant;
      item.mask = filter_pseudo_label(predict_probs_image(prev_model, variant),
                                      set.theta_used, set.ignore_index);
      item.source_class = cls;
      item.source_id = id;
      item.step_generated = config.step;
      set.items.push_back(std::move(item));
      ++per_class_count[cls];
    }
  }
  return set;
}

void append_replay(ReplaySet& into, ReplaySet&& add) {
  if (into.empty()) {
    into = std::move(add);
    return;
  }
  require(into.ignore_index == add.ignore_index,
          "cannot merge replay sets with different ignore_index");
  if (into.theta_used != add.theta_used)
    warn("merging replay sets with different theta (", into.theta_used, " vs ",
         add.theta_used, "); keeping the newer value");
  into.theta_used = add.theta_used;
  for (auto& item : add.items) into.items.push_back(std::move(item));
}

void save_replay_set(const ReplaySet& set, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "masks");
  nlohmann::json items = nlohmann::json::array();
  for (std::size_t i = 0; i < set.items.size(); ++i) {
    const ReplayItem& item = set.items[i];
    std::ostringstream stem;
    stem << "r" << std::setw(5) << std::setfill('0') << i << "_"
         << sanitize_stem(item.source_id);
    write_image_png(dir / "images" / (stem.str() + ".png"), item.image);
    write_mask_png(dir / "masks" / (stem.str() + ".png"), item.mask);
    items.push_back({{"stem", stem.str()},
                     {"source_id", item.source_id},
                     {"source_class", item.source_class},
                     {"step", item.step_generated}});
  }
  nlohmann::json j;
  j["theta"] = set.theta_used;
  j["ignore_index"] = set.ignore_index;
  j["items"] = std::move(items);
  std::ofstream out(dir / "replay.json", std::ios::trunc);
  require(out.good(), "cannot write replay manifest under ", dir.string());
  out << j.dump(2) << "\n";
  out.flush();
  require(out.good(), "failed writing replay manifest under ", dir.string());
}

ReplaySet load_replay_set(const std::filesystem::path& dir) {
  std::ifstream in(dir / "replay.json");
  require(in.good(), "missing replay manifest: ", (dir / "replay.json").string());
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  require(!j.is_discarded(), "replay manifest is not valid JSON: ",
          (dir / "replay.json").string());

  ReplaySet set;
  set.theta_used = j.at("theta").get<double>();
  set.ignore_index = j.at("ignore_index").get<int>();
  for (const auto& e : j.at("items")) {
    const std::string stem = e.at("stem").get<std::string>();
    ReplayItem item;
    item.image = read_image_png(dir / "images" / (stem + ".png"));
    item.mask = read_mask_png(dir / "masks" / (stem + ".png"));
    item.source_id = e.at("source_id").get<std::string>();
    item.source_class = e.at("source_class").get<int>();
    item.step_generated = e.at("step").get<int>();
    require(item.image.height == item.mask.height && item.image.width == item.mask.width,
            "replay item ", stem, " image and mask sizes differ");
    set.items.push_back(std::move(item));
  }
  return set;
}

}  // namespace endocss
