#include "endocss/datamodel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "endocss/error.hpp"
#include "endocss/png_io.hpp"
#include "endocss/rng.hpp"

namespace fs = std::filesystem;

namespace endocss {
namespace {

std::vector<fs::path> list_pngs(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::string> read_class_names(const fs::path& file) {
  std::ifstream in(file);
  require(in.good(), "missing class list: ", file.string());
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) names.push_back(line);
  }
  require(!names.empty(), "empty class list: ", file.string());
  return names;
}

// --- synthetic shapes ------------------------------------------------------

// Axis-aligned coverage predicates, one kind per foreground class.
bool covers(int kind, int dy, int dx, int r) {
  const int ady = std::abs(dy), adx = std::abs(dx);
  const long d2 = static_cast<long>(dy) * dy + static_cast<long>(dx) * dx;
  const long r2 = static_cast<long>(r) * r;
  switch (kind) {
    case 0: return d2 <= r2;                                   // disk
    case 1: return ady <= r && adx <= r;                       // square
    case 2:                                                    // triangle
      return dy >= -r && dy <= r && adx <= (dy + r) / 2;
    case 3: return ady + adx <= r;                             // diamond
    case 4: return d2 <= r2 && 4 * d2 >= r2;                   // ring
    case 5:                                                    // cross
      return (ady <= r / 3 && adx <= r) || (adx <= r / 3 && ady <= r);
    case 6: return ady <= r / 3 && adx <= r;                   // horizontal bar
    case 7: return adx <= r / 3 && ady <= r;                   // vertical bar
    case 8: {                                                  // ellipse
      const double ny = static_cast<double>(dy) / (0.6 * r);
      const double nx = static_cast<double>(dx) / r;
      return ny * ny + nx * nx <= 1.0;
    }
    case 9: {                                                  // square frame
      const int m = std::max(ady, adx);
      return m <= r && 2 * m >= r;
    }
    default: return false;
  }
}

constexpr int kMaxShapeKinds = 10;

struct Rgb {
  double r, g, b;
};

Rgb make_rgb(double hue, double sat, double val) {
  float r, g, b;
  hsv_to_rgb(static_cast<float>(hue), static_cast<float>(sat), static_cast<float>(val), r, g,
             b);
  return {r, g, b};
}

void draw_shape(std::vector<unsigned char>& img8, Mask& mask, int h, int w,
                int class_id, int cy, int cx, int r, const Rgb& color) {
  const int kind = (class_id - 1) % kMaxShapeKinds;
  for (int y = std::max(0, cy - r); y <= std::min(h - 1, cy + r); ++y) {
    for (int x = std::max(0, cx - r); x <= std::min(w - 1, cx + r); ++x) {
      if (!covers(kind, y - cy, x - cx, r)) continue;
      mask.at(y, x) = class_id;
      const std::size_t base = (static_cast<std::size_t>(y) * w + x) * 3;
      img8[base + 0] = static_cast<unsigned char>(std::lround(std::clamp(color.r, 0.0, 1.0) * 255.0));
      img8[base + 1] = static_cast<unsigned char>(std::lround(std::clamp(color.g, 0.0, 1.0) * 255.0));
      img8[base + 2] = static_cast<unsigned char>(std::lround(std::clamp(color.b, 0.0, 1.0) * 255.0));
    }
  }
}

}  // namespace

Dataset load_dataset(const fs::path& root, int ignore_index) {
  require(fs::is_directory(root), "dataset root does not exist: ", root.string());
  const auto image_files = list_pngs(root / "images");
  const auto mask_files = list_pngs(root / "masks");
  require(!image_files.empty(), "no samples found under ", (root / "images").string());

  std::map<std::string, fs::path> masks_by_stem;
  for (const auto& m : mask_files) masks_by_stem[m.stem().string()] = m;

  Dataset ds;
  ds.ignore_index = ignore_index;
  ds.class_names = read_class_names(root / "classes.txt");

  std::set<std::string> seen_stems;
  for (const auto& img_path : image_files) {
    const std::string stem = img_path.stem().string();
    const auto it = masks_by_stem.find(stem);
    require(it != masks_by_stem.end(), "image without mask: ", img_path.string());
    seen_stems.insert(stem);

    SegSample s;
    s.id = stem;
    s.image = read_image_png(img_path);
    s.mask = read_mask_png(it->second);
    s.meta["source"] = root.string();
    for (const std::int32_t v : s.mask.v) {
      if (v >= ds.n_classes() && v != ignore_index)
        fail("mask value ", v, " outside declared ", ds.n_classes(),
             " classes in ", it->second.string());
    }
    ds.samples.push_back(std::move(s));
  }
  for (const auto& m : mask_files) {
    require(seen_stems.count(m.stem().string()) > 0, "mask without image: ", m.string());
  }
  validate_dataset(ds);
  return ds;
}

void save_dataset(const Dataset& dataset, const fs::path& root) {
  fs::create_directories(root / "images");
  fs::create_directories(root / "masks");
  std::ofstream cls(root / "classes.txt");
  require(cls.good(), "cannot write ", (root / "classes.txt").string());
  for (const auto& name : dataset.class_names) cls << name << "\n";
  for (const auto& s : dataset.samples) {
    write_image_png(root / "images" / (s.id + ".png"), s.image);
    write_mask_png(root / "masks" / (s.id + ".png"), s.mask);
  }
}

Dataset synth_shapes_dataset(int n_samples, int n_classes, int height,
                             int width, std::uint64_t seed) {
  require(n_classes >= 2, "synthetic dataset needs n_classes >= 2 (background + shapes), got ", n_classes);
  require(n_classes - 1 <= kMaxShapeKinds, "at most ", kMaxShapeKinds,
          " foreground shape classes supported, got ", n_classes - 1);
  require(height >= 32 && width >= 32, "image size must be at least 32x32");
  require(n_samples >= 1, "n_samples must be positive");

  static const char* kKindNames[kMaxShapeKinds] = {
      "disk", "square", "triangle", "diamond", "ring",
      "cross", "hbar",   "vbar",     "ellipse", "frame"};

  Dataset ds;
  ds.ignore_index = kDefaultIgnoreIndex;
  ds.class_names.push_back("background");
  for (int c = 1; c < n_classes; ++c) ds.class_names.push_back(kKindNames[(c - 1) % kMaxShapeKinds]);

  Rng rng(seed);
  const int n_fg = n_classes - 1;
  for (int i = 0; i < n_samples; ++i) {
    std::vector<unsigned char> img8(static_cast<std::size_t>(height) * width * 3);
    Mask mask(height, width, 0);

    // Textured dark background so the task is not trivially constant.
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const double grad = 0.04 * static_cast<double>(y) / height;
        for (int c = 0; c < 3; ++c) {
          const double v = 0.10 + grad + 0.05 * rng.uniform();
          img8[(static_cast<std::size_t>(y) * width + x) * 3 + c] =
              static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
        }
      }
    }

    // Random extra shapes first, then a guaranteed class so the forced shape
    // is never fully occluded. Sample i forces class 1 + (i mod n_fg), which
    // makes every class present for n_samples >= n_fg.
    const int n_extra = rng.uniform_int(0, 2);
    std::vector<int> classes;
    for (int k = 0; k < n_extra; ++k) classes.push_back(rng.uniform_int(1, n_fg));
    classes.push_back(1 + i % n_fg);

    for (const int class_id : classes) {
      const int r = rng.uniform_int(height / 8, height / 4);
      const int cy = rng.uniform_int(r, height - 1 - r);
      const int cx = rng.uniform_int(r, width - 1 - r);
      const double hue = 360.0 * (class_id - 1) / n_fg;
      const double sat = 0.75 + 0.15 * rng.uniform();
      const double val = 0.75 + 0.20 * rng.uniform();
      draw_shape(img8, mask, height, width, class_id, cy, cx, r, make_rgb(hue, sat, val));
    }

    SegSample s;
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%05d", i);
    s.id = std::string("synth_") + buf;
    s.image = Image(height, width);
    for (std::size_t p = 0; p < img8.size(); ++p) s.image.px[p] = static_cast<float>(img8[p]) / 255.0f;
    s.mask = std::move(mask);
    s.meta["source"] = "synth_shapes";
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

const SegSample& validate_sample(const SegSample& sample, int n_classes,
                                 int ignore_index) {
  require(sample.image.height == sample.mask.height &&
              sample.image.width == sample.mask.width,
          "sample '", sample.id, "': image/mask shape mismatch (image ",
          sample.image.height, "x", sample.image.width, ", mask ",
          sample.mask.height, "x", sample.mask.width, ")");
  for (const float v : sample.image.px) {
    if (!(v >= 0.0f && v <= 1.0f))
      fail("sample '", sample.id, "': image value ", v, " outside [0,1]");
  }
  for (const std::int32_t v : sample.mask.v) {
    if ((v < 0 || v >= n_classes) && v != ignore_index)
      fail("sample '", sample.id, "': mask value ", v,
           " is not a declared class id or ignore_index");
  }
  return sample;
}

void validate_dataset(const Dataset& dataset) {
  std::set<std::string> ids;
  for (const auto& s : dataset.samples) {
    require(ids.insert(s.id).second, "duplicate sample id: ", s.id);
    validate_sample(s, dataset.n_classes(), dataset.ignore_index);
  }
}

}  // namespace endocss
