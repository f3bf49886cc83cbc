#include "endocss/corruption.hpp"

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <jpeglib.h>
#include <nlohmann/json.hpp>

#include "corruption_levels_json.hpp"
#include "endocss/error.hpp"
#include "endocss/metrics.hpp"

namespace endocss {
namespace {

const std::set<std::string> kStochastic = {"gaussian_noise", "shot_noise", "impulse_noise",
                                           "speckle_noise"};

Image per_pixel(const Image& in, float (*f)(float, double), double p) {
  Image out(in.height, in.width);
  for (std::size_t i = 0; i < in.px.size(); ++i) out.px[i] = clamp01(f(in.px[i], p));
  return out;
}

Image blur_with_kernel(const Image& in, const std::vector<float>& kernel, int radius,
                       bool separable) {
  Image out = in;
  if (separable) {
    // Horizontal then vertical pass with clamp-to-edge sampling.
    Image tmp(in.height, in.width);
    for (int y = 0; y < in.height; ++y)
      for (int x = 0; x < in.width; ++x)
        for (int c = 0; c < 3; ++c) {
          float acc = 0.f;
          for (int k = -radius; k <= radius; ++k) {
            const int xs = std::clamp(x + k, 0, in.width - 1);
            acc += kernel[static_cast<std::size_t>(k + radius)] * in.at(y, xs, c);
          }
          tmp.at(y, x, c) = acc;
        }
    for (int y = 0; y < in.height; ++y)
      for (int x = 0; x < in.width; ++x)
        for (int c = 0; c < 3; ++c) {
          float acc = 0.f;
          for (int k = -radius; k <= radius; ++k) {
            const int ys = std::clamp(y + k, 0, in.height - 1);
            acc += kernel[static_cast<std::size_t>(k + radius)] * tmp.at(ys, x, c);
          }
          out.at(y, x, c) = clamp01(acc);
        }
    return out;
  }
  const int side = 2 * radius + 1;
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x)
      for (int c = 0; c < 3; ++c) {
        float acc = 0.f;
        for (int ky = -radius; ky <= radius; ++ky)
          for (int kx = -radius; kx <= radius; ++kx) {
            const float kv = kernel[static_cast<std::size_t>((ky + radius) * side + kx + radius)];
            if (kv == 0.f) continue;
            const int ys = std::clamp(y + ky, 0, in.height - 1);
            const int xs = std::clamp(x + kx, 0, in.width - 1);
            acc += kv * in.at(ys, xs, c);
          }
        out.at(y, x, c) = clamp01(acc);
      }
  return out;
}

Image gaussian_blur_image(const Image& in, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<float> kernel(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    const double v = std::exp(-0.5 * (k / sigma) * (k / sigma));
    kernel[static_cast<std::size_t>(k + radius)] = static_cast<float>(v);
    sum += v;
  }
  for (float& v : kernel) v = static_cast<float>(v / sum);
  return blur_with_kernel(in, kernel, radius, true);
}

Image defocus_blur_image(const Image& in, double radius_px) {
  const int radius = std::max(1, static_cast<int>(std::lround(radius_px)));
  const int side = 2 * radius + 1;
  std::vector<float> kernel(static_cast<std::size_t>(side) * side, 0.f);
  double sum = 0.0;
  for (int ky = -radius; ky <= radius; ++ky)
    for (int kx = -radius; kx <= radius; ++kx)
      if (ky * ky + kx * kx <= radius * radius + 1) {
        kernel[static_cast<std::size_t>((ky + radius) * side + kx + radius)] = 1.f;
        sum += 1.0;
      }
  for (float& v : kernel) v = static_cast<float>(v / sum);
  return blur_with_kernel(in, kernel, radius, false);
}

Image pixelate_image(const Image& in, double keep_fraction) {
  const int dh = std::max(1, static_cast<int>(std::lround(in.height * keep_fraction)));
  const int dw = std::max(1, static_cast<int>(std::lround(in.width * keep_fraction)));
  const Image small = resize_bilinear(in, dh, dw);
  Image out(in.height, in.width);
  for (int y = 0; y < in.height; ++y) {
    const int ys = std::min(dh - 1, y * dh / in.height);
    for (int x = 0; x < in.width; ++x) {
      const int xs = std::min(dw - 1, x * dw / in.width);
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = small.at(ys, xs, c);
    }
  }
  return out;
}

struct JpegErrorMgr {
  jpeg_error_mgr pub;
  std::jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
  std::longjmp(err->jump, 1);
}

struct JpegBuffer {
  unsigned char* data = nullptr;
  unsigned long size = 0;
  ~JpegBuffer() {
    if (data) std::free(data);
  }
};

// All C++ objects are constructed before the setjmp points so the longjmp
// error path never skips an initialization.
Image jpeg_roundtrip(const Image& in, int quality) {
  std::vector<unsigned char> rgb8(in.px.size());
  for (std::size_t i = 0; i < in.px.size(); ++i)
    rgb8[i] = static_cast<unsigned char>(std::lround(clamp01(in.px[i]) * 255.f));
  Image out(in.height, in.width);
  std::vector<unsigned char> rowbuf(static_cast<std::size_t>(in.width) * 3);
  JpegBuffer buf;

  {
    jpeg_compress_struct cinfo;
    JpegErrorMgr err;
    cinfo.err = jpeg_std_error(&err.pub);
    err.pub.error_exit = jpeg_error_exit;
    if (setjmp(err.jump)) {
      jpeg_destroy_compress(&cinfo);
      fail("jpeg compression failed");
    }
    jpeg_create_compress(&cinfo);
    jpeg_mem_dest(&cinfo, &buf.data, &buf.size);
    cinfo.image_width = static_cast<JDIMENSION>(in.width);
    cinfo.image_height = static_cast<JDIMENSION>(in.height);
    cinfo.input_components = 3;
    cinfo.in_color_space = JCS_RGB;
    jpeg_set_defaults(&cinfo);
    jpeg_set_quality(&cinfo, quality, TRUE);
    jpeg_start_compress(&cinfo, TRUE);
    while (cinfo.next_scanline < cinfo.image_height) {
      JSAMPROW row = rgb8.data() + static_cast<std::size_t>(cinfo.next_scanline) * in.width * 3;
      jpeg_write_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_compress(&cinfo);
    jpeg_destroy_compress(&cinfo);
  }

  {
    jpeg_decompress_struct dinfo;
    JpegErrorMgr err;
    dinfo.err = jpeg_std_error(&err.pub);
    err.pub.error_exit = jpeg_error_exit;
    if (setjmp(err.jump)) {
      jpeg_destroy_decompress(&dinfo);
      fail("jpeg decompression failed");
    }
    jpeg_create_decompress(&dinfo);
    jpeg_mem_src(&dinfo, buf.data, buf.size);
    jpeg_read_header(&dinfo, TRUE);
    dinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&dinfo);
    require(static_cast<int>(dinfo.output_width) == in.width &&
                static_cast<int>(dinfo.output_height) == in.height,
            "jpeg round-trip changed dimensions");
    int y = 0;
    while (dinfo.output_scanline < dinfo.output_height) {
      JSAMPROW row = rowbuf.data();
      jpeg_read_scanlines(&dinfo, &row, 1);
      for (int x = 0; x < in.width * 3; ++x)
        out.px[static_cast<std::size_t>(y) * in.width * 3 + static_cast<std::size_t>(x)] =
            static_cast<float>(rowbuf[static_cast<std::size_t>(x)]) / 255.f;
      ++y;
    }
    jpeg_finish_decompress(&dinfo);
    jpeg_destroy_decompress(&dinfo);
  }
  return out;
}

std::optional<double> foreground_miou(const ConfusionMatrix& cm, bool include_background) {
  const auto ious = iou_per_class(cm);
  std::vector<int> ids;
  for (int c = include_background ? 0 : 1; c < cm.n_classes(); ++c) ids.push_back(c);
  return mean_iou(ious, ids);
}

}  // namespace

const std::vector<std::string>& default_corruptions() {
  static const std::vector<std::string> names = {
      "gaussian_noise", "shot_noise", "impulse_noise",    "speckle_noise",
      "gaussian_blur",  "defocus_blur", "pixelate",       "jpeg_compression",
      "brightness",     "contrast",   "saturate",         "gamma"};
  return names;
}

const CorruptionRegistry& CorruptionRegistry::builtin() {
  static const CorruptionRegistry reg =
      CorruptionRegistry::from_json_text(generated::kCorruptionLevelsJson);
  return reg;
}

CorruptionRegistry CorruptionRegistry::from_json_text(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  require(!j.is_discarded(), "severity table is not valid JSON");
  require(j.is_object(), "severity table must be a JSON object keyed by corruption name");

  CorruptionRegistry reg;
  for (const auto& [name, entry] : j.items()) {
    require(std::find(default_corruptions().begin(), default_corruptions().end(), name) !=
                default_corruptions().end(),
            "severity table lists unknown corruption '", name, "'");
    CorruptionInfo info;
    info.name = name;
    info.param = entry.at("param").get<std::string>();
    info.direction = entry.at("direction").get<std::string>();
    require(info.direction == "increasing" || info.direction == "decreasing",
            "corruption '", name, "' direction must be increasing or decreasing, got '",
            info.direction, "'");
    const auto levels = entry.at("levels").get<std::vector<double>>();
    require(levels.size() == 5, "corruption '", name, "' needs 5 severity levels, got ",
            levels.size());
    std::copy(levels.begin(), levels.end(), info.levels.begin());
    for (int s = 1; s < 5; ++s) {
      if (info.direction == "increasing")
        require(info.levels[s] >= info.levels[s - 1], "corruption '", name,
                "' levels must be non-decreasing");
      else
        require(info.levels[s] <= info.levels[s - 1], "corruption '", name,
                "' levels must be non-increasing");
    }
    info.stochastic = kStochastic.count(name) > 0;
    reg.table_[name] = std::move(info);
  }
  for (const std::string& name : default_corruptions())
    require(reg.table_.count(name) > 0, "severity table is missing corruption '", name, "'");
  return reg;
}

CorruptionRegistry CorruptionRegistry::from_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open severity table: ", path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json_text(buf.str());
}

bool CorruptionRegistry::has(const std::string& name) const {
  return name == "identity" || table_.count(name) > 0;
}

const CorruptionInfo& CorruptionRegistry::info(const std::string& name) const {
  const auto it = table_.find(name);
  require(it != table_.end(), "unregistered corruption '", name, "'");
  return it->second;
}

std::vector<std::string> CorruptionRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : table_) out.push_back(name);
  return out;
}

double CorruptionRegistry::level(const std::string& name, int severity) const {
  require(severity >= 1 && severity <= 5, "severity must be in 1..5, got ", severity);
  return info(name).levels[static_cast<std::size_t>(severity - 1)];
}

Image CorruptionRegistry::apply(const Image& image, const CorruptionSpec& spec,
                                Rng& rng) const {
  require(spec.severity >= 1 && spec.severity <= 5, "severity must be in 1..5, got ",
          spec.severity);
  if (spec.name == "identity") return image;
  require(table_.count(spec.name) > 0, "unregistered corruption '", spec.name, "'");
  const double p = level(spec.name, spec.severity);

  if (spec.name == "gaussian_noise") {
    Image out(image.height, image.width);
    for (std::size_t i = 0; i < image.px.size(); ++i)
      out.px[i] = clamp01(image.px[i] + static_cast<float>(p * rng.normal()));
    return out;
  }
  if (spec.name == "shot_noise") {
    Image out(image.height, image.width);
    for (std::size_t i = 0; i < image.px.size(); ++i)
      out.px[i] = clamp01(static_cast<float>(
          static_cast<double>(rng.poisson(static_cast<double>(image.px[i]) * p)) / p));
    return out;
  }
  if (spec.name == "impulse_noise") {
    Image out = image;
    for (int y = 0; y < image.height; ++y)
      for (int x = 0; x < image.width; ++x)
        if (rng.bernoulli(p)) {
          const float v = rng.bernoulli(0.5) ? 1.f : 0.f;
          for (int c = 0; c < 3; ++c) out.at(y, x, c) = v;
        }
    return out;
  }
  if (spec.name == "speckle_noise") {
    Image out(image.height, image.width);
    for (std::size_t i = 0; i < image.px.size(); ++i)
      out.px[i] = clamp01(image.px[i] * static_cast<float>(1.0 + p * rng.normal()));
    return out;
  }
  if (spec.name == "gaussian_blur") return gaussian_blur_image(image, p);
  if (spec.name == "defocus_blur") return defocus_blur_image(image, p);
  if (spec.name == "pixelate") return pixelate_image(image, p);
  if (spec.name == "jpeg_compression")
    return jpeg_roundtrip(image, static_cast<int>(std::lround(p)));
  if (spec.name == "brightness")
    return per_pixel(image, [](float v, double b) { return v + static_cast<float>(b); }, p);
  if (spec.name == "contrast") {
    double mean = 0.0;
    for (const float v : image.px) mean += v;
    mean /= static_cast<double>(image.px.size());
    Image out(image.height, image.width);
    for (std::size_t i = 0; i < image.px.size(); ++i)
      out.px[i] = clamp01(static_cast<float>((image.px[i] - mean) * p + mean));
    return out;
  }
  if (spec.name == "saturate") {
    Image out(image.height, image.width);
    for (int y = 0; y < image.height; ++y)
      for (int x = 0; x < image.width; ++x) {
        float h, s, v;
        rgb_to_hsv(image.at(y, x, 0), image.at(y, x, 1), image.at(y, x, 2), h, s, v);
        s = std::min(1.f, s * static_cast<float>(p));
        float r, g, b;
        hsv_to_rgb(h, s, v, r, g, b);
        out.at(y, x, 0) = clamp01(r);
        out.at(y, x, 1) = clamp01(g);
        out.at(y, x, 2) = clamp01(b);
      }
    return out;
  }
  if (spec.name == "gamma")
    return per_pixel(
        image, [](float v, double g) { return std::pow(v, static_cast<float>(g)); }, p);
  fail("corruption '", spec.name, "' has no implementation");
}

Image corrupt(const Image& image, const CorruptionSpec& spec, Rng& rng) {
  return CorruptionRegistry::builtin().apply(image, spec, rng);
}

RobustnessTable robustness_eval(const SegModel& model, const Dataset& test_set,
                                const std::vector<std::string>& corruption_names,
                                const std::vector<int>& severities, std::uint64_t seed,
                                const CorruptionRegistry& registry, bool include_background) {
  require(!corruption_names.empty(), "empty corruption list");
  require(!test_set.samples.empty(), "robustness evaluation needs a non-empty test set");
  for (const std::string& name : corruption_names)
    require(registry.has(name), "unregistered corruption '", name, "'");
  std::vector<int> levels = severities;
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  require(!levels.empty(), "empty severity list");
  for (const int s : levels) require(s >= 1 && s <= 5, "severity must be in 1..5, got ", s);

  RobustnessTable table;
  table.severities = levels;
  table.include_background = include_background;

  {
    ConfusionMatrix cm(model.n_classes(), test_set.ignore_index);
    for (const SegSample& sample : test_set.samples) {
      const TensorI pred =
          argmax_labels(model.forward(to_tensor(std::vector<const Image*>{&sample.image})));
      cm.accumulate(to_mask(pred, 0), sample.mask);
    }
    table.clean_miou = foreground_miou(cm, include_background);
  }

  for (const std::string& name : corruption_names) {
    for (const int severity : levels) {
      ConfusionMatrix cm(model.n_classes(), test_set.ignore_index);
      for (std::size_t i = 0; i < test_set.samples.size(); ++i) {
        const SegSample& sample = test_set.samples[i];
        Rng rng(derive_seed(seed, msg(name, ":", severity), i));
        const Image corrupted = registry.apply(sample.image, {name, severity}, rng);
        const TensorI pred =
            argmax_labels(model.forward(to_tensor(std::vector<const Image*>{&corrupted})));
        cm.accumulate(to_mask(pred, 0), sample.mask);
      }
      table.rows.push_back({name, severity, foreground_miou(cm, include_background)});
    }
  }

  for (const int severity : levels) {
    double sum = 0.0;
    long n = 0;
    for (const RobustnessRow& row : table.rows)
      if (row.severity == severity && row.miou) {
        sum += *row.miou;
        ++n;
      }
    table.severity_mean.push_back(n > 0 ? std::optional<double>(sum / static_cast<double>(n))
                                        : std::nullopt);
  }
  return table;
}

void write_robustness_csv(const RobustnessTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), "cannot open robustness csv for writing: ", path.string());
  out << "corruption,severity,miou\n";
  auto fmt = [](const std::optional<double>& v) {
    if (!v) return std::string();
    std::ostringstream os;
    os << std::fixed << std::setprecision(6) << *v;
    return os.str();
  };
  out << "clean,0," << fmt(table.clean_miou) << "\n";
  for (const RobustnessRow& row : table.rows)
    out << row.corruption << "," << row.severity << "," << fmt(row.miou) << "\n";
  for (std::size_t i = 0; i < table.severities.size(); ++i)
    out << "ALL," << table.severities[i] << "," << fmt(table.severity_mean[i]) << "\n";
  out.flush();
  require(out.good(), "failed writing robustness csv: ", path.string());
}

void write_robustness_svg(const RobustnessTable& table, const std::filesystem::path& path) {
  const int width = 640, height = 420, ml = 60, mr = 20, mt = 30, mb = 50;
  const double plot_w = width - ml - mr, plot_h = height - mt - mb;
  auto sx = [&](double severity) { return ml + plot_w * severity / 5.0; };
  auto sy = [&](double miou) { return mt + plot_h * (1.0 - miou); };

  std::ofstream out(path, std::ios::trunc);
  require(out.good(), "cannot open plot for writing: ", path.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << width / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">"
      << "severity-averaged mIoU</text>\n";
  for (int i = 0; i <= 5; ++i) {
    out << "<line x1=\"" << sx(i) << "\" y1=\"" << mt << "\" x2=\"" << sx(i) << "\" y2=\""
        << mt + plot_h << "\" stroke=\"#dddddd\"/>\n";
    out << "<text x=\"" << sx(i) << "\" y=\"" << height - mb + 18
        << "\" text-anchor=\"middle\" font-size=\"12\">" << i << "</text>\n";
  }
  for (int i = 0; i <= 4; ++i) {
    const double v = i / 4.0;
    out << "<line x1=\"" << ml << "\" y1=\"" << sy(v) << "\" x2=\"" << ml + plot_w
        << "\" y2=\"" << sy(v) << "\" stroke=\"#dddddd\"/>\n";
    out << "<text x=\"" << ml - 8 << "\" y=\"" << sy(v) + 4
        << "\" text-anchor=\"end\" font-size=\"12\">" << std::fixed << std::setprecision(2)
        << v << "</text>\n";
  }
  out << "<text x=\"" << width / 2 << "\" y=\"" << height - 12
      << "\" text-anchor=\"middle\" font-size=\"12\">corruption severity (0 = clean)</text>\n";

  std::ostringstream points;
  if (table.clean_miou) points << sx(0) << "," << sy(*table.clean_miou) << " ";
  for (std::size_t i = 0; i < table.severities.size(); ++i)
    if (table.severity_mean[i])
      points << sx(table.severities[i]) << "," << sy(*table.severity_mean[i]) << " ";
  out << "<polyline fill=\"none\" stroke=\"#c0392b\" stroke-width=\"2\" points=\""
      << points.str() << "\"/>\n";
  if (table.clean_miou)
    out << "<circle cx=\"" << sx(0) << "\" cy=\"" << sy(*table.clean_miou)
        << "\" r=\"3\" fill=\"#2c3e50\"/>\n";
  for (std::size_t i = 0; i < table.severities.size(); ++i)
    if (table.severity_mean[i])
      out << "<circle cx=\"" << sx(table.severities[i]) << "\" cy=\""
          << sy(*table.severity_mean[i]) << "\" r=\"3\" fill=\"#2c3e50\"/>\n";
  out << "</svg>\n";
  out.flush();
  require(out.good(), "failed writing plot: ", path.string());
}

}  // namespace endocss
