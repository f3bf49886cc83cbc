#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "endocss/image.hpp"

namespace endocss {

constexpr int kDefaultIgnoreIndex = 255;

/// One image + label mask pair.
struct SegSample {
  std::string id;
  Image image;
  Mask mask;
  std::map<std::string, std::string> meta;  // source dataset, origin task, ...
};

/// Immutable after construction; safe to share across readers.
struct Dataset {
  std::vector<SegSample> samples;
  std::vector<std::string> class_names;  // index == class id; id 0 is background
  int ignore_index = kDefaultIgnoreIndex;

  int n_classes() const { return static_cast<int>(class_names.size()); }
  int n_foreground() const { return n_classes() - 1; }
  long size() const { return static_cast<long>(samples.size()); }
};

/// Loads `root/images/*.png` + `root/masks/*.png` (matched stems) and
/// `root/classes.txt` (one name per line, line index == class id).
/// Deterministic ordering by filename.
Dataset load_dataset(const std::filesystem::path& root,
                     int ignore_index = kDefaultIgnoreIndex);

/// Writes the same directory layout load_dataset reads.
void save_dataset(const Dataset& dataset, const std::filesystem::path& root);

/// Deterministic synthetic dataset: one geometric shape kind per foreground
/// class, random placement, exact masks. n_classes counts background, so
/// n_classes=5 means background + 4 shape classes. Stands in for real
/// endoscopy data in desk-scale runs.
Dataset synth_shapes_dataset(int n_samples, int n_classes, int height,
                             int width, std::uint64_t seed);

/// Returns the sample if every invariant holds; throws naming the violated
/// field otherwise.
const SegSample& validate_sample(const SegSample& sample, int n_classes,
                                 int ignore_index);

void validate_dataset(const Dataset& dataset);

}  // namespace endocss
