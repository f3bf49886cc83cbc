#pragma once

#include <map>
#include <string>
#include <vector>

#include "endocss/datamodel.hpp"

namespace endocss {

enum class ProtocolMode { kSingleDataset, kCrossDataset };

/// How labels outside the current step's visibility are rewritten.
/// kSeen keeps every already-introduced class labeled (overlapped setting);
/// kCurrentOnly labels only the step's own classes (disjoint setting).
enum class LabelPolicy { kSeen, kCurrentOnly };

/// Ordered class-group sequence defining the continual steps.
struct Protocol {
  std::vector<std::vector<int>> steps;   // step t introduces steps[t]
  std::vector<std::string> class_names;  // full (unified) name space, id 0 = background
  ProtocolMode mode = ProtocolMode::kSingleDataset;
  std::string spec_string;

  int total_steps() const { return static_cast<int>(steps.size()); }
  /// Foreground ids visible after step t (union of groups 0..t), ascending.
  std::vector<int> seen_classes(int step) const;
};

/// One step's training view: labels remapped to the step's visible classes.
struct StepView {
  int step_index = 0;
  Dataset train_set;
  std::vector<int> seen_classes;     // ascending, foreground ids
  std::vector<int> current_classes;  // the classes this step introduces
};

/// Parses an `a-b` schedule: a classes in the initial step, then b per
/// following step until the foreground classes are exhausted.
Protocol parse_protocol(const std::string& spec, int n_foreground_classes);

/// Pixels of classes not in `visible` become background 0; visible classes
/// and ignore_index pass through.
Mask remap_to_visible(const Mask& mask, const std::vector<int>& visible,
                      int ignore_index);
Mask remap_labels(const Mask& mask, const StepView& step, int ignore_index);

/// Assigns every sample to exactly one step (the step of its highest-index
/// present foreground class) and remaps labels per step.
std::vector<StepView> split_dataset(const Dataset& dataset, const Protocol& protocol,
                                    LabelPolicy policy = LabelPolicy::kSeen);

Dataset remap_dataset(const Dataset& dataset, const std::vector<int>& visible);

/// Two-dataset setting: each source dataset is one step; class names shared
/// between the two (after alias resolution) are unified to one id.
struct CrossSplit {
  Protocol protocol;
  std::vector<StepView> step_views;
  std::vector<int> overlapping_ids;  // RC: classes present in both datasets
  std::vector<int> old_only_ids;     // OC: step-0-only classes
  std::vector<int> new_only_ids;     // NC: step-1-only classes
};

/// aliases maps a source-dataset class name to its canonical name.
CrossSplit build_cross_split(const Dataset& step0, const Dataset& step1,
                             const std::map<std::string, std::string>& aliases = {});

/// Re-ids a dataset's labels into the unified name space of a cross protocol.
Dataset unify_dataset(const Dataset& dataset, const Protocol& cross_protocol,
                      const std::map<std::string, std::string>& aliases = {});

/// Named class groups for step-t reports: per-step column groups plus "All"
/// in single-dataset mode, RC/OC/NC/All in cross mode.
std::vector<std::pair<std::string, std::vector<int>>> report_groups(
    const Protocol& protocol, int upto_step,
    const CrossSplit* cross = nullptr);

}  // namespace endocss
