#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "endocss/datamodel.hpp"
#include "endocss/image.hpp"
#include "endocss/tensor.hpp"

namespace endocss {

/// Pixel-count confusion matrix; rows are ground truth, columns prediction.
/// Pixels whose ground truth equals ignore_index are skipped entirely.
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(int n_classes, int ignore_index = kDefaultIgnoreIndex);

  void accumulate(const Mask& pred, const Mask& gt);
  /// Accepts {H,W} or {B,H,W} label tensors.
  void accumulate(const TensorI& pred, const TensorI& gt);
  void merge(const ConfusionMatrix& other);

  long at(int gt, int pred) const {
    return counts_[static_cast<std::size_t>(gt) * static_cast<std::size_t>(n_classes_) +
                   static_cast<std::size_t>(pred)];
  }
  int n_classes() const { return n_classes_; }
  int ignore_index() const { return ignore_index_; }
  long total() const;

 private:
  void bump(std::int32_t gt, std::int32_t pred);

  int n_classes_ = 0;
  int ignore_index_ = kDefaultIgnoreIndex;
  std::vector<long> counts_;
};

/// IoU_c = TP / (TP + FP + FN). Classes with zero union are undefined and
/// come back as nullopt; they are excluded from every mean.
std::vector<std::optional<double>> iou_per_class(const ConfusionMatrix& cm);

/// Mean of the defined IoUs among `class_ids`; nullopt when none is defined.
std::optional<double> mean_iou(const std::vector<std::optional<double>>& ious,
                               const std::vector<int>& class_ids);

using ClassGroups = std::vector<std::pair<std::string, std::vector<int>>>;

struct GroupedReport {
  std::vector<std::string> class_names;         // index == class id
  std::vector<std::optional<double>> class_iou;
  ClassGroups groups;                           // groups kept, input order
  std::vector<std::optional<double>> group_miou;
  bool include_background = false;
};

/// Group means skip the background class (id 0) unless include_background is
/// set. Groups left empty by that policy are dropped with a warning.
GroupedReport grouped_report(const ConfusionMatrix& cm, const ClassGroups& groups,
                             const std::vector<std::string>& class_names,
                             bool include_background = false);

}  // namespace endocss
