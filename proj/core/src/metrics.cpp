#include "endocss/metrics.hpp"

#include "endocss/error.hpp"

namespace endocss {

ConfusionMatrix::ConfusionMatrix(int n_classes, int ignore_index)
    : n_classes_(n_classes), ignore_index_(ignore_index) {
  require(n_classes >= 1, "confusion matrix needs at least 1 class, got ", n_classes);
  require(ignore_index < 0 || ignore_index >= n_classes,
          "ignore_index ", ignore_index, " collides with class ids [0,", n_classes, ")");
  counts_.assign(static_cast<std::size_t>(n_classes) * static_cast<std::size_t>(n_classes), 0);
}

void ConfusionMatrix::bump(std::int32_t gt, std::int32_t pred) {
  if (gt == ignore_index_) return;
  require(gt >= 0 && gt < n_classes_, "ground-truth label ", gt, " outside [0,", n_classes_, ")");
  require(pred >= 0 && pred < n_classes_, "predicted label ", pred, " outside [0,", n_classes_,
          ")");
  ++counts_[static_cast<std::size_t>(gt) * static_cast<std::size_t>(n_classes_) +
            static_cast<std::size_t>(pred)];
}

void ConfusionMatrix::accumulate(const Mask& pred, const Mask& gt) {
  require(pred.height == gt.height && pred.width == gt.width,
          "prediction and ground truth differ in size: ", pred.width, "x", pred.height, " vs ",
          gt.width, "x", gt.height);
  for (std::size_t i = 0; i < gt.v.size(); ++i) bump(gt.v[i], pred.v[i]);
}

void ConfusionMatrix::accumulate(const TensorI& pred, const TensorI& gt) {
  require(pred.same_shape(gt), "prediction and ground truth tensors differ in shape");
  require(gt.rank() == 2 || gt.rank() == 3, "expected {H,W} or {B,H,W} labels");
  for (long i = 0; i < gt.numel(); ++i) bump(gt[i], pred[i]);
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  require(n_classes_ == other.n_classes_ && ignore_index_ == other.ignore_index_,
          "cannot merge confusion matrices with different class spaces");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

long ConfusionMatrix::total() const {
  long n = 0;
  for (const long c : counts_) n += c;
  return n;
}

std::vector<std::optional<double>> iou_per_class(const ConfusionMatrix& cm) {
  const int n = cm.n_classes();
  std::vector<std::optional<double>> ious(static_cast<std::size_t>(n));
  for (int c = 0; c < n; ++c) {
    const long tp = cm.at(c, c);
    long row = 0, col = 0;
    for (int j = 0; j < n; ++j) {
      row += cm.at(c, j);
      col += cm.at(j, c);
    }
    const long uni = row + col - tp;
    if (uni > 0)
      ious[static_cast<std::size_t>(c)] = static_cast<double>(tp) / static_cast<double>(uni);
  }
  return ious;
}

std::optional<double> mean_iou(const std::vector<std::optional<double>>& ious,
                               const std::vector<int>& class_ids) {
  double sum = 0.0;
  long n = 0;
  for (const int c : class_ids) {
    require(c >= 0 && c < static_cast<int>(ious.size()), "group references unknown class ", c);
    if (ious[static_cast<std::size_t>(c)]) {
      sum += *ious[static_cast<std::size_t>(c)];
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

GroupedReport grouped_report(const ConfusionMatrix& cm, const ClassGroups& groups,
                             const std::vector<std::string>& class_names,
                             bool include_background) {
  require(static_cast<int>(class_names.size()) == cm.n_classes(),
          "class name list has ", class_names.size(), " entries for ", cm.n_classes(),
          " classes");
  GroupedReport rep;
  rep.class_names = class_names;
  rep.class_iou = iou_per_class(cm);
  rep.include_background = include_background;
  for (const auto& [name, ids] : groups) {
    std::vector<int> kept;
    for (const int c : ids) {
      require(c >= 0 && c < cm.n_classes(), "group '", name, "' references unknown class ", c);
      if (c == 0 && !include_background) continue;
      kept.push_back(c);
    }
    if (kept.empty()) {
      warn("report group '", name, "' has no classes to average; omitted");
      continue;
    }
    rep.group_miou.push_back(mean_iou(rep.class_iou, kept));
    rep.groups.emplace_back(name, std::move(kept));
  }
  return rep;
}

}  // namespace endocss
