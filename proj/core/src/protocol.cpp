#include "endocss/protocol.hpp"

#include <algorithm>
#include <set>

#include "endocss/error.hpp"

namespace endocss {
namespace {

std::vector<bool> visibility_table(const std::vector<int>& visible, int max_id) {
  std::vector<bool> table(static_cast<std::size_t>(max_id) + 1, false);
  for (const int c : visible) {
    if (c >= 0 && c <= max_id) table[static_cast<std::size_t>(c)] = true;
  }
  table[0] = true;  // background is always visible
  return table;
}

std::string canonical_name(const std::string& name,
                           const std::map<std::string, std::string>& aliases) {
  const auto it = aliases.find(name);
  return it == aliases.end() ? name : it->second;
}

}  // namespace

std::vector<int> Protocol::seen_classes(int step) const {
  std::set<int> seen;
  for (int t = 0; t <= step && t < total_steps(); ++t)
    seen.insert(steps[static_cast<std::size_t>(t)].begin(),
                steps[static_cast<std::size_t>(t)].end());
  return {seen.begin(), seen.end()};
}

Protocol parse_protocol(const std::string& spec, int n_foreground_classes) {
  require(n_foreground_classes >= 1, "need at least one foreground class");
  const auto dash = spec.find('-');
  require(dash != std::string::npos && dash > 0 && dash + 1 < spec.size(),
          "protocol spec must look like 'a-b', got '", spec, "'");
  int initial = 0, per_step = 0;
  try {
    initial = std::stoi(spec.substr(0, dash));
    per_step = std::stoi(spec.substr(dash + 1));
  } catch (const std::exception&) {
    fail("protocol spec must look like 'a-b', got '", spec, "'");
  }
  require(initial >= 1 && per_step >= 1, "protocol counts must be positive: '", spec, "'");
  require(initial <= n_foreground_classes, "protocol '", spec, "' infeasible: initial step wants ",
          initial, " classes but only ", n_foreground_classes, " exist");
  require((n_foreground_classes - initial) % per_step == 0,
          "protocol '", spec, "' does not partition ", n_foreground_classes,
          " classes (", n_foreground_classes - initial, " left after the initial step, ",
          per_step, " per step)");

  Protocol p;
  p.spec_string = spec;
  p.mode = ProtocolMode::kSingleDataset;
  int next_id = 1;
  std::vector<int> group;
  for (int i = 0; i < initial; ++i) group.push_back(next_id++);
  p.steps.push_back(group);
  while (next_id <= n_foreground_classes) {
    group.clear();
    for (int i = 0; i < per_step; ++i) group.push_back(next_id++);
    p.steps.push_back(group);
  }
  return p;
}

Mask remap_to_visible(const Mask& mask, const std::vector<int>& visible,
                      int ignore_index) {
  int max_id = 0;
  for (const std::int32_t v : mask.v)
    if (v != ignore_index) max_id = std::max(max_id, static_cast<int>(v));
  const auto table = visibility_table(visible, max_id);

  Mask out = mask;
  for (auto& v : out.v) {
    if (v == ignore_index) continue;
    if (!table[static_cast<std::size_t>(v)]) v = 0;
  }
  return out;
}

Mask remap_labels(const Mask& mask, const StepView& step, int ignore_index) {
  return remap_to_visible(mask, step.seen_classes, ignore_index);
}

Dataset remap_dataset(const Dataset& dataset, const std::vector<int>& visible) {
  Dataset out = dataset;
  for (auto& s : out.samples) s.mask = remap_to_visible(s.mask, visible, dataset.ignore_index);
  return out;
}

std::vector<StepView> split_dataset(const Dataset& dataset, const Protocol& protocol,
                                    LabelPolicy policy) {
  require(protocol.mode == ProtocolMode::kSingleDataset,
          "split_dataset expects a single-dataset protocol; use build_cross_split");
  std::vector<int> class_to_step(dataset.class_names.size(), -1);
  for (int t = 0; t < protocol.total_steps(); ++t) {
    for (const int c : protocol.steps[static_cast<std::size_t>(t)]) {
      require(c >= 1 && c < dataset.n_classes(), "protocol references class id ", c,
              " outside the dataset's ", dataset.n_classes(), " classes");
      class_to_step[static_cast<std::size_t>(c)] = t;
    }
  }

  std::vector<StepView> views(static_cast<std::size_t>(protocol.total_steps()));
  for (int t = 0; t < protocol.total_steps(); ++t) {
    auto& view = views[static_cast<std::size_t>(t)];
    view.step_index = t;
    view.seen_classes = protocol.seen_classes(t);
    view.current_classes = protocol.steps[static_cast<std::size_t>(t)];
    view.train_set.class_names = dataset.class_names;
    view.train_set.ignore_index = dataset.ignore_index;
  }

  for (const auto& sample : dataset.samples) {
    int top_class = -1;
    for (const std::int32_t v : sample.mask.v) {
      if (v != dataset.ignore_index && v > top_class) top_class = v;
    }
    int step = 0;
    if (top_class < 1) {
      warn("sample '", sample.id, "' has no foreground class; assigned to step 0");
    } else {
      step = class_to_step[static_cast<std::size_t>(top_class)];
    }
    auto& view = views[static_cast<std::size_t>(step)];
    SegSample s = sample;
    const auto& visible = policy == LabelPolicy::kSeen ? view.seen_classes
                                                       : view.current_classes;
    s.mask = remap_to_visible(s.mask, visible, dataset.ignore_index);
    s.meta["task"] = std::to_string(step);
    view.train_set.samples.push_back(std::move(s));
  }
  return views;
}

Dataset unify_dataset(const Dataset& dataset, const Protocol& cross_protocol,
                      const std::map<std::string, std::string>& aliases) {
  std::map<std::string, int> unified_id;
  for (int i = 0; i < static_cast<int>(cross_protocol.class_names.size()); ++i)
    unified_id[cross_protocol.class_names[static_cast<std::size_t>(i)]] = i;

  std::vector<std::int32_t> table(dataset.class_names.size());
  for (std::size_t i = 0; i < dataset.class_names.size(); ++i) {
    const std::string canon = canonical_name(dataset.class_names[i], aliases);
    const auto it = unified_id.find(canon);
    require(it != unified_id.end(), "class '", canon, "' missing from the unified class space");
    table[i] = it->second;
  }

  Dataset out;
  out.ignore_index = dataset.ignore_index;
  out.class_names = cross_protocol.class_names;
  out.samples = dataset.samples;
  for (auto& s : out.samples) {
    for (auto& v : s.mask.v) {
      if (v == dataset.ignore_index) continue;
      v = table[static_cast<std::size_t>(v)];
    }
  }
  return out;
}

CrossSplit build_cross_split(const Dataset& step0, const Dataset& step1,
                             const std::map<std::string, std::string>& aliases) {
  require(step0.ignore_index == step1.ignore_index,
          "cross-dataset setup needs a shared ignore_index");

  CrossSplit cs;
  Protocol& p = cs.protocol;
  p.mode = ProtocolMode::kCrossDataset;
  p.spec_string = "cross";

  // Unified id space: step-0 names keep their ids, step-1-only names append.
  p.class_names = step0.class_names;
  std::map<std::string, int> unified_id;
  for (int i = 0; i < static_cast<int>(p.class_names.size()); ++i)
    unified_id[canonical_name(p.class_names[static_cast<std::size_t>(i)], aliases)] = i;

  std::vector<int> ids0, ids1;
  for (int i = 1; i < step0.n_classes(); ++i) ids0.push_back(i);
  for (int i = 1; i < step1.n_classes(); ++i) {
    const std::string canon = canonical_name(step1.class_names[static_cast<std::size_t>(i)], aliases);
    auto it = unified_id.find(canon);
    if (it == unified_id.end()) {
      const int id = static_cast<int>(p.class_names.size());
      p.class_names.push_back(canon);
      it = unified_id.emplace(canon, id).first;
    }
    ids1.push_back(it->second);
  }
  std::sort(ids1.begin(), ids1.end());
  p.steps = {ids0, ids1};

  const std::set<int> set0(ids0.begin(), ids0.end());
  const std::set<int> set1(ids1.begin(), ids1.end());
  for (const int c : ids0) {
    (set1.count(c) ? cs.overlapping_ids : cs.old_only_ids).push_back(c);
  }
  for (const int c : ids1) {
    if (!set0.count(c)) cs.new_only_ids.push_back(c);
  }

  const Dataset unified1 = unify_dataset(step1, p, aliases);
  for (int t = 0; t < 2; ++t) {
    StepView view;
    view.step_index = t;
    view.seen_classes = p.seen_classes(t);
    view.current_classes = p.steps[static_cast<std::size_t>(t)];
    view.train_set = t == 0 ? step0 : unified1;
    view.train_set.class_names = p.class_names;
    for (auto& s : view.train_set.samples) s.meta["task"] = std::to_string(t);
    cs.step_views.push_back(std::move(view));
  }
  return cs;
}

std::vector<std::pair<std::string, std::vector<int>>> report_groups(
    const Protocol& protocol, int upto_step, const CrossSplit* cross) {
  std::vector<std::pair<std::string, std::vector<int>>> groups;
  if (protocol.mode == ProtocolMode::kCrossDataset && cross != nullptr && upto_step >= 1) {
    groups.emplace_back("RC", cross->overlapping_ids);
    groups.emplace_back("OC", cross->old_only_ids);
    groups.emplace_back("NC", cross->new_only_ids);
  } else {
    for (int t = 0; t <= upto_step && t < protocol.total_steps(); ++t) {
      const auto& group = protocol.steps[static_cast<std::size_t>(t)];
      const int lo = *std::min_element(group.begin(), group.end());
      const int hi = *std::max_element(group.begin(), group.end());
      std::string name;
      if (t == 0) {
        name = "0-" + std::to_string(hi);  // Table-style initial column spans background
      } else if (lo == hi) {
        name = std::to_string(lo);
      } else {
        name = std::to_string(lo) + "-" + std::to_string(hi);
      }
      std::vector<int> ids = group;
      if (t == 0) ids.insert(ids.begin(), 0);
      groups.emplace_back(name, ids);
    }
  }
  groups.emplace_back("All", protocol.seen_classes(upto_step));
  return groups;
}

}  // namespace endocss
