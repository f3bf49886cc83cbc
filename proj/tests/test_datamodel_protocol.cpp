#include <doctest/doctest.h>

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "endocss/datamodel.hpp"
#include "endocss/error.hpp"
#include "endocss/protocol.hpp"

#include "test_support.hpp"

using namespace endocss;
using testsupport::TempDir;

TEST_CASE("synthetic shapes are deterministic and well formed") {
  const Dataset a = synth_shapes_dataset(12, 4, 32, 32, 77);
  const Dataset b = synth_shapes_dataset(12, 4, 32, 32, 77);
  const Dataset c = synth_shapes_dataset(12, 4, 32, 32, 78);
  REQUIRE(a.size() == 12);
  CHECK(a.n_classes() == 4);
  CHECK(a.class_names[0] == "background");

  bool any_differs = false;
  std::set<int> fg_seen;
  for (long i = 0; i < a.size(); ++i) {
    CHECK(a.samples[i].id == b.samples[i].id);
    CHECK(a.samples[i].image.px == b.samples[i].image.px);
    CHECK(a.samples[i].mask.v == b.samples[i].mask.v);
    if (a.samples[i].image.px != c.samples[i].image.px) any_differs = true;
    for (const auto v : a.samples[i].mask.v) {
      CHECK(v >= 0);
      CHECK(v < 4);
      if (v > 0) fg_seen.insert(v);
    }
    validate_sample(a.samples[i], a.n_classes(), a.ignore_index);
  }
  CHECK(any_differs);
  CHECK(fg_seen == std::set<int>{1, 2, 3});
}

TEST_CASE("dataset save and load round-trip") {
  const Dataset data = synth_shapes_dataset(6, 3, 32, 32, 5);
  TempDir dir("dataset");
  save_dataset(data, dir.path);
  CHECK(std::filesystem::exists(dir.path / "classes.txt"));
  const Dataset back = load_dataset(dir.path);
  REQUIRE(back.size() == data.size());
  CHECK(back.class_names == data.class_names);
  for (long i = 0; i < data.size(); ++i) {
    CHECK(back.samples[i].mask.v == data.samples[i].mask.v);
    REQUIRE(back.samples[i].image.px.size() == data.samples[i].image.px.size());
    for (std::size_t p = 0; p < data.samples[i].image.px.size(); ++p) {
      // 8-bit png quantization
      CHECK(std::abs(back.samples[i].image.px[p] - data.samples[i].image.px[p]) <=
            0.5f / 255.f);
    }
  }
}

TEST_CASE("load_dataset rejects broken roots") {
  TempDir dir("badroot");
  CHECK_THROWS_AS(load_dataset(dir.path), ValidationError);
}

TEST_CASE("validate_sample flags inconsistencies") {
  Dataset data = synth_shapes_dataset(1, 3, 32, 32, 9);
  SegSample s = data.samples[0];
  s.mask.v[0] = 200;  // neither class nor ignore
  CHECK_THROWS_AS(validate_sample(s, 3, 255), ValidationError);
  SegSample t = data.samples[0];
  t.mask = Mask(16, 16);
  CHECK_THROWS_AS(validate_sample(t, 3, 255), ValidationError);
  SegSample u = data.samples[0];
  u.mask.v[5] = 255;  // ignore is fine
  validate_sample(u, 3, 255);
}

TEST_CASE("protocol grammar") {
  const Protocol p = parse_protocol("4-1", 5);
  REQUIRE(p.total_steps() == 2);
  CHECK(p.steps[0] == std::vector<int>{1, 2, 3, 4});
  CHECK(p.steps[1] == std::vector<int>{5});
  CHECK(p.seen_classes(0) == std::vector<int>{1, 2, 3, 4});
  CHECK(p.seen_classes(1) == std::vector<int>{1, 2, 3, 4, 5});

  const Protocol q = parse_protocol("3-2", 5);
  REQUIRE(q.total_steps() == 2);
  CHECK(q.steps[1] == std::vector<int>{4, 5});

  const Protocol r = parse_protocol("3-1", 5);
  REQUIRE(r.total_steps() == 3);
  CHECK(r.steps[2] == std::vector<int>{5});

  CHECK_THROWS_AS(parse_protocol("6-1", 5), ValidationError);
  CHECK_THROWS_AS(parse_protocol("4-2", 5), ValidationError);  // leftover does not divide
  CHECK_THROWS_AS(parse_protocol("0-1", 5), ValidationError);
  CHECK_THROWS_AS(parse_protocol("4", 5), ValidationError);
  CHECK_THROWS_AS(parse_protocol("a-b", 5), ValidationError);
  CHECK_THROWS_AS(parse_protocol("-1", 5), ValidationError);
}

TEST_CASE("remap hides unseen classes and keeps ignore") {
  Mask m(1, 5);
  m.v = {0, 2, 3, 255, 1};
  const Mask out = remap_to_visible(m, {1, 2}, 255);
  CHECK(out.v == std::vector<std::int32_t>{0, 2, 0, 255, 1});
}

TEST_CASE("split_dataset routes samples by their top class") {
  Dataset data;
  data.class_names = {"background", "a", "b", "c"};
  auto add = [&](const std::string& id, std::vector<std::int32_t> labels) {
    SegSample s;
    s.id = id;
    s.image = Image(1, 4);
    s.mask = Mask(1, 4);
    s.mask.v = std::move(labels);
    data.samples.push_back(std::move(s));
  };
  add("s0", {0, 1, 1, 0});     // step 0
  add("s1", {0, 1, 2, 0});     // step 1 via class 2
  add("s2", {3, 3, 0, 255});   // step 2
  const Protocol p = parse_protocol("1-1", 3);

  const auto seen = split_dataset(data, p, LabelPolicy::kSeen);
  REQUIRE(seen.size() == 3);
  CHECK(seen[0].train_set.size() == 1);
  CHECK(seen[1].train_set.size() == 1);
  CHECK(seen[2].train_set.size() == 1);
  CHECK(seen[1].train_set.samples[0].id == "s1");
  // kSeen keeps class 1 inside step 1's sample
  CHECK(seen[1].train_set.samples[0].mask.v == std::vector<std::int32_t>{0, 1, 2, 0});
  CHECK(seen[1].train_set.samples[0].meta.at("task") == "1");

  const auto cur = split_dataset(data, p, LabelPolicy::kCurrentOnly);
  // kCurrentOnly blanks the earlier class to background
  CHECK(cur[1].train_set.samples[0].mask.v == std::vector<std::int32_t>{0, 0, 2, 0});
  CHECK(cur[2].train_set.samples[0].mask.v == std::vector<std::int32_t>{3, 3, 0, 255});
}

TEST_CASE("cross-dataset split unifies instrument vocabularies") {
  const std::vector<std::string> names0 = {
      "background",       "Bipolar Forceps",  "Prograsp Forceps", "Large Needle Driver",
      "Vessel Sealer",    "Grasping Retractor", "Monopolar Curved Scissors",
      "Ultrasound Probe"};
  const std::vector<std::string> names1 = {
      "background",       "Bipolar Forceps",  "Prograsp Forceps", "Large Needle Driver",
      "Monopolar Curved Scissors", "Ultrasound Probe", "Suction Instrument", "Clip Applier"};

  auto make = [](const std::vector<std::string>& names, const std::string& prefix) {
    Dataset d;
    d.class_names = names;
    for (int i = 1; i < static_cast<int>(names.size()); ++i) {
      SegSample s;
      s.id = prefix + std::to_string(i);
      s.image = Image(1, 2);
      s.mask = Mask(1, 2);
      s.mask.v = {0, i};
      d.samples.push_back(std::move(s));
    }
    return d;
  };
  const Dataset d0 = make(names0, "old");
  const Dataset d1 = make(names1, "new");

  const CrossSplit cs = build_cross_split(d0, d1, {});
  REQUIRE(cs.protocol.total_steps() == 2);
  CHECK(cs.protocol.class_names.size() == 10);  // 7 + background + 2 new-only
  CHECK(cs.overlapping_ids == std::vector<int>{1, 2, 3, 6, 7});
  CHECK(cs.old_only_ids == std::vector<int>{4, 5});
  CHECK(cs.new_only_ids == std::vector<int>{8, 9});
  CHECK(cs.protocol.class_names[8] == "Suction Instrument");
  CHECK(cs.protocol.class_names[9] == "Clip Applier");

  // Step-1 labels are remapped into the unified id space.
  const Dataset& step1 = cs.step_views[1].train_set;
  bool found = false;
  for (const auto& s : step1.samples) {
    if (s.id == "new6") {
      CHECK(s.mask.v == std::vector<std::int32_t>{0, 8});
      found = true;
    }
  }
  CHECK(found);

  const auto groups = report_groups(cs.protocol, 1, &cs);
  REQUIRE(groups.size() == 4);
  CHECK(groups[0].first == "RC");
  CHECK(groups[1].first == "OC");
  CHECK(groups[2].first == "NC");
  CHECK(groups[3].first == "All");
  CHECK(groups[2].second == std::vector<int>{8, 9});
}

TEST_CASE("aliases merge differing class names") {
  Dataset d0;
  d0.class_names = {"background", "Ultrasound Probe"};
  SegSample s0;
  s0.id = "a";
  s0.image = Image(1, 1);
  s0.mask = Mask(1, 1, 1);
  d0.samples.push_back(s0);

  Dataset d1;
  d1.class_names = {"background", "US Probe"};
  SegSample s1;
  s1.id = "b";
  s1.image = Image(1, 1);
  s1.mask = Mask(1, 1, 1);
  d1.samples.push_back(s1);

  const CrossSplit cs = build_cross_split(d0, d1, {{"US Probe", "Ultrasound Probe"}});
  CHECK(cs.protocol.class_names.size() == 2);
  CHECK(cs.overlapping_ids == std::vector<int>{1});
  CHECK(cs.new_only_ids.empty());
}
