#include "endocss/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <CLI/CLI.hpp>
#include <nlohmann/json.hpp>

#include "endocss/corruption.hpp"
#include "endocss/datamodel.hpp"
#include "endocss/error.hpp"
#include "endocss/image.hpp"
#include "endocss/protocol.hpp"
#include "endocss/replay.hpp"
#include "endocss/report_io.hpp"
#include "endocss/segmodel.hpp"
#include "endocss/trainer.hpp"

namespace endocss {
namespace {

namespace fs = std::filesystem;

constexpr const char* kVersion = "0.1.0";
constexpr const char* kOutEnvVar = "ENDOCSS_OUT";

fs::path resolve_out(const std::string& flag, const std::string& subcommand) {
  if (!flag.empty()) return flag;
  if (const char* root = std::getenv(kOutEnvVar)) return fs::path(root) / subcommand;
  fail("no --out given and ", kOutEnvVar, " is unset");
}

void write_manifest(const fs::path& out_dir, const std::string& subcommand,
                    const std::vector<std::string>& argv, const nlohmann::json& config,
                    const std::map<std::string, std::string>& inputs) {
  fs::create_directories(out_dir);
  nlohmann::json j;
  j["subcommand"] = subcommand;
  j["argv"] = argv;
  j["config"] = config;
  j["inputs"] = inputs;
  j["output_dir"] = out_dir.string();
  j["toolkit_version"] = kVersion;
  std::ofstream out(out_dir / "manifest.json");
  require(out.good(), "cannot write ", (out_dir / "manifest.json").string());
  out << j.dump(2) << "\n";
}

std::map<std::string, std::string> load_aliases(const std::string& path) {
  std::map<std::string, std::string> aliases;
  if (path.empty()) return aliases;
  std::ifstream in(path);
  require(in.good(), "cannot read aliases file ", path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail("aliases file ", path, " is not valid JSON: ", e.what());
  }
  require(j.is_object(), "aliases file must hold one JSON object of name -> canonical name");
  for (const auto& [name, canon] : j.items()) {
    require(canon.is_string(), "alias '", name, "' must map to a string");
    aliases[name] = canon.get<std::string>();
  }
  return aliases;
}

Dataset concat_datasets(Dataset a, const Dataset& b) {
  require(a.class_names == b.class_names, "datasets disagree on the class list");
  require(a.ignore_index == b.ignore_index, "datasets disagree on ignore_index");
  a.samples.insert(a.samples.end(), b.samples.begin(), b.samples.end());
  return a;
}

Dataset resize_dataset(Dataset data, int size) {
  require(size >= 16 && size % 16 == 0, "image size must be a positive multiple of 16, got ",
          size);
  for (SegSample& s : data.samples) {
    if (s.image.height == size && s.image.width == size) continue;
    s.image = resize_bilinear(s.image, size, size);
    s.mask = resize_nearest(s.mask, size, size);
  }
  return data;
}

struct TrainArgs {
  std::string data, test, data2, test2, aliases;
  std::string protocol = "4-1";
  std::string mode = "endocss";
  std::string out;
  TrainConfig config;
};

struct SynthArgs {
  std::string out;
  int samples = 200;
  int classes = 5;
  int height = 64;
  int width = 64;
  std::uint64_t seed = 0;
};

struct ReplayArgs {
  std::string checkpoint, data, out;
  std::string generator = "jitter-warp";
  ReplayBuildConfig config;
  int image_size = 64;
};

struct EvalArgs {
  std::string checkpoint, data, out;
  std::string protocol = "4-1";
  int step = -1;
  int image_size = 64;
  bool include_background = false;
};

struct RobustArgs {
  std::string checkpoint, data, out;
  std::vector<std::string> corruptions;
  std::vector<int> severities = {1, 2, 3, 4, 5};
  std::uint64_t seed = 0;
  int image_size = 64;
  bool include_background = false;
};

struct ReportArgs {
  std::string run;
  int step = -1;
};

void add_train_config_options(CLI::App& app, TrainConfig& c) {
  app.add_option("--batch-size", c.batch_size, "Samples per batch")->capture_default_str();
  app.add_option("--epochs-first", c.epochs_first, "Epochs on the first step")
      ->capture_default_str();
  app.add_option("--epochs-later", c.epochs_later, "Epochs on later steps")
      ->capture_default_str();
  app.add_option("--lr-first", c.lr_first, "Learning rate on the first step")
      ->capture_default_str();
  app.add_option("--lr-later", c.lr_later, "Learning rate on later steps")
      ->capture_default_str();
  app.add_option("--momentum", c.momentum, "SGD momentum")->capture_default_str();
  app.add_flag("--hflip,!--no-hflip", c.hflip, "Random horizontal flips")
      ->capture_default_str();
  app.add_flag("--resized-crop,!--no-resized-crop", c.resized_crop, "Random resized crops")
      ->capture_default_str();
  app.add_option("--crop-scale-min", c.crop_scale_min, "Smallest retained crop area fraction")
      ->capture_default_str();
  app.add_option("--image-size", c.image_size, "Training resolution (multiple of 16)")
      ->capture_default_str();
  app.add_option("--mu", c.mu, "SAN-CE noise mean")->capture_default_str();
  app.add_option("--sigma", c.sigma, "SAN-CE noise scale")->capture_default_str();
  app.add_flag("--step-indexing-from-one", c.step_indexing_from_one,
               "Count the first task as step 1 in the loss");
  app.add_option("--ignore-index", c.ignore_index, "Label value excluded from loss and metrics")
      ->capture_default_str();
  app.add_option("--k-per-class", c.k_per_class, "Exemplar sources kept per class")
      ->capture_default_str();
  app.add_option("--n-per-source", c.n_per_source, "Pseudo images generated per source")
      ->capture_default_str();
  app.add_option("--theta", c.theta, "Entropy threshold (< 0 uses 0.5 ln C)")
      ->capture_default_str();
  app.add_option("--per-class-cap", c.per_class_cap, "Replay item cap per class (0 = none)")
      ->capture_default_str();
  app.add_option("--generator", c.generator, "Pseudo-image generator: identity | jitter-warp")
      ->capture_default_str();
  app.add_option("--widths", c.widths, "Encoder stage widths")
      ->delimiter(',')
      ->expected(4)
      ->capture_default_str();
  app.add_flag("--include-background", c.include_background,
               "Count background in group means");
  app.add_flag("--disjoint", c.disjoint, "Keep only current-step labels during training");
  app.add_option("--seed", c.seed, "Master seed")->capture_default_str();
}

int cmd_train(const TrainArgs& a, const std::vector<std::string>& argv) {
  const TrainMode mode = parse_train_mode(a.mode);
  validate(a.config);
  const bool cross = !a.data2.empty();
  require(cross == !a.test2.empty(), "--data2 and --test2 go together");
  if (cross)
    require(a.protocol == "cross", "two train roots need --protocol cross");
  else
    require(a.protocol != "cross", "--protocol cross needs --data2 and --test2");

  const fs::path out = resolve_out(a.out, "train");
  nlohmann::json cfg = nlohmann::json::parse(config_json(a.config));
  cfg["protocol"] = a.protocol;
  cfg["mode"] = a.mode;
  std::map<std::string, std::string> inputs{{"data", a.data}, {"test", a.test}};
  if (cross) {
    inputs["data2"] = a.data2;
    inputs["test2"] = a.test2;
  }
  if (!a.aliases.empty()) inputs["aliases"] = a.aliases;
  write_manifest(out, "train", argv, cfg, inputs);

  RunRecord record;
  if (cross) {
    const auto aliases = load_aliases(a.aliases);
    const Dataset train0 = load_dataset(a.data, a.config.ignore_index);
    const Dataset train1 = load_dataset(a.data2, a.config.ignore_index);
    CrossSplit split = build_cross_split(train0, train1, aliases);
    const Dataset test = concat_datasets(
        unify_dataset(load_dataset(a.test, a.config.ignore_index), split.protocol, aliases),
        unify_dataset(load_dataset(a.test2, a.config.ignore_index), split.protocol, aliases));
    std::vector<StepView> views = split.step_views;
    if (mode == TrainMode::kJoint)
      views = {make_joint_view(concat_datasets(views[0].train_set, views[1].train_set),
                               split.protocol)};
    record = run_continual(views, split.protocol, test, a.config, mode, out, &split);
  } else {
    const Dataset train = load_dataset(a.data, a.config.ignore_index);
    const Dataset test = load_dataset(a.test, a.config.ignore_index);
    const Protocol protocol = parse_protocol(a.protocol, train.n_foreground());
    record = run_continual(train, test, protocol, a.config, mode, out);
  }

  for (const StepRecord& sr : record.steps) {
    std::cout << "step " << sr.step << ": batches=" << sr.stats.batches
              << " replay_pool=" << sr.replay_pool << " loss " << sr.stats.first_epoch_loss
              << " -> " << sr.stats.last_epoch_loss << "\n";
    std::cout << render_report_text(sr.report) << "\n";
  }
  std::cout << "run record: " << record.dir.string() << " (" << record.wall_seconds << " s)\n";
  return 0;
}

int cmd_synth_data(const SynthArgs& a, const std::vector<std::string>& argv) {
  const fs::path out = resolve_out(a.out, "synth-data");
  const nlohmann::json cfg{{"samples", a.samples},
                           {"classes", a.classes},
                           {"height", a.height},
                           {"width", a.width},
                           {"seed", a.seed}};
  write_manifest(out, "synth-data", argv, cfg, {});
  const Dataset data = synth_shapes_dataset(a.samples, a.classes, a.height, a.width, a.seed);
  save_dataset(data, out);
  std::cout << "wrote " << data.size() << " samples, " << data.n_foreground()
            << " foreground classes -> " << out.string() << "\n";
  return 0;
}

int cmd_replay_build(const ReplayArgs& a, const std::vector<std::string>& argv) {
  const fs::path out = resolve_out(a.out, "replay");
  const nlohmann::json cfg{{"k_per_class", a.config.k_per_class},
                           {"n_per_source", a.config.n_per_source},
                           {"theta", a.config.theta},
                           {"per_class_cap", a.config.per_class_cap},
                           {"step", a.config.step},
                           {"seed", a.config.seed},
                           {"generator", a.generator},
                           {"image_size", a.image_size}};
  write_manifest(out, "replay-build", argv, cfg,
                 {{"checkpoint", a.checkpoint}, {"data", a.data}});

  require(fs::exists(a.checkpoint), "checkpoint not found: ", a.checkpoint);
  const SegModel model = load_checkpoint(a.checkpoint);
  const Dataset data = resize_dataset(load_dataset(a.data), a.image_size);
  const auto plugin = make_generator(a.generator);
  const ReplaySet set = build_replay_set(model, data, *plugin, a.config);
  save_replay_set(set, out);
  std::cout << "replay set: " << set.size() << " items, theta=" << set.theta_used << " -> "
            << out.string() << "\n";
  return 0;
}

int cmd_eval(const EvalArgs& a, const std::vector<std::string>& argv) {
  if (!a.out.empty()) {
    const nlohmann::json cfg{{"protocol", a.protocol},
                             {"step", a.step},
                             {"image_size", a.image_size},
                             {"include_background", a.include_background}};
    write_manifest(a.out, "eval", argv, cfg, {{"checkpoint", a.checkpoint}, {"data", a.data}});
  }
  require(fs::exists(a.checkpoint), "checkpoint not found: ", a.checkpoint);
  CheckpointMeta meta;
  const SegModel model = load_checkpoint(a.checkpoint, &meta);
  const Dataset test = load_dataset(a.data);
  const Protocol protocol = parse_protocol(a.protocol, test.n_foreground());
  const int step = a.step >= 0 ? a.step : meta.step;
  require(step < protocol.total_steps(), "step ", step, " is outside protocol ", a.protocol);
  const std::vector<int> seen = protocol.seen_classes(step);
  const int top = seen.empty() ? 0 : *std::max_element(seen.begin(), seen.end());
  require(top < model.n_classes(), "checkpoint head covers ", model.n_classes(),
          " classes but step ", step, " of ", a.protocol, " needs ", top + 1);

  TrainConfig tc;
  tc.image_size = a.image_size;
  tc.include_background = a.include_background;
  EvalReport report;
  report.step = step;
  report.protocol_spec = protocol.spec_string;
  report.mode = "eval";
  report.grouped = evaluate_step(model, remap_dataset(test, seen),
                                 report_groups(protocol, step, nullptr), tc);
  std::cout << render_report_text(report);
  if (!a.out.empty()) {
    write_report_csv(report, fs::path(a.out) / "report.csv");
    write_report_json(report, fs::path(a.out) / "report.json");
    std::cout << "report -> " << a.out << "\n";
  }
  return 0;
}

int cmd_robustness(const RobustArgs& a, const std::vector<std::string>& argv) {
  const fs::path out = resolve_out(a.out, "robustness");
  nlohmann::json cfg{{"seed", a.seed},
                     {"severities", a.severities},
                     {"image_size", a.image_size},
                     {"include_background", a.include_background}};
  cfg["corruptions"] = a.corruptions.empty() ? default_corruptions() : a.corruptions;
  write_manifest(out, "robustness", argv, cfg, {{"checkpoint", a.checkpoint}, {"data", a.data}});

  require(fs::exists(a.checkpoint), "checkpoint not found: ", a.checkpoint);
  const SegModel model = load_checkpoint(a.checkpoint);
  const Dataset test = resize_dataset(load_dataset(a.data), a.image_size);
  const auto& names = a.corruptions.empty() ? default_corruptions() : a.corruptions;
  const RobustnessTable table =
      robustness_eval(model, test, names, a.severities, a.seed, CorruptionRegistry::builtin(),
                      a.include_background);
  write_robustness_csv(table, out / "robustness.csv");
  write_robustness_svg(table, out / "robustness.svg");

  std::cout << "clean mIoU: ";
  if (table.clean_miou)
    std::cout << *table.clean_miou;
  else
    std::cout << "n/a";
  std::cout << "\n";
  for (std::size_t i = 0; i < table.severities.size(); ++i) {
    std::cout << "severity " << table.severities[i] << " mean mIoU: ";
    if (table.severity_mean[i])
      std::cout << *table.severity_mean[i];
    else
      std::cout << "n/a";
    std::cout << "\n";
  }
  std::cout << "table -> " << (out / "robustness.csv").string() << "\n";
  return 0;
}

int cmd_report(const ReportArgs& a) {
  const fs::path run = a.run;
  require(fs::is_directory(run), "run record not found: ", run.string());
  std::vector<EvalReport> reports;
  for (const auto& entry : fs::directory_iterator(run)) {
    if (!entry.is_directory()) continue;
    if (entry.path().filename().string().rfind("step_", 0) != 0) continue;
    const fs::path file = entry.path() / "report.json";
    if (fs::exists(file)) reports.push_back(read_report_json(file));
  }
  require(!reports.empty(), "no step reports under ", run.string());
  std::sort(reports.begin(), reports.end(),
            [](const EvalReport& x, const EvalReport& y) { return x.step < y.step; });
  bool printed = false;
  for (const EvalReport& r : reports) {
    if (a.step >= 0 && r.step != a.step) continue;
    std::cout << render_report_text(r) << "\n";
    printed = true;
  }
  require(printed, "run has no report for step ", a.step);
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"EndoCSS: continual semantic segmentation with pseudo-replay"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  app.set_config("--config", "", "INI config file; options live under a [train] section");
  app.allow_config_extras(CLI::config_extras_mode::error);

  TrainArgs train_args;
  SynthArgs synth_args;
  ReplayArgs replay_args;
  EvalArgs eval_args;
  RobustArgs robust_args;
  ReportArgs report_args;

  CLI::App* train = app.add_subcommand("train", "Run a continual training protocol");
  train->add_option("--data", train_args.data, "Training dataset root")->required();
  train->add_option("--test", train_args.test, "Test dataset root")->required();
  train->add_option("--data2", train_args.data2, "Second training root (cross-dataset step 1)");
  train->add_option("--test2", train_args.test2, "Second test root (cross-dataset)");
  train->add_option("--aliases", train_args.aliases, "JSON map of class-name aliases");
  train->add_option("--protocol", train_args.protocol, "Protocol, e.g. 4-1, 3-2, 3-1, or cross")
      ->capture_default_str();
  train->add_option("--mode", train_args.mode, "endocss | finetune | joint")
      ->capture_default_str();
  train->add_option("--out", train_args.out, "Run record directory (default $ENDOCSS_OUT/train)");
  add_train_config_options(*train, train_args.config);
  train->fallthrough();  // lets the top-level --config follow the subcommand

  CLI::App* synth = app.add_subcommand("synth-data", "Write a synthetic shapes dataset");
  synth->add_option("--out", synth_args.out, "Dataset root to create");
  synth->add_option("--samples", synth_args.samples, "Sample count")->capture_default_str();
  synth->add_option("--classes", synth_args.classes, "Class count including background")
      ->capture_default_str();
  synth->add_option("--height", synth_args.height, "Image height")->capture_default_str();
  synth->add_option("--width", synth_args.width, "Image width")->capture_default_str();
  synth->add_option("--seed", synth_args.seed, "Seed")->capture_default_str();

  CLI::App* replay = app.add_subcommand("replay-build", "Build a pseudo-replay set");
  replay->add_option("--checkpoint", replay_args.checkpoint, "Previous step's checkpoint")
      ->required();
  replay->add_option("--data", replay_args.data, "Previous step's dataset root")->required();
  replay->add_option("--out", replay_args.out, "Replay directory to create");
  replay->add_option("--k-per-class", replay_args.config.k_per_class,
                     "Exemplar sources kept per class")
      ->capture_default_str();
  replay->add_option("--n-per-source", replay_args.config.n_per_source,
                     "Pseudo images per source")
      ->capture_default_str();
  replay->add_option("--theta", replay_args.config.theta, "Entropy threshold (< 0 = 0.5 ln C)")
      ->capture_default_str();
  replay->add_option("--per-class-cap", replay_args.config.per_class_cap,
                     "Replay item cap per class (0 = none)")
      ->capture_default_str();
  replay->add_option("--step", replay_args.config.step, "Step being entered (provenance)")
      ->capture_default_str();
  replay->add_option("--seed", replay_args.config.seed, "Seed")->capture_default_str();
  replay->add_option("--generator", replay_args.generator, "identity | jitter-warp")
      ->capture_default_str();
  replay->add_option("--image-size", replay_args.image_size, "Inference resolution")
      ->capture_default_str();

  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a test set");
  eval->add_option("--checkpoint", eval_args.checkpoint, "Checkpoint to evaluate")->required();
  eval->add_option("--data", eval_args.data, "Test dataset root")->required();
  eval->add_option("--protocol", eval_args.protocol, "Protocol the checkpoint comes from")
      ->capture_default_str();
  eval->add_option("--step", eval_args.step, "Protocol step (default: stored in checkpoint)");
  eval->add_option("--out", eval_args.out, "Directory for report.csv/report.json");
  eval->add_option("--image-size", eval_args.image_size, "Inference resolution")
      ->capture_default_str();
  eval->add_flag("--include-background", eval_args.include_background,
                 "Count background in group means");

  CLI::App* robust = app.add_subcommand("robustness", "Corruption robustness sweep");
  robust->add_option("--checkpoint", robust_args.checkpoint, "Checkpoint to evaluate")
      ->required();
  robust->add_option("--data", robust_args.data, "Test dataset root")->required();
  robust->add_option("--out", robust_args.out, "Output directory for CSV and SVG");
  robust->add_option("--corruptions", robust_args.corruptions,
                     "Corruption subset (default: all 12)")
      ->delimiter(',');
  robust->add_option("--severities", robust_args.severities, "Severity levels to sweep")
      ->delimiter(',')
      ->capture_default_str();
  robust->add_option("--seed", robust_args.seed, "Seed")->capture_default_str();
  robust->add_option("--image-size", robust_args.image_size, "Inference resolution")
      ->capture_default_str();
  robust->add_flag("--include-background", robust_args.include_background,
                   "Count background in mIoU");

  CLI::App* report = app.add_subcommand("report", "Render tables from a run record");
  report->add_option("--run", report_args.run, "Run record directory")->required();
  report->add_option("--step", report_args.step, "Render one step only");

  int exit_code = 0;
  train->callback([&] { exit_code = cmd_train(train_args, args); });
  synth->callback([&] { exit_code = cmd_synth_data(synth_args, args); });
  replay->callback([&] { exit_code = cmd_replay_build(replay_args, args); });
  eval->callback([&] { exit_code = cmd_eval(eval_args, args); });
  robust->callback([&] { exit_code = cmd_robustness(robust_args, args); });
  report->callback([&] { exit_code = cmd_report(report_args); });

  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const std::string& s : args) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return exit_code;
}

int run_cli(int argc, const char* const* argv) {
  std::vector<std::string> args;
  args.reserve(static_cast<std::size_t>(argc));
  for (int i = 0; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args);
}

}  // namespace endocss
