#include <doctest/doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "endocss/cli.hpp"
#include "endocss/datamodel.hpp"
#include "endocss/replay.hpp"
#include "endocss/segmodel.hpp"

#include "test_support.hpp"

using namespace endocss;
using testsupport::TempDir;

namespace {

namespace fs = std::filesystem;

struct CliResult {
  int code = 0;
  std::string out;
  std::string err;
};

CliResult cli(std::vector<std::string> args) {
  args.insert(args.begin(), "endocss");
  std::ostringstream captured_out, captured_err;
  std::streambuf* old_out = std::cout.rdbuf(captured_out.rdbuf());
  std::streambuf* old_err = std::cerr.rdbuf(captured_err.rdbuf());
  CliResult r;
  r.code = run_cli(args);
  std::cout.rdbuf(old_out);
  std::cerr.rdbuf(old_err);
  r.out = captured_out.str();
  r.err = captured_err.str();
  return r;
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  return nlohmann::json::parse(in);
}

std::vector<std::string> synth(const fs::path& root, int samples, int classes,
                               std::uint64_t seed) {
  return {"synth-data",           "--out",  root.string(),
          "--samples",            std::to_string(samples),
          "--classes",            std::to_string(classes),
          "--height",             "32",
          "--width",              "32",
          "--seed",               std::to_string(seed)};
}

}  // namespace

TEST_CASE("synth-data writes a loadable dataset with a manifest") {
  TempDir dir("cli_synth");
  const fs::path root = dir.path / "data";
  const CliResult r = cli(synth(root, 5, 3, 7));
  REQUIRE(r.code == 0);
  CHECK(r.out.find("wrote 5 samples") != std::string::npos);

  const Dataset data = load_dataset(root);
  CHECK(data.size() == 5);
  CHECK(data.n_classes() == 3);

  const nlohmann::json m = read_json(root / "manifest.json");
  CHECK(m.at("subcommand") == "synth-data");
  CHECK(m.at("toolkit_version") == "0.1.0");
  CHECK(m.at("config").at("samples") == 5);
  CHECK(m.at("argv").size() >= 3);
}

TEST_CASE("bad invocations exit with code 2") {
  CHECK(cli({}).code == 2);
  CHECK(cli({"trainx"}).code == 2);
  CHECK(cli({"train", "--test", "x"}).code == 2);  // missing required --data
  CHECK(cli({"synth-data", "--out", "/tmp/x", "--classes", "not-a-number"}).code == 2);
  CHECK(cli({"--version"}).code == 0);
  CHECK(cli({"--help"}).code == 0);
}

TEST_CASE("train runs end to end and leaves a full run record") {
  TempDir dir("cli_train");
  const fs::path train_root = dir.path / "train";
  const fs::path test_root = dir.path / "test";
  REQUIRE(cli(synth(train_root, 6, 3, 1)).code == 0);
  REQUIRE(cli(synth(test_root, 4, 3, 2)).code == 0);

  const fs::path out = dir.path / "run";
  const CliResult r = cli({"train",          "--data",         train_root.string(),
                           "--test",         test_root.string(),
                           "--protocol",     "1-1",
                           "--mode",         "endocss",
                           "--out",          out.string(),
                           "--image-size",   "32",
                           "--widths",       "4,8,12,16",
                           "--batch-size",   "4",
                           "--epochs-first", "1",
                           "--epochs-later", "1",
                           "--k-per-class",  "1",
                           "--generator",    "identity",
                           "--seed",         "3"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("step 0:") != std::string::npos);
  CHECK(r.out.find("run record:") != std::string::npos);

  CHECK(fs::exists(out / "manifest.json"));
  CHECK(fs::exists(out / "config.json"));
  CHECK(fs::exists(out / "batches.log"));
  CHECK(fs::exists(out / "run.json"));
  CHECK(fs::exists(out / "step_0" / "checkpoint"));
  CHECK(fs::exists(out / "step_1" / "report.csv"));
  CHECK(fs::exists(out / "step_1" / "report.json"));

  const nlohmann::json m = read_json(out / "manifest.json");
  CHECK(m.at("subcommand") == "train");
  CHECK(m.at("inputs").at("data") == train_root.string());
  CHECK(m.at("config").at("protocol") == "1-1");

  // report renders the recorded run
  const CliResult rep = cli({"report", "--run", out.string()});
  REQUIRE(rep.code == 0);
  CHECK(rep.out.find("step 0") != std::string::npos);
  CHECK(rep.out.find("step 1") != std::string::npos);
  CHECK(rep.out.find("All") != std::string::npos);

  const CliResult rep1 = cli({"report", "--run", out.string(), "--step", "1"});
  REQUIRE(rep1.code == 0);
  CHECK(rep1.out.find("step 1") != std::string::npos);
  CHECK(rep1.out.find("step 0") == std::string::npos);
  CHECK(cli({"report", "--run", out.string(), "--step", "9"}).code == 2);
  CHECK(cli({"report", "--run", (dir.path / "nope").string()}).code == 2);

  // eval the stored checkpoint against the test set
  const fs::path eval_out = dir.path / "eval";
  const CliResult ev = cli({"eval",       "--checkpoint",
                            (out / "step_1" / "checkpoint").string(),
                            "--data",     test_root.string(),
                            "--protocol", "1-1",
                            "--image-size", "32",
                            "--out",      eval_out.string()});
  REQUIRE(ev.code == 0);
  CHECK(fs::exists(eval_out / "report.csv"));
  CHECK(fs::exists(eval_out / "report.json"));
  CHECK(read_json(eval_out / "report.json").at("step") == 1);

  // a step the checkpoint's head cannot cover is rejected
  const CliResult bad_step = cli({"eval",       "--checkpoint",
                                  (out / "step_0" / "checkpoint").string(),
                                  "--data",     test_root.string(),
                                  "--protocol", "1-1",
                                  "--step",     "1"});
  CHECK(bad_step.code == 2);

  // robustness sweep on the final checkpoint
  const fs::path rob_out = dir.path / "rob";
  const CliResult rob = cli({"robustness",  "--checkpoint",
                             (out / "step_1" / "checkpoint").string(),
                             "--data",      test_root.string(),
                             "--out",       rob_out.string(),
                             "--image-size", "32",
                             "--corruptions", "brightness,gamma",
                             "--severities", "1,3",
                             "--seed",      "5"});
  REQUIRE(rob.code == 0);
  CHECK(rob.out.find("clean mIoU:") != std::string::npos);
  CHECK(fs::exists(rob_out / "robustness.csv"));
  CHECK(fs::exists(rob_out / "robustness.svg"));
  CHECK(fs::exists(rob_out / "manifest.json"));
  std::ifstream csv(rob_out / "robustness.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header == "corruption,severity,miou");
}

TEST_CASE("train rejects bad protocols and missing data") {
  TempDir dir("cli_badtrain");
  const fs::path root = dir.path / "d";
  REQUIRE(cli(synth(root, 4, 3, 1)).code == 0);
  CHECK(cli({"train", "--data", root.string(), "--test", root.string(), "--protocol", "9-1",
             "--out", (dir.path / "r").string(), "--image-size", "32"})
            .code == 2);
  CHECK(cli({"train", "--data", (dir.path / "missing").string(), "--test", root.string(),
             "--protocol", "1-1", "--out", (dir.path / "r2").string(), "--image-size", "32"})
            .code == 2);
  CHECK(cli({"train", "--data", root.string(), "--test", root.string(), "--protocol", "1-1",
             "--mode", "oracle", "--out", (dir.path / "r3").string()})
            .code == 2);
  // cross protocol requires the second dataset pair
  CHECK(cli({"train", "--data", root.string(), "--test", root.string(), "--protocol", "cross",
             "--out", (dir.path / "r4").string()})
            .code == 2);
}

TEST_CASE("replay-build writes a deterministic replay set") {
  TempDir dir("cli_replay");
  const fs::path root = dir.path / "d";
  REQUIRE(cli(synth(root, 6, 4, 11)).code == 0);

  // train one quick step to get a checkpoint
  const fs::path run = dir.path / "run";
  REQUIRE(cli({"train",          "--data",         root.string(),
               "--test",         root.string(),
               "--protocol",     "2-1",
               "--out",          run.string(),
               "--image-size",   "32",
               "--widths",       "4,8,12,16",
               "--batch-size",   "4",
               "--epochs-first", "1",
               "--epochs-later", "1",
               "--mode",         "finetune",
               "--seed",         "7"})
              .code == 0);

  const std::string ckpt = (run / "step_0" / "checkpoint").string();
  auto build = [&](const fs::path& out, int seed) {
    return cli({"replay-build", "--checkpoint", ckpt,
                "--data",       root.string(),
                "--out",        out.string(),
                "--k-per-class", "1",
                "--image-size", "32",
                "--seed",       std::to_string(seed)});
  };
  const fs::path out_a = dir.path / "ra";
  const fs::path out_b = dir.path / "rb";
  REQUIRE(build(out_a, 9).code == 0);
  REQUIRE(build(out_b, 9).code == 0);

  const ReplaySet a = load_replay_set(out_a);
  const ReplaySet b = load_replay_set(out_b);
  REQUIRE(a.size() >= 1);
  REQUIRE(a.size() == b.size());
  for (long i = 0; i < a.size(); ++i) {
    CHECK(a.items[static_cast<std::size_t>(i)].image.px == b.items[static_cast<std::size_t>(i)].image.px);
    CHECK(a.items[static_cast<std::size_t>(i)].mask.v == b.items[static_cast<std::size_t>(i)].mask.v);
  }
  const nlohmann::json m = read_json(out_a / "manifest.json");
  CHECK(m.at("subcommand") == "replay-build");
  CHECK(m.at("inputs").at("checkpoint") == ckpt);

  CHECK(cli({"replay-build", "--checkpoint", (dir.path / "none").string(), "--data",
             root.string(), "--out", (dir.path / "rc").string()})
            .code == 2);
}

TEST_CASE("config file values apply under command-line overrides") {
  TempDir dir("cli_config");
  const fs::path root = dir.path / "d";
  REQUIRE(cli(synth(root, 12, 3, 13)).code == 0);

  const fs::path cfg_file = dir.path / "train.cfg";
  std::ofstream(cfg_file) << "[train]\n"
                          << "epochs-first=3\n"
                          << "seed=9\n"
                          << "image-size=32\n"
                          << "batch-size=4\n"
                          << "epochs-later=1\n"
                          << "k-per-class=1\n"
                          << "generator=identity\n";

  const fs::path out = dir.path / "run";
  const CliResult r = cli({"train",      "--data",   root.string(),
                           "--test",     root.string(),
                           "--protocol", "1-1",
                           "--out",      out.string(),
                           "--widths",   "4,8,12,16",
                           "--config",   cfg_file.string(),
                           "--epochs-first", "1"});
  REQUIRE(r.code == 0);
  const nlohmann::json m = read_json(out / "manifest.json");
  CHECK(m.at("config").at("epochs_first") == 1);  // flag beats config file
  CHECK(m.at("config").at("seed") == 9);          // config file beats default
  CHECK(m.at("config").at("image_size") == 32);

  CHECK(cli({"train", "--data", root.string(), "--test", root.string(), "--protocol", "1-1",
             "--out", (dir.path / "r2").string(), "--config",
             (dir.path / "missing.cfg").string()})
            .code == 2);
}

TEST_CASE("the output env var supplies a default root") {
  TempDir dir("cli_env");
  setenv("ENDOCSS_OUT", dir.path.c_str(), 1);
  const CliResult r = cli({"synth-data", "--samples", "3", "--classes", "3", "--height", "32",
                           "--width", "32", "--seed", "2"});
  unsetenv("ENDOCSS_OUT");
  REQUIRE(r.code == 0);
  CHECK(fs::exists(dir.path / "synth-data" / "manifest.json"));
  CHECK(load_dataset(dir.path / "synth-data").size() == 3);

  // no --out and no env var is a config error
  const CliResult bare = cli({"synth-data", "--samples", "3", "--classes", "3"});
  CHECK(bare.code == 2);
}
