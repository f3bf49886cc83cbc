#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "endocss/datamodel.hpp"
#include "endocss/rng.hpp"
#include "endocss/segmodel.hpp"

namespace endocss {

struct CorruptionSpec {
  std::string name;
  int severity = 1;  // 1..5
};

struct CorruptionInfo {
  std::string name;
  std::string param;      // what the per-severity scalar means
  std::string direction;  // "increasing" or "decreasing" in severity
  std::array<double, 5> levels{};
  bool stochastic = false;
};

/// The 12 required corruption names, canonical order.
const std::vector<std::string>& default_corruptions();

/// Severity-parameter registry. The built-in table is embedded from
/// data/corruption_levels.json at build time; an external table with the
/// same schema can replace it.
class CorruptionRegistry {
 public:
  static const CorruptionRegistry& builtin();
  static CorruptionRegistry from_json_text(const std::string& text);
  static CorruptionRegistry from_json_file(const std::filesystem::path& path);

  bool has(const std::string& name) const;
  const CorruptionInfo& info(const std::string& name) const;
  std::vector<std::string> names() const;  // excluding "identity"
  double level(const std::string& name, int severity) const;

  Image apply(const Image& image, const CorruptionSpec& spec, Rng& rng) const;

 private:
  std::map<std::string, CorruptionInfo> table_;
};

/// Applies `spec` using the built-in registry.
Image corrupt(const Image& image, const CorruptionSpec& spec, Rng& rng);

struct RobustnessRow {
  std::string corruption;
  int severity = 0;
  std::optional<double> miou;
};

struct RobustnessTable {
  std::optional<double> clean_miou;                   // severity-0 reference
  std::vector<RobustnessRow> rows;                    // corruption-major
  std::vector<int> severities;                        // evaluated levels
  std::vector<std::optional<double>> severity_mean;   // aligned with severities
  bool include_background = false;
};

/// Corrupts every test image per (corruption, severity), runs inference, and
/// reports mIoU over the foreground classes (background included only on
/// request). Deterministic under `seed` regardless of evaluation order.
RobustnessTable robustness_eval(const SegModel& model, const Dataset& test_set,
                                const std::vector<std::string>& corruption_names,
                                const std::vector<int>& severities, std::uint64_t seed,
                                const CorruptionRegistry& registry = CorruptionRegistry::builtin(),
                                bool include_background = false);

/// Columns: corruption,severity,miou. Includes the clean row (severity 0)
/// and per-severity averages as `ALL` rows.
void write_robustness_csv(const RobustnessTable& table, const std::filesystem::path& path);
/// Static severity-vs-mIoU line plot.
void write_robustness_svg(const RobustnessTable& table, const std::filesystem::path& path);

}  // namespace endocss
