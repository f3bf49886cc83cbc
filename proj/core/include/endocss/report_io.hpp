#pragma once

#include <filesystem>
#include <string>

#include "endocss/metrics.hpp"

namespace endocss {

/// One protocol step's evaluation, as persisted under step_k/report.{csv,json}.
struct EvalReport {
  int step = 0;
  std::string protocol_spec;
  std::string mode;
  GroupedReport grouped;
};

/// Rows: `step,kind,name,iou` where kind is `class` or `group`; undefined
/// IoUs leave the value column empty.
void write_report_csv(const EvalReport& report, const std::filesystem::path& path);
void write_report_json(const EvalReport& report, const std::filesystem::path& path);
EvalReport read_report_json(const std::filesystem::path& path);

/// Table-3-style fixed-width text rendering, one line per group plus
/// per-class detail.
std::string render_report_text(const EvalReport& report);

}  // namespace endocss
