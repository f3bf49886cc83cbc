#include "endocss/report_io.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "endocss/error.hpp"

namespace endocss {
namespace {

std::string fmt_iou(const std::optional<double>& v, int digits = 6) {
  if (!v) return "";
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << *v;
  return os.str();
}

}  // namespace

void write_report_csv(const EvalReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), "cannot open report for writing: ", path.string());
  out << "step,kind,name,iou\n";
  const auto& g = report.grouped;
  for (std::size_t c = 0; c < g.class_iou.size(); ++c)
    out << report.step << ",class," << g.class_names[c] << "," << fmt_iou(g.class_iou[c])
        << "\n";
  for (std::size_t i = 0; i < g.groups.size(); ++i)
    out << report.step << ",group," << g.groups[i].first << "," << fmt_iou(g.group_miou[i])
        << "\n";
  out.flush();
  require(out.good(), "failed writing report: ", path.string());
}

void write_report_json(const EvalReport& report, const std::filesystem::path& path) {
  nlohmann::json j;
  j["step"] = report.step;
  j["protocol"] = report.protocol_spec;
  j["mode"] = report.mode;
  j["include_background"] = report.grouped.include_background;
  nlohmann::json classes = nlohmann::json::array();
  for (std::size_t c = 0; c < report.grouped.class_iou.size(); ++c) {
    nlohmann::json e;
    e["id"] = c;
    e["name"] = report.grouped.class_names[c];
    if (report.grouped.class_iou[c])
      e["iou"] = *report.grouped.class_iou[c];
    else
      e["iou"] = nullptr;
    classes.push_back(std::move(e));
  }
  j["classes"] = std::move(classes);
  nlohmann::json groups = nlohmann::json::array();
  for (std::size_t i = 0; i < report.grouped.groups.size(); ++i) {
    nlohmann::json e;
    e["name"] = report.grouped.groups[i].first;
    e["classes"] = report.grouped.groups[i].second;
    if (report.grouped.group_miou[i])
      e["miou"] = *report.grouped.group_miou[i];
    else
      e["miou"] = nullptr;
    groups.push_back(std::move(e));
  }
  j["groups"] = std::move(groups);

  std::ofstream out(path, std::ios::trunc);
  require(out.good(), "cannot open report for writing: ", path.string());
  out << j.dump(2) << "\n";
  out.flush();
  require(out.good(), "failed writing report: ", path.string());
}

EvalReport read_report_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open report: ", path.string());
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  require(!j.is_discarded(), "report is not valid JSON: ", path.string());

  EvalReport report;
  report.step = j.at("step").get<int>();
  report.protocol_spec = j.value("protocol", std::string());
  report.mode = j.value("mode", std::string());
  report.grouped.include_background = j.value("include_background", false);
  for (const auto& e : j.at("classes")) {
    report.grouped.class_names.push_back(e.at("name").get<std::string>());
    if (e.at("iou").is_null())
      report.grouped.class_iou.emplace_back(std::nullopt);
    else
      report.grouped.class_iou.emplace_back(e.at("iou").get<double>());
  }
  for (const auto& e : j.at("groups")) {
    report.grouped.groups.emplace_back(e.at("name").get<std::string>(),
                                       e.at("classes").get<std::vector<int>>());
    if (e.at("miou").is_null())
      report.grouped.group_miou.emplace_back(std::nullopt);
    else
      report.grouped.group_miou.emplace_back(e.at("miou").get<double>());
  }
  return report;
}

std::string render_report_text(const EvalReport& report) {
  std::ostringstream os;
  os << "step " << report.step;
  if (!report.mode.empty()) os << "  mode=" << report.mode;
  if (!report.protocol_spec.empty()) os << "  protocol=" << report.protocol_spec;
  os << "\n";

  const auto& g = report.grouped;
  os << "  ";
  for (const auto& [name, ids] : g.groups) os << "| " << std::setw(8) << name << " ";
  os << "|\n  ";
  for (std::size_t i = 0; i < g.groups.size(); ++i) {
    const std::string v = g.group_miou[i] ? fmt_iou(g.group_miou[i], 4) : std::string("-");
    os << "| " << std::setw(8) << v << " ";
  }
  os << "|\n";
  for (std::size_t c = 0; c < g.class_iou.size(); ++c) {
    if (!g.class_iou[c]) continue;
    os << "    " << std::setw(3) << c << " " << std::left << std::setw(24) << g.class_names[c]
       << std::right << fmt_iou(g.class_iou[c], 4) << "\n";
  }
  return os.str();
}

}  // namespace endocss
