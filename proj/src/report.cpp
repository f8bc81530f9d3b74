#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "peanut/harness.hpp"
#include "peanut/io.hpp"

namespace peanut::harness {

using nlohmann::json;

namespace {

std::string format(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, v);
  return buf;
}

std::string hex64(uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, v);
  return buf;
}

json aggregate_json(const BenchmarkReport& r) {
  int failures_timeout = 0, failures_false_stop = 0, failures_stuck = 0;
  for (const auto& row : r.rows) {
    switch (row.failure) {
      case FailureReason::Timeout: ++failures_timeout; break;
      case FailureReason::FalseStop: ++failures_false_stop; break;
      case FailureReason::Stuck: ++failures_stuck; break;
      case FailureReason::None: break;
    }
  }
  return json{{"label", r.label},
              {"episodes", r.rows.size()},
              {"success", r.success},
              {"spl", r.spl},
              {"seed", r.seed},
              {"config_fingerprint", hex64(r.fingerprint)},
              {"predictor_calls", r.predictor_calls},
              {"failures",
               {{"timeout", failures_timeout},
                {"false_stop", failures_false_stop},
                {"stuck", failures_stuck}}}};
}

std::string bar_chart_svg(const std::vector<BenchmarkReport>& reports) {
  const int width = 720, height = 400;
  const int margin_left = 60, margin_bottom = 70, margin_top = 30;
  const int plot_w = width - margin_left - 30;
  const int plot_h = height - margin_top - margin_bottom;
  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) +
         "\" height=\"" + std::to_string(height) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (int g = 0; g <= 5; ++g) {
    int y = margin_top + plot_h - plot_h * g / 5;
    svg += "<line x1=\"" + std::to_string(margin_left) + "\" y1=\"" + std::to_string(y) +
           "\" x2=\"" + std::to_string(margin_left + plot_w) + "\" y2=\"" + std::to_string(y) +
           "\" stroke=\"#dddddd\"/>\n";
    svg += "<text x=\"" + std::to_string(margin_left - 8) + "\" y=\"" + std::to_string(y + 4) +
           "\" font-size=\"12\" text-anchor=\"end\">" + format("%.1f", 0.2 * g) + "</text>\n";
  }
  size_t n = reports.size();
  double group_w = static_cast<double>(plot_w) / std::max<size_t>(1, n);
  for (size_t k = 0; k < n; ++k) {
    double x0 = margin_left + k * group_w;
    double bar_w = group_w * 0.32;
    double success_h = plot_h * reports[k].success;
    double spl_h = plot_h * reports[k].spl;
    double base_y = margin_top + plot_h;
    svg += "<rect x=\"" + format("%.1f", x0 + group_w * 0.12) + "\" y=\"" +
           format("%.1f", base_y - success_h) + "\" width=\"" + format("%.1f", bar_w) +
           "\" height=\"" + format("%.1f", success_h) + "\" fill=\"#4c78a8\"/>\n";
    svg += "<rect x=\"" + format("%.1f", x0 + group_w * 0.52) + "\" y=\"" +
           format("%.1f", base_y - spl_h) + "\" width=\"" + format("%.1f", bar_w) +
           "\" height=\"" + format("%.1f", spl_h) + "\" fill=\"#f58518\"/>\n";
    svg += "<text x=\"" + format("%.1f", x0 + group_w * 0.28) + "\" y=\"" +
           format("%.1f", base_y - success_h - 4) + "\" font-size=\"11\" text-anchor=\"middle\">" +
           format("%.3f", reports[k].success) + "</text>\n";
    svg += "<text x=\"" + format("%.1f", x0 + group_w * 0.68) + "\" y=\"" +
           format("%.1f", base_y - spl_h - 4) + "\" font-size=\"11\" text-anchor=\"middle\">" +
           format("%.3f", reports[k].spl) + "</text>\n";
    svg += "<text x=\"" + format("%.1f", x0 + group_w * 0.5) + "\" y=\"" +
           std::to_string(margin_top + plot_h + 20) +
           "\" font-size=\"13\" text-anchor=\"middle\">" + reports[k].label + "</text>\n";
  }
  int legend_y = height - 24;
  svg += "<rect x=\"" + std::to_string(margin_left) + "\" y=\"" + std::to_string(legend_y) +
         "\" width=\"14\" height=\"14\" fill=\"#4c78a8\"/>\n";
  svg += "<text x=\"" + std::to_string(margin_left + 20) + "\" y=\"" +
         std::to_string(legend_y + 12) + "\" font-size=\"13\">Success</text>\n";
  svg += "<rect x=\"" + std::to_string(margin_left + 110) + "\" y=\"" + std::to_string(legend_y) +
         "\" width=\"14\" height=\"14\" fill=\"#f58518\"/>\n";
  svg += "<text x=\"" + std::to_string(margin_left + 130) + "\" y=\"" +
         std::to_string(legend_y + 12) + "\" font-size=\"13\">SPL</text>\n";
  svg += "</svg>\n";
  return svg;
}

}  // namespace

std::string report_csv(const BenchmarkReport& report) {
  std::string csv = "episode_id,scene_seed,target,success,steps,path_m,oracle_m,spl,failure_reason\n";
  for (const auto& r : report.rows) {
    double spl_term =
        r.success ? r.oracle_path_length / std::max(r.agent_path_length, r.oracle_path_length)
                  : 0.0;
    csv += std::to_string(r.spec.episode_id) + "," + std::to_string(r.spec.scene_seed) + "," +
           world::category_names()[r.spec.target_category] + "," + (r.success ? "1" : "0") + "," +
           std::to_string(r.steps) + "," + format("%.4f", r.agent_path_length) + "," +
           format("%.4f", r.oracle_path_length) + "," + format("%.6f", spl_term) + "," +
           failure_reason_name(r.failure) + "\n";
  }
  return csv;
}

void emit_report(const BenchmarkReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text_file(dir / (report.label + "_episodes.csv"), report_csv(report));
  write_text_file(dir / (report.label + "_summary.json"), aggregate_json(report).dump(2) + "\n");
  write_text_file(dir / (report.label + "_chart.svg"), bar_chart_svg({report}));
  for (const auto& r : report.rows) {
    if (r.trace.empty()) continue;
    json trace = json::array();
    for (const auto& p : r.trace)
      trace.push_back(json{{"x", p.x}, {"y", p.y}, {"theta", p.theta}});
    json goals = json::array();
    for (const auto& g : r.goal_trace) goals.push_back(json{{"i", g.i}, {"j", g.j}});
    json j{{"episode_id", r.spec.episode_id}, {"trace", trace}, {"goals", goals}};
    write_text_file(dir / (report.label + "_trace_" + std::to_string(r.spec.episode_id) + ".json"),
                    j.dump() + "\n");
  }
}

void emit_comparison(const std::vector<BenchmarkReport>& reports,
                     const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::string csv = "label,episodes,success,spl,predictor_calls\n";
  json rows = json::array();
  for (const auto& r : reports) {
    csv += r.label + "," + std::to_string(r.rows.size()) + "," + format("%.6f", r.success) + "," +
           format("%.6f", r.spl) + "," + std::to_string(r.predictor_calls) + "\n";
    rows.push_back(aggregate_json(r));
  }
  write_text_file(dir / "ablation_comparison.csv", csv);
  write_text_file(dir / "ablation_summary.json", rows.dump(2) + "\n");
  write_text_file(dir / "ablation_chart.svg", bar_chart_svg(reports));
}

}  // namespace peanut::harness
