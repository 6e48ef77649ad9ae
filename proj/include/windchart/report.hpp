#pragma once

#include <optional>
#include <string>
#include <utility>

#include "windchart/ifgls.hpp"
#include "windchart/mars.hpp"
#include "windchart/rsp.hpp"
#include "windchart/scada.hpp"

namespace windchart {

// End-to-end run: ingest and filter a SCADA export, fit the power curve,
// whiten the residuals, then chart them. Artifacts land in output_dir.
struct RunConfig {
  std::string input_path;
  std::string output_dir = ".";
  ColumnMap columns;
  std::optional<std::pair<std::string, std::string>> row_filter;
  MarsConfig mars;
  IfglsConfig ifgls;
  AnalyzeConfig chart;
  bool seed_set = false;  // seeds must be stated, never defaulted

  void validate() const;
};

struct RunSummary {
  FilterReport filter;
  ParseDiagnostics parse;
  Eigen::Index design_rows = 0;
  int mars_terms = 0;
  double mars_gcv = 0.0;
  double rmse_mars = 0.0;
  int ar_order = 0;
  int ifgls_iterations = 0;
  bool ifgls_converged = false;
  double rmse_ifgls = 0.0;
  int subgroups = 0;
  int chart_rounds = 0;
  int segments_removed = 0;
  std::string termination;
  double final_p = 0.0;
};

RunSummary run(const RunConfig& config);

void write_run_summary(std::ostream& out, const RunSummary& s);

// Deterministic standalone SVG documents; byte-identical output for
// identical inputs, regardless of thread count.
std::string svg_control_chart(const AnalyzeOutcome& outcome);

// outcome is optional; when given and segments were removed, the points
// inside removed ranges get their own marker layer.
std::string svg_power_curve(const Design& design, const MarsModel& model,
                            const AnalyzeOutcome* outcome = nullptr);

}  // namespace windchart
