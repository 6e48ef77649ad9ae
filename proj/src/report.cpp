#include "windchart/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace windchart {

namespace {

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("report: cannot write " + path);
  out << content;
  if (!out) throw std::runtime_error("report: write failed for " + path);
}

std::string fmt(const char* pattern, double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), pattern, v);
  return buf;
}

// Shared plot scaffolding. Pixel coordinates are always derived from the
// same double math, so repeated runs emit identical bytes.
struct Frame {
  double width = 900.0, height = 380.0;
  double left = 64.0, right = 876.0, top = 34.0, bottom = 330.0;
  double x0 = 0.0, x1 = 1.0, y0 = 0.0, y1 = 1.0;

  double px(double x) const {
    return left + (x - x0) / (x1 - x0) * (right - left);
  }
  double py(double y) const {
    return bottom - (y - y0) / (y1 - y0) * (bottom - top);
  }
};

void pad_range(double& lo, double& hi) {
  if (!(hi > lo)) {
    lo -= 1.0;
    hi += 1.0;
    return;
  }
  const double pad = 0.06 * (hi - lo);
  lo -= pad;
  hi += pad;
}

std::string svg_open(const Frame& f) {
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << f.width
    << "\" height=\"" << f.height << "\" viewBox=\"0 0 " << f.width << ' '
    << f.height << "\">\n"
    << "<rect width=\"" << f.width << "\" height=\"" << f.height
    << "\" fill=\"#ffffff\"/>\n";
  return s.str();
}

std::string svg_axes(const Frame& f, const std::string& x_label,
                     const std::string& y_label) {
  std::ostringstream s;
  s << "<g stroke=\"#333333\" stroke-width=\"1\">\n"
    << "<line x1=\"" << fmt("%.2f", f.left) << "\" y1=\""
    << fmt("%.2f", f.bottom) << "\" x2=\"" << fmt("%.2f", f.right)
    << "\" y2=\"" << fmt("%.2f", f.bottom) << "\"/>\n"
    << "<line x1=\"" << fmt("%.2f", f.left) << "\" y1=\""
    << fmt("%.2f", f.top) << "\" x2=\"" << fmt("%.2f", f.left) << "\" y2=\""
    << fmt("%.2f", f.bottom) << "\"/>\n"
    << "</g>\n";
  // Five ticks per axis keeps labels readable at any data scale.
  s << "<g font-family=\"monospace\" font-size=\"11\" fill=\"#333333\">\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = f.x0 + (f.x1 - f.x0) * i / 4.0;
    const double fy = f.y0 + (f.y1 - f.y0) * i / 4.0;
    s << "<text x=\"" << fmt("%.2f", f.px(fx)) << "\" y=\""
      << fmt("%.2f", f.bottom + 16.0) << "\" text-anchor=\"middle\">"
      << fmt("%.5g", fx) << "</text>\n";
    s << "<text x=\"" << fmt("%.2f", f.left - 6.0) << "\" y=\""
      << fmt("%.2f", f.py(fy) + 4.0) << "\" text-anchor=\"end\">"
      << fmt("%.5g", fy) << "</text>\n";
  }
  s << "<text x=\"" << fmt("%.2f", (f.left + f.right) / 2.0) << "\" y=\""
    << fmt("%.2f", f.height - 8.0) << "\" text-anchor=\"middle\">" << x_label
    << "</text>\n";
  s << "<text x=\"14\" y=\"" << fmt("%.2f", (f.top + f.bottom) / 2.0)
    << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
    << fmt("%.2f", (f.top + f.bottom) / 2.0) << ")\">" << y_label
    << "</text>\n</g>\n";
  return s.str();
}

const char* round_color(int round) {
  static const char* palette[] = {"#d62728", "#ff7f0e", "#9467bd",
                                  "#8c564b", "#e377c2", "#bcbd22"};
  return palette[(round - 1) % 6];
}

}  // namespace

void RunConfig::validate() const {
  if (input_path.empty())
    throw std::invalid_argument("report: input path must be set");
  if (output_dir.empty())
    throw std::invalid_argument("report: output directory must be set");
  if (!seed_set)
    throw std::invalid_argument("report: seed must be set explicitly");
  if (mars.max_terms < 0)
    throw std::invalid_argument("report: max_terms must be non-negative");
  if (mars.max_degree < 1)
    throw std::invalid_argument("report: max_degree must be positive");
  if (!(mars.d > 0.0))
    throw std::invalid_argument("report: gcv penalty must be positive");
  if (mars.max_knots < 1)
    throw std::invalid_argument("report: max_knots must be positive");
  if (ifgls.order < -1)
    throw std::invalid_argument("report: ar order must be -1 or higher");
  if (ifgls.order_max < 0)
    throw std::invalid_argument("report: order_max must be non-negative");
  if (!(ifgls.conv_threshold > 0.0))
    throw std::invalid_argument("report: conv_threshold must be positive");
  if (!(ifgls.alpha_lb > 0.0) || ifgls.alpha_lb >= 1.0)
    throw std::invalid_argument("report: alpha_lb must lie in (0,1)");
  if (ifgls.max_iter < 1)
    throw std::invalid_argument("report: max_iter must be positive");
  if (chart.subgroup_size < 1)
    throw std::invalid_argument("report: subgroup size must be positive");
  if (chart.stages < 0)
    throw std::invalid_argument("report: stages must be non-negative");
  if (chart.min_segment < 1)
    throw std::invalid_argument("report: min_segment must be positive");
  if (chart.permutations < 2)
    throw std::invalid_argument("report: need at least 2 permutations");
  if (!(chart.alpha > 0.0) || chart.alpha > 1.0)
    throw std::invalid_argument("report: alpha must lie in (0,1]");
  if (chart.threads < 1)
    throw std::invalid_argument("report: threads must be positive");
}

std::string svg_control_chart(const AnalyzeOutcome& outcome) {
  const SubgroupMatrix& sg = outcome.initial;
  Frame f;
  std::string svg = svg_open(f);

  if (sg.count() == 0) {
    svg += "<text x=\"450\" y=\"190\" text-anchor=\"middle\" "
           "font-family=\"monospace\" font-size=\"14\" fill=\"#333333\">"
           "no subgroups to chart</text>\n</svg>\n";
    return svg;
  }

  const Eigen::Index m = sg.count();
  f.x0 = 0.0;
  f.x1 = static_cast<double>(m - 1);
  if (f.x1 <= f.x0) f.x1 = f.x0 + 1.0;
  double lo = sg.means.minCoeff(), hi = sg.means.maxCoeff();
  lo = std::min(lo, sg.grand_mean);
  hi = std::max(hi, sg.grand_mean);
  pad_range(lo, hi);
  f.y0 = lo;
  f.y1 = hi;

  svg += svg_axes(f, "subgroup", "subgroup mean");

  // Round-1 change points, deepest alarming stage only.
  if (!outcome.rounds.empty()) {
    const ChartRound& r1 = outcome.rounds.front();
    const int marks = std::min(r1.k_star, r1.seg.completed);
    std::vector<int> cps(r1.seg.change_points.begin(),
                         r1.seg.change_points.begin() + marks);
    std::sort(cps.begin(), cps.end());
    for (int cp : cps) {
      const double x = f.px(static_cast<double>(cp) - 0.5);
      svg += "<line x1=\"" + fmt("%.2f", x) + "\" y1=\"" +
             fmt("%.2f", f.top) + "\" x2=\"" + fmt("%.2f", x) + "\" y2=\"" +
             fmt("%.2f", f.bottom) +
             "\" stroke=\"#2ca02c\" stroke-dasharray=\"2 3\"/>\n";
    }
  }

  const double gy = f.py(sg.grand_mean);
  svg += "<line x1=\"" + fmt("%.2f", f.left) + "\" y1=\"" + fmt("%.2f", gy) +
         "\" x2=\"" + fmt("%.2f", f.right) + "\" y2=\"" + fmt("%.2f", gy) +
         "\" stroke=\"#1f77b4\" stroke-dasharray=\"5 4\"/>\n";

  std::string line = "<polyline fill=\"none\" stroke=\"#555555\" "
                     "stroke-width=\"1\" points=\"";
  for (Eigen::Index i = 0; i < m; ++i) {
    line += fmt("%.2f", f.px(static_cast<double>(i)));
    line += ',';
    line += fmt("%.2f", f.py(sg.means(i)));
    line += ' ';
  }
  line += "\"/>\n";
  svg += line;

  for (Eigen::Index i = 0; i < m; ++i) {
    int removed_round = 0;
    const auto& ti = sg.t_index_ranges[static_cast<std::size_t>(i)];
    for (const OcSegment& s : outcome.removed) {
      if (s.start_t_index <= ti.second && s.end_t_index >= ti.first) {
        removed_round = s.round;
        break;
      }
    }
    const std::string cx = fmt("%.2f", f.px(static_cast<double>(i)));
    const std::string cy = fmt("%.2f", f.py(sg.means(i)));
    if (removed_round > 0) {
      svg += "<circle cx=\"" + cx + "\" cy=\"" + cy +
             "\" r=\"3.2\" fill=\"" + round_color(removed_round) + "\"/>\n";
    } else {
      svg += "<circle cx=\"" + cx + "\" cy=\"" + cy +
             "\" r=\"1.6\" fill=\"#555555\"/>\n";
    }
  }

  std::ostringstream note;
  note << "<text x=\"" << fmt("%.2f", f.left) << "\" y=\"20\" "
       << "font-family=\"monospace\" font-size=\"12\" fill=\"#333333\">";
  if (!outcome.rounds.empty()) {
    const ChartRound& r1 = outcome.rounds.front();
    note << "round 1: W=" << fmt("%.4g", r1.w) << " p=" << fmt("%.4g", r1.p)
         << "  removed=" << outcome.removed.size() << " segment(s)  ["
         << outcome.termination << "]";
  } else {
    note << outcome.termination;
  }
  note << "</text>\n";
  svg += note.str();
  svg += "</svg>\n";
  return svg;
}

std::string svg_power_curve(const Design& design, const MarsModel& model,
                            const AnalyzeOutcome* outcome) {
  Frame f;
  std::string svg = svg_open(f);
  const Eigen::Index rows = design.rows();
  if (rows == 0) {
    svg += "<text x=\"450\" y=\"190\" text-anchor=\"middle\" "
           "font-family=\"monospace\" font-size=\"14\" fill=\"#333333\">"
           "no data</text>\n</svg>\n";
    return svg;
  }

  double x_lo = design.x.col(0).minCoeff(), x_hi = design.x.col(0).maxCoeff();
  double y_lo = design.y.minCoeff(), y_hi = design.y.maxCoeff();
  pad_range(x_lo, x_hi);
  pad_range(y_lo, y_hi);
  f.x0 = x_lo;
  f.x1 = x_hi;
  f.y0 = y_lo;
  f.y1 = y_hi;
  svg += svg_axes(f, "wind speed (m/s)", "power (kW)");

  const Eigen::Index stride = std::max<Eigen::Index>(1, rows / 1500);
  std::string dots = "<g fill=\"#9b9b9b\" fill-opacity=\"0.45\">\n";
  for (Eigen::Index i = 0; i < rows; i += stride) {
    dots += "<circle cx=\"" + fmt("%.2f", f.px(design.x(i, 0))) + "\" cy=\"" +
            fmt("%.2f", f.py(design.y(i))) + "\" r=\"1.4\"/>\n";
  }
  dots += "</g>\n";
  svg += dots;

  // Rows inside removed segments, drawn over the scatter so the flagged
  // operating points stand out. No layer when nothing was removed.
  if (outcome != nullptr && !outcome->removed.empty()) {
    std::string oc = "<g fill=\"#d62728\" fill-opacity=\"0.8\">\n";
    for (Eigen::Index i = 0; i < rows; i += stride) {
      const long t = design.t_index[static_cast<std::size_t>(i)];
      bool hit = false;
      for (const OcSegment& s : outcome->removed) {
        if (t >= s.start_t_index && t <= s.end_t_index) {
          hit = true;
          break;
        }
      }
      if (!hit) continue;
      oc += "<circle cx=\"" + fmt("%.2f", f.px(design.x(i, 0))) + "\" cy=\"" +
            fmt("%.2f", f.py(design.y(i))) + "\" r=\"1.8\"/>\n";
    }
    oc += "</g>\n";
    svg += oc;
  }

  // Fitted section along wind speed with the other features held at their
  // column medians.
  Eigen::RowVectorXd base(design.x.cols());
  std::vector<double> col(static_cast<std::size_t>(rows));
  for (Eigen::Index j = 0; j < design.x.cols(); ++j) {
    for (Eigen::Index i = 0; i < rows; ++i)
      col[static_cast<std::size_t>(i)] = design.x(i, j);
    std::sort(col.begin(), col.end());
    base(j) = col[static_cast<std::size_t>(rows / 2)];
  }
  const int grid = 200;
  Eigen::MatrixXd probe(grid, design.x.cols());
  for (int g = 0; g < grid; ++g) {
    probe.row(g) = base;
    probe(g, 0) = x_lo + (x_hi - x_lo) * g / (grid - 1.0);
  }
  const Eigen::VectorXd fit_y = predict(model, probe);
  std::string curve = "<polyline fill=\"none\" stroke=\"#1f77b4\" "
                      "stroke-width=\"2\" points=\"";
  for (int g = 0; g < grid; ++g) {
    const double yv = std::min(std::max(fit_y(g), f.y0), f.y1);
    curve += fmt("%.2f", f.px(probe(g, 0)));
    curve += ',';
    curve += fmt("%.2f", f.py(yv));
    curve += ' ';
  }
  curve += "\"/>\n";
  svg += curve;
  svg += "<text x=\"" + fmt("%.2f", f.left) +
         "\" y=\"20\" font-family=\"monospace\" font-size=\"12\" "
         "fill=\"#333333\">fitted power curve, " +
         std::to_string(static_cast<long long>(rows)) + " filtered rows, " +
         std::to_string(model.basis.size()) + " basis functions</text>\n";
  svg += "</svg>\n";
  return svg;
}

void write_run_summary(std::ostream& out, const RunSummary& s) {
  out << "input_rows = " << s.filter.input << '\n';
  out << "rows_dropped_missing = " << s.filter.missing_field << '\n';
  out << "rows_dropped_idle = " << s.filter.idle << '\n';
  out << "rows_dropped_adjacent = " << s.filter.adjacent_to_idle << '\n';
  out << "rows_dropped_pitch = " << s.filter.pitch_exceeded << '\n';
  out << "rows_retained = " << s.filter.retained << '\n';
  out << "design_rows = " << s.design_rows << '\n';
  out << "mars_terms = " << s.mars_terms << '\n';
  out << "mars_gcv = " << fmt("%.17g", s.mars_gcv) << '\n';
  out << "rmse_power_curve = " << fmt("%.17g", s.rmse_mars) << '\n';
  out << "ar_order = " << s.ar_order << '\n';
  out << "ifgls_iterations = " << s.ifgls_iterations << '\n';
  out << "ifgls_converged = " << (s.ifgls_converged ? "yes" : "no") << '\n';
  out << "rmse_whitened = " << fmt("%.17g", s.rmse_ifgls) << '\n';
  out << "subgroups = " << s.subgroups << '\n';
  out << "chart_rounds = " << s.chart_rounds << '\n';
  out << "segments_removed = " << s.segments_removed << '\n';
  out << "termination = " << s.termination << '\n';
  out << "final_p = " << fmt("%.17g", s.final_p) << '\n';
}

RunSummary run(const RunConfig& config) {
  config.validate();

  ParseOptions popts;
  popts.columns = config.columns;
  popts.row_filter = config.row_filter;
  ParseDiagnostics diag;
  const std::vector<ScadaRecord> records =
      parse_scada_file(config.input_path, popts, &diag);

  auto [kept, filter] = rough_filter(records);
  // Present one ledger for the whole intake: parse drops fold into the
  // missing-field bucket so the counters sum to the rows seen.
  filter.input = diag.total_rows;
  filter.missing_field = diag.missing_field + diag.duplicate_timestamp;

  const Design design = featurize(kept);
  if (design.rows() < 30)
    throw std::runtime_error("report: too few rows after filtering");

  namespace fs = std::filesystem;
  fs::create_directories(config.output_dir);
  const auto path = [&](const char* name) {
    return (fs::path(config.output_dir) / name).string();
  };

  write_file(path("filter_report.txt"), filter_report_text(filter));
  {
    std::ofstream out(path("design.csv"), std::ios::binary);
    if (!out) throw std::runtime_error("report: cannot write design.csv");
    write_design_csv(out, design);
  }

  const MarsModel model = fit(design, config.mars);
  {
    std::ofstream out(path("model.txt"), std::ios::binary);
    if (!out) throw std::runtime_error("report: cannot write model.txt");
    write_model(out, model);
  }

  const IfglsResult whitened = ifgls_loop(design, model, config.ifgls);
  {
    std::ofstream out(path("ifgls_log.txt"), std::ios::binary);
    if (!out) throw std::runtime_error("report: cannot write ifgls_log.txt");
    write_ifgls_log(out, whitened);
  }
  write_residuals_file(path("mars_residuals.csv"),
                       raw_residuals(design, model));
  write_residuals_file(path("residuals.csv"), whitened.residuals);

  const AnalyzeOutcome outcome = analyze(whitened.residuals, config.chart);
  {
    std::ofstream out(path("segments.csv"), std::ios::binary);
    if (!out) throw std::runtime_error("report: cannot write segments.csv");
    write_segments_csv(out, outcome);
  }
  {
    std::ofstream out(path("plot_data.csv"), std::ios::binary);
    if (!out) throw std::runtime_error("report: cannot write plot_data.csv");
    write_plot_data_csv(out, outcome);
  }
  write_file(path("control_chart.svg"), svg_control_chart(outcome));
  write_file(path("power_curve.svg"), svg_power_curve(design, model, &outcome));

  RunSummary summary;
  summary.filter = filter;
  summary.parse = diag;
  summary.design_rows = design.rows();
  summary.mars_terms = static_cast<int>(model.basis.size());
  summary.mars_gcv = model.gcv_score;
  summary.rmse_mars = whitened.rmse_before;
  summary.ar_order = whitened.ar.order;
  summary.ifgls_iterations = whitened.iterations;
  summary.ifgls_converged = whitened.converged;
  summary.rmse_ifgls = whitened.rmse_after;
  summary.subgroups = static_cast<int>(outcome.initial.count());
  summary.chart_rounds = static_cast<int>(outcome.rounds.size());
  summary.segments_removed = static_cast<int>(outcome.removed.size());
  summary.termination = outcome.termination;
  summary.final_p = outcome.rounds.empty() ? 1.0 : outcome.rounds.back().p;

  std::ostringstream sum;
  write_run_summary(sum, summary);
  write_file(path("run_summary.txt"), sum.str());
  return summary;
}

}  // namespace windchart
