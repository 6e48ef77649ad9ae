#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "windchart/report.hpp"
#include "windchart/synth.hpp"

namespace {

namespace fs = std::filesystem;
using namespace windchart;

struct IngestArgs {
  std::string input;
  std::vector<std::string> columns;
  std::string row_filter;

  void attach(CLI::App* cmd) {
    cmd->add_option("--input", input, "SCADA CSV export")->required();
    cmd->add_option("--columns", columns,
                    "column names: timestamp,power,wind_speed,wind_dir,"
                    "out_temp,turb,wind_dir_sd,out_temp_sd,pitch")
        ->delimiter(',')
        ->expected(9);
    cmd->add_option("--row-filter", row_filter,
                    "keep rows where COLUMN=VALUE, e.g. a turbine id");
  }

  void fill(RunConfig& cfg) const {
    cfg.input_path = input;
    if (!columns.empty()) {
      cfg.columns.timestamp = columns[0];
      cfg.columns.power_kw = columns[1];
      cfg.columns.wind_speed = columns[2];
      cfg.columns.wind_dir = columns[3];
      cfg.columns.out_temp = columns[4];
      cfg.columns.turb_intensity = columns[5];
      cfg.columns.wind_dir_sd = columns[6];
      cfg.columns.out_temp_sd = columns[7];
      cfg.columns.pitch_deg = columns[8];
    }
    if (!row_filter.empty()) {
      const auto eq = row_filter.find('=');
      if (eq == std::string::npos || eq == 0 || eq + 1 == row_filter.size())
        throw CLI::ValidationError("--row-filter", "expected COLUMN=VALUE");
      cfg.row_filter = {row_filter.substr(0, eq), row_filter.substr(eq + 1)};
    }
  }
};

void attach_mars(CLI::App* cmd, MarsConfig& mars) {
  cmd->add_option("--max-terms", mars.max_terms,
                  "forward-pass basis limit, 0 = automatic");
  cmd->add_option("--max-degree", mars.max_degree, "max hinge interactions");
  cmd->add_option("--penalty", mars.d, "GCV cost per basis function");
  cmd->add_option("--max-knots", mars.max_knots, "candidate knots per sweep");
}

void attach_ifgls(CLI::App* cmd, IfglsConfig& ifgls) {
  cmd->add_option("--ar-order", ifgls.order, "AR order, -1 = select by BIC");
  cmd->add_option("--ar-order-max", ifgls.order_max, "BIC search ceiling");
  cmd->add_option("--conv-threshold", ifgls.conv_threshold,
                  "max AR coefficient change at convergence");
  cmd->add_option("--lb-alpha", ifgls.alpha_lb, "Box-Ljung level per lag");
  cmd->add_option("--max-iterations", ifgls.max_iter, "iteration cap");
}

void attach_chart(CLI::App* cmd, AnalyzeConfig& chart, bool& seed_set) {
  cmd->add_option("--subgroup-size", chart.subgroup_size,
                  "residuals per subgroup");
  cmd->add_option("--stages", chart.stages, "max change points searched");
  cmd->add_option("--min-segment", chart.min_segment,
                  "min subgroups per segment");
  cmd->add_option("--permutations", chart.permutations,
                  "reference sample size");
  cmd->add_option("--alpha", chart.alpha, "chart false-alarm level");
  cmd->add_option("--seed", chart.seed, "permutation seed")
      ->required()
      ->each([&seed_set](const std::string&) { seed_set = true; });
  cmd->add_option("--threads", chart.threads, "permutation worker threads");
}

void write_or_die(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << content;
}

int cmd_filter(const RunConfig& cfg) {
  ParseOptions popts{cfg.columns, cfg.row_filter};
  ParseDiagnostics diag;
  const auto records = parse_scada_file(cfg.input_path, popts, &diag);
  auto [kept, report] = rough_filter(records);
  report.input = diag.total_rows;
  report.missing_field = diag.missing_field + diag.duplicate_timestamp;
  const Design design = featurize(kept);

  fs::create_directories(cfg.output_dir);
  write_or_die((fs::path(cfg.output_dir) / "filter_report.txt").string(),
               filter_report_text(report));
  std::ofstream out((fs::path(cfg.output_dir) / "design.csv").string(),
                    std::ios::binary);
  if (!out) throw std::runtime_error("cannot write design.csv");
  write_design_csv(out, design);
  std::cout << filter_report_text(report);
  return 0;
}

int cmd_fit(const RunConfig& cfg, const std::string& design_path) {
  Design design;
  if (!design_path.empty()) {
    std::ifstream in(design_path);
    if (!in) throw std::runtime_error("cannot read " + design_path);
    design = read_design_csv(in);
  } else {
    ParseOptions popts{cfg.columns, cfg.row_filter};
    const auto records = parse_scada_file(cfg.input_path, popts, nullptr);
    design = featurize(rough_filter(records).first);
  }

  const MarsModel model = fit(design, cfg.mars);
  const IfglsResult whitened = ifgls_loop(design, model, cfg.ifgls);

  fs::create_directories(cfg.output_dir);
  {
    std::ofstream out((fs::path(cfg.output_dir) / "model.txt").string(),
                      std::ios::binary);
    if (!out) throw std::runtime_error("cannot write model.txt");
    write_model(out, model);
  }
  {
    std::ofstream out((fs::path(cfg.output_dir) / "ifgls_log.txt").string(),
                      std::ios::binary);
    if (!out) throw std::runtime_error("cannot write ifgls_log.txt");
    write_ifgls_log(out, whitened);
  }
  write_residuals_file(
      (fs::path(cfg.output_dir) / "mars_residuals.csv").string(),
      raw_residuals(design, model));
  write_residuals_file((fs::path(cfg.output_dir) / "residuals.csv").string(),
                       whitened.residuals);
  write_or_die((fs::path(cfg.output_dir) / "power_curve.svg").string(),
               svg_power_curve(design, model));

  std::cout << "basis_functions = " << model.basis.size() << '\n'
            << "rmse_power_curve = " << whitened.rmse_before << '\n'
            << "ar_order = " << whitened.ar.order << '\n'
            << "ifgls_converged = " << (whitened.converged ? "yes" : "no")
            << '\n'
            << "rmse_whitened = " << whitened.rmse_after << '\n';
  return 0;
}

int cmd_analyze(const RunConfig& cfg, const std::string& residual_path) {
  const ResidualSeries residuals = read_residuals_file(residual_path);
  const AnalyzeOutcome outcome = analyze(residuals, cfg.chart);

  fs::create_directories(cfg.output_dir);
  {
    std::ofstream out((fs::path(cfg.output_dir) / "segments.csv").string(),
                      std::ios::binary);
    if (!out) throw std::runtime_error("cannot write segments.csv");
    write_segments_csv(out, outcome);
  }
  {
    std::ofstream out((fs::path(cfg.output_dir) / "plot_data.csv").string(),
                      std::ios::binary);
    if (!out) throw std::runtime_error("cannot write plot_data.csv");
    write_plot_data_csv(out, outcome);
  }
  write_or_die((fs::path(cfg.output_dir) / "control_chart.svg").string(),
               svg_control_chart(outcome));

  std::cout << "subgroups = " << outcome.initial.count() << '\n'
            << "rounds = " << outcome.rounds.size() << '\n'
            << "segments_removed = " << outcome.removed.size() << '\n'
            << "termination = " << outcome.termination << '\n';
  if (!outcome.rounds.empty())
    std::cout << "final_p = " << outcome.rounds.back().p << '\n';
  return 0;
}

int cmd_run_all(const RunConfig& cfg) {
  const RunSummary summary = run(cfg);
  std::ostringstream text;
  write_run_summary(text, summary);
  std::cout << text.str();
  return 0;
}

struct SynthArgs {
  std::string output;
  std::string truth;
  SynthConfig cfg;
  std::vector<double> ar;
  std::string noise = "normal";
  std::string shift = "none";
  std::vector<std::int64_t> locations;
  std::vector<double> magnitudes;
  std::string start_time;
};

int cmd_synth(SynthArgs& a) {
  a.cfg.noise = noise_from_name(a.noise);
  a.cfg.shift.kind = shift_from_name(a.shift);
  a.cfg.shift.locations.assign(a.locations.begin(), a.locations.end());
  a.cfg.shift.magnitudes = a.magnitudes;
  if (!a.ar.empty())
    a.cfg.ar_coeffs = Eigen::Map<Eigen::VectorXd>(
        a.ar.data(), static_cast<Eigen::Index>(a.ar.size()));
  if (!a.start_time.empty()) {
    const auto ts = parse_timestamp(a.start_time);
    if (!ts)
      throw CLI::ValidationError("--start-time",
                                 "expected YYYY-MM-DD HH:MM[:SS]");
    a.cfg.start_time = *ts;
  }

  const SynthData data = gen_scada(a.cfg);
  std::ofstream out(a.output, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + a.output);
  write_scada_csv(out, data.records);
  if (!a.truth.empty()) {
    std::ofstream truth(a.truth, std::ios::binary);
    if (!truth) throw std::runtime_error("cannot write " + a.truth);
    write_truth(truth, a.cfg);
  }
  std::cout << "rows = " << data.records.size() << '\n'
            << "output = " << a.output << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"wind turbine power-curve monitoring"};
  app.set_config("--config", "", "INI file; sections per subcommand");
  app.require_subcommand(1);

  RunConfig cfg;
  IngestArgs ingest_filter, ingest_fit, ingest_run;
  std::string design_path, residual_path;
  bool seed_set_analyze = false, seed_set_run = false;

  CLI::App* c_filter =
      app.add_subcommand("filter", "ingest, filter, write the design");
  ingest_filter.attach(c_filter);
  c_filter->add_option("--output-dir", cfg.output_dir, "artifact directory");

  CLI::App* c_fit =
      app.add_subcommand("fit", "fit the power curve and whiten residuals");
  c_fit->add_option("--design", design_path,
                    "filtered design CSV from the filter step");
  c_fit->add_option("--input", ingest_fit.input, "raw SCADA CSV");
  c_fit->add_option("--columns", ingest_fit.columns, "see filter --columns")
      ->delimiter(',')
      ->expected(9);
  c_fit->add_option("--row-filter", ingest_fit.row_filter, "COLUMN=VALUE");
  c_fit->add_option("--output-dir", cfg.output_dir, "artifact directory");
  attach_mars(c_fit, cfg.mars);
  attach_ifgls(c_fit, cfg.ifgls);

  CLI::App* c_analyze =
      app.add_subcommand("analyze", "chart a whitened residual series");
  c_analyze->add_option("--residuals", residual_path, "residual CSV")
      ->required();
  c_analyze->add_option("--output-dir", cfg.output_dir, "artifact directory");
  attach_chart(c_analyze, cfg.chart, seed_set_analyze);

  CLI::App* c_run = app.add_subcommand("run-all", "full pipeline");
  ingest_run.attach(c_run);
  c_run->add_option("--output-dir", cfg.output_dir, "artifact directory");
  attach_mars(c_run, cfg.mars);
  attach_ifgls(c_run, cfg.ifgls);
  attach_chart(c_run, cfg.chart, seed_set_run);

  SynthArgs synth;
  CLI::App* c_synth =
      app.add_subcommand("synth", "generate a synthetic SCADA export");
  c_synth->add_option("--output", synth.output, "CSV path")->required();
  c_synth->add_option("--truth", synth.truth, "ground-truth sidecar path");
  c_synth->add_option("--rows", synth.cfg.rows, "row count");
  c_synth->add_option("--seed", synth.cfg.seed, "generator seed")->required();
  c_synth->add_option("--noise", synth.noise, "normal | t5 | exponential");
  c_synth->add_option("--noise-scale", synth.cfg.noise_scale,
                      "innovation scale in kW");
  c_synth->add_option("--ar", synth.ar, "AR coefficients")->delimiter(',');
  c_synth->add_option("--shift", synth.shift,
                      "none | isolated | step | multi_step | linear_trend");
  c_synth->add_option("--locations", synth.locations, "shift row indices")
      ->delimiter(',');
  c_synth->add_option("--magnitudes", synth.magnitudes, "shift sizes in kW")
      ->delimiter(',');
  c_synth->add_option("--start-time", synth.start_time,
                      "first row timestamp, UTC");
  c_synth->add_option("--step-seconds", synth.cfg.step_seconds,
                      "row spacing in seconds");

  CLI11_PARSE(app, argc, argv);

  try {
    if (c_filter->parsed()) {
      ingest_filter.fill(cfg);
      return cmd_filter(cfg);
    }
    if (c_fit->parsed()) {
      if (design_path.empty() == ingest_fit.input.empty())
        throw std::runtime_error("fit: pass exactly one of --design, --input");
      if (!ingest_fit.input.empty()) ingest_fit.fill(cfg);
      return cmd_fit(cfg, design_path);
    }
    if (c_analyze->parsed()) {
      cfg.seed_set = seed_set_analyze;
      return cmd_analyze(cfg, residual_path);
    }
    if (c_run->parsed()) {
      ingest_run.fill(cfg);
      cfg.seed_set = seed_set_run;
      return cmd_run_all(cfg);
    }
    if (c_synth->parsed()) return cmd_synth(synth);
  } catch (const std::exception& e) {
    std::cerr << "windchart: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
