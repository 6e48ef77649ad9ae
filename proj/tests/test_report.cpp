#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "windchart/ifgls.hpp"
#include "windchart/report.hpp"
#include "windchart/scada.hpp"
#include "windchart/synth.hpp"

using namespace windchart;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("windchart_" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::string make_input(const TempDir& dir, Eigen::Index rows,
                       bool with_step) {
  SynthConfig cfg;
  cfg.rows = rows;
  cfg.seed = 42;
  cfg.ar_coeffs = (Eigen::VectorXd(1) << 0.6).finished();
  if (with_step) {
    cfg.shift.kind = ShiftKind::step;
    cfg.shift.locations = {2 * rows / 3};
    cfg.shift.magnitudes = {150.0};
  }
  const SynthData data = gen_scada(cfg);
  const std::string path = dir.file("scada.csv");
  std::ofstream out(path, std::ios::binary);
  write_scada_csv(out, data.records);
  return path;
}

RunConfig base_config(const std::string& input, const std::string& out_dir) {
  RunConfig cfg;
  cfg.input_path = input;
  cfg.output_dir = out_dir;
  cfg.chart.permutations = 300;
  cfg.chart.seed = 7;
  cfg.seed_set = true;
  return cfg;
}

const char* kArtifacts[] = {
    "filter_report.txt", "design.csv",        "model.txt",
    "ifgls_log.txt",     "mars_residuals.csv", "residuals.csv",
    "segments.csv",      "plot_data.csv",      "control_chart.svg",
    "power_curve.svg",   "run_summary.txt"};

}  // namespace

TEST_CASE("a full run writes every artifact and a consistent summary") {
  TempDir dir("run_basic");
  const std::string input = make_input(dir, 500, true);
  const RunConfig cfg = base_config(input, dir.file("out"));
  const RunSummary s = run(cfg);

  for (const char* name : kArtifacts)
    CHECK(fs::exists(fs::path(cfg.output_dir) / name));

  CHECK(s.filter.input == 500);
  CHECK(s.design_rows == s.filter.retained);
  CHECK(s.mars_terms >= 1);
  CHECK(s.rmse_ifgls < s.rmse_mars);
  CHECK(s.chart_rounds >= 1);
  CHECK(s.segments_removed >= 1);
  CHECK(s.termination == "in_control");
  CHECK(s.final_p > 0.05);

  const std::string summary = slurp(cfg.output_dir + "/run_summary.txt");
  CHECK(summary.find("design_rows = 500") != std::string::npos);
  CHECK(summary.find("termination = in_control") != std::string::npos);
}

TEST_CASE("the summary rmse is recomputable from the residual file") {
  TempDir dir("run_rmse");
  const std::string input = make_input(dir, 400, false);
  const RunConfig cfg = base_config(input, dir.file("out"));
  const RunSummary s = run(cfg);

  const ResidualSeries r =
      read_residuals_file(cfg.output_dir + "/residuals.csv");
  const double rmse =
      std::sqrt(r.values.squaredNorm() / static_cast<double>(r.values.size()));
  CHECK(rmse == doctest::Approx(s.rmse_ifgls).epsilon(1e-9));

  const ResidualSeries raw =
      read_residuals_file(cfg.output_dir + "/mars_residuals.csv");
  const double rmse_raw = std::sqrt(raw.values.squaredNorm() /
                                    static_cast<double>(raw.values.size()));
  CHECK(rmse_raw == doctest::Approx(s.rmse_mars).epsilon(1e-9));
}

TEST_CASE("removed segments quote the original timestamps") {
  TempDir dir("run_map");
  const std::string input = make_input(dir, 500, true);
  const RunConfig cfg = base_config(input, dir.file("out"));
  const RunSummary s = run(cfg);
  REQUIRE(s.segments_removed >= 1);

  std::ifstream design_in(cfg.output_dir + "/design.csv");
  const Design design = read_design_csv(design_in);

  std::ifstream seg_in(cfg.output_dir + "/segments.csv");
  std::string line;
  std::getline(seg_in, line);  // header
  int rows = 0;
  while (std::getline(seg_in, line)) {
    if (line.empty()) continue;
    ++rows;
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    REQUIRE(cells.size() == 12);
    const long lo = std::stol(cells[4]);
    const long hi = std::stol(cells[5]);
    REQUIRE(lo >= 0);
    REQUIRE(hi < static_cast<long>(design.timestamps.size()));
    CHECK(*parse_timestamp(cells[6]) ==
          design.timestamps[static_cast<std::size_t>(lo)]);
    CHECK(*parse_timestamp(cells[7]) ==
          design.timestamps[static_cast<std::size_t>(hi)]);
  }
  CHECK(rows == s.segments_removed);
}

TEST_CASE("identical runs produce identical bytes at any thread count") {
  TempDir dir("run_bytes");
  const std::string input = make_input(dir, 400, true);

  RunConfig a = base_config(input, dir.file("a"));
  a.chart.threads = 1;
  RunConfig b = base_config(input, dir.file("b"));
  b.chart.threads = 3;
  run(a);
  run(b);
  for (const char* name : kArtifacts) {
    const std::string lhs = slurp(a.output_dir + "/" + name);
    const std::string rhs = slurp(b.output_dir + "/" + name);
    CHECK_MESSAGE(lhs == rhs, name);
  }
}

TEST_CASE("configuration is validated before any file is touched") {
  RunConfig cfg = base_config("/nonexistent/input.csv", "/nonexistent/out");
  cfg.chart.subgroup_size = 0;
  CHECK_THROWS_AS((void)run(cfg), std::invalid_argument);

  cfg = base_config("/nonexistent/input.csv", "/nonexistent/out");
  cfg.chart.alpha = 0.0;
  CHECK_THROWS_AS((void)run(cfg), std::invalid_argument);

  cfg = base_config("/nonexistent/input.csv", "/nonexistent/out");
  cfg.ifgls.max_iter = 0;
  CHECK_THROWS_AS((void)run(cfg), std::invalid_argument);

  cfg = base_config("/nonexistent/input.csv", "/nonexistent/out");
  cfg.seed_set = false;
  CHECK_THROWS_AS((void)run(cfg), std::invalid_argument);

  // A clean config still fails, but only once it reaches the filesystem.
  cfg = base_config("/nonexistent/input.csv", "/nonexistent/out");
  CHECK_THROWS_AS((void)run(cfg), std::runtime_error);
}

TEST_CASE("charts are well formed and mark removals only when present") {
  TempDir dir("run_svg");
  const std::string with = make_input(dir, 500, true);
  const RunConfig cfg = base_config(with, dir.file("out"));
  const RunSummary s = run(cfg);
  REQUIRE(s.segments_removed >= 1);

  const std::string chart = slurp(cfg.output_dir + "/control_chart.svg");
  CHECK(chart.rfind("<svg", 0) == 0);
  CHECK(chart.find("</svg>") != std::string::npos);
  CHECK(chart.find("nan") == std::string::npos);
  CHECK(chart.find("#d62728") != std::string::npos);  // removed markers

  const std::string curve = slurp(cfg.output_dir + "/power_curve.svg");
  CHECK(curve.rfind("<svg", 0) == 0);
  CHECK(curve.find("</svg>") != std::string::npos);
  CHECK(curve.find("#d62728") != std::string::npos);  // flagged points

  TempDir dir2("run_svg_quiet");
  const std::string without = make_input(dir2, 400, false);
  const RunConfig quiet = base_config(without, dir2.file("out"));
  const RunSummary qs = run(quiet);
  if (qs.segments_removed == 0) {
    const std::string curve2 = slurp(quiet.output_dir + "/power_curve.svg");
    CHECK(curve2.find("#d62728") == std::string::npos);
  }
}

TEST_CASE("degenerate chart inputs render placeholders") {
  AnalyzeOutcome empty;
  empty.termination = "insufficient_data";
  const std::string svg = svg_control_chart(empty);
  CHECK(svg.find("no subgroups to chart") != std::string::npos);

  Design d;
  d.y.resize(0);
  d.x.resize(0, 1);
  MarsModel m;
  m.basis = {BasisFunction{}};
  m.coeffs = Eigen::VectorXd::Constant(1, 0.0);
  const std::string curve = svg_power_curve(d, m);
  CHECK(curve.find("no data") != std::string::npos);
}

TEST_CASE("the plot csv change point column survives the pipeline") {
  TempDir dir("run_plotcsv");
  const std::string input = make_input(dir, 500, true);
  const RunConfig cfg = base_config(input, dir.file("out"));
  run(cfg);
  std::ifstream in(cfg.output_dir + "/plot_data.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header.find(",change_point,removed_round") != std::string::npos);
  bool any_flag = false;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() == 9 && cells[7] == "1") any_flag = true;
  }
  CHECK(any_flag);
}
