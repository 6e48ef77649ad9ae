#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "windchart/rng.hpp"
#include "windchart/rsp.hpp"
#include "windchart/synth.hpp"

using namespace windchart;

namespace {

ResidualSeries series_of(const Eigen::VectorXd& values, long t0 = 0) {
  ResidualSeries r;
  r.values = values;
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    r.t_index.push_back(t0 + static_cast<long>(i));
    r.timestamps.push_back(1356998400 + 600 * (t0 + static_cast<long>(i)));
  }
  return r;
}

Eigen::VectorXd iota(int n) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = i + 1;
  return v;
}

}  // namespace

TEST_CASE("subgrouping drops the ragged tail and averages rows") {
  const SubgroupMatrix sg = subgroup_values(iota(20), 6);
  CHECK(sg.count() == 3);
  CHECK(sg.dropped == 2);
  CHECK(sg.values.rows() == 3);
  CHECK(sg.values.cols() == 6);
  CHECK(sg.means(0) == 3.5);
  CHECK(sg.means(1) == 9.5);
  CHECK(sg.means(2) == 15.5);
  CHECK(sg.grand_mean == doctest::Approx(9.5).epsilon(1e-15));
}

TEST_CASE("subgrouping a series keeps index and time ranges per row") {
  const ResidualSeries r = series_of(iota(13), 100);
  const SubgroupMatrix sg = subgroup(r, 5);
  REQUIRE(sg.count() == 2);
  CHECK(sg.dropped == 3);
  CHECK(sg.t_index_ranges[0] == std::make_pair(100L, 104L));
  CHECK(sg.t_index_ranges[1] == std::make_pair(105L, 109L));
  CHECK(sg.time_ranges[0].first == 1356998400 + 600 * 100);
  CHECK(sg.time_ranges[1].second == 1356998400 + 600 * 109);
}

TEST_CASE("isolated statistic is the largest absolute deviation") {
  Eigen::VectorXd m3(3);
  m3 << 1, 2, 3;
  CHECK(stat_isolated(m3, 2.0) == 1.0);
  Eigen::VectorXd m0(3);
  m0 << 0, 0, 10;
  CHECK(stat_isolated(m0, 10.0 / 3.0) == doctest::Approx(20.0 / 3.0).epsilon(1e-15));
  CHECK(stat_isolated(Eigen::VectorXd::Constant(4, 7.0), 7.0) == 0.0);
}

TEST_CASE("one split of the worked means lands at the step") {
  Eigen::VectorXd means(4);
  means << 0, 0, 5, 5;
  const SegmentationResult seg = segment_stats(means, 1, 1);
  REQUIRE(seg.completed == 1);
  CHECK(seg.change_points[0] == 2);
  CHECK(seg.stats[1] == 25.0);
  REQUIRE(seg.stage_means.size() == 1);
  CHECK(seg.stage_means[0][0] == 0.0);
  CHECK(seg.stage_means[0][1] == 5.0);
}

TEST_CASE("constant means yield zero statistics at every stage") {
  const SegmentationResult seg =
      segment_stats(Eigen::VectorXd::Zero(12), 3, 2);
  for (double s : seg.stats) CHECK(s == 0.0);
}

TEST_CASE("splitting deeper never lowers the between-segment sum") {
  // stats[0] is the isolated-shift statistic, a different functional, so the
  // nesting argument applies from stage one onward only.
  std::mt19937_64 eng(77);
  std::normal_distribution<double> gauss;
  for (int rep = 0; rep < 20; ++rep) {
    Eigen::VectorXd means(30);
    for (int i = 0; i < 30; ++i) means(i) = gauss(eng);
    const SegmentationResult seg = segment_stats(means, 6, 2);
    REQUIRE(seg.completed >= 2);
    for (int k = 2; k <= seg.completed; ++k)
      CHECK(seg.stats[static_cast<std::size_t>(k)] >=
            seg.stats[static_cast<std::size_t>(k - 1)] - 1e-12);
  }
}

TEST_CASE("shifting all means leaves the statistics unchanged") {
  std::mt19937_64 eng(78);
  std::normal_distribution<double> gauss;
  Eigen::VectorXd means(24);
  for (int i = 0; i < 24; ++i) means(i) = gauss(eng);
  const SegmentationResult base = segment_stats(means, 4, 2);
  const SegmentationResult moved =
      segment_stats((means.array() + 37.5).matrix(), 4, 2);
  REQUIRE(moved.completed == base.completed);
  CHECK(moved.change_points == base.change_points);
  for (std::size_t k = 0; k < base.stats.size(); ++k)
    CHECK(moved.stats[k] == doctest::Approx(base.stats[k]).epsilon(1e-9));
}

TEST_CASE("scaling the means scales the statistics by their degree") {
  std::mt19937_64 eng(79);
  std::normal_distribution<double> gauss;
  Eigen::VectorXd means(24);
  for (int i = 0; i < 24; ++i) means(i) = gauss(eng);
  const double c = -3.0;
  const SegmentationResult base = segment_stats(means, 4, 2);
  const SegmentationResult scaled = segment_stats((c * means).matrix(), 4, 2);
  REQUIRE(scaled.completed == base.completed);
  CHECK(scaled.stats[0] ==
        doctest::Approx(std::fabs(c) * base.stats[0]).epsilon(1e-9));
  for (int k = 1; k <= base.completed; ++k)
    CHECK(scaled.stats[static_cast<std::size_t>(k)] ==
          doctest::Approx(c * c * base.stats[static_cast<std::size_t>(k)])
              .epsilon(1e-9));
}

TEST_CASE("tied splits take the smallest boundary") {
  Eigen::VectorXd means(4);
  means << 5, 0, 0, 5;
  const SegmentationResult seg = segment_stats(means, 1, 1);
  CHECK(seg.change_points[0] == 1);
}

TEST_CASE("minimum segment length constrains the boundary") {
  Eigen::VectorXd means = Eigen::VectorXd::Zero(10);
  means(0) = 9.0;
  const SegmentationResult seg = segment_stats(means, 1, 3);
  REQUIRE(seg.completed == 1);
  CHECK(seg.change_points[0] >= 3);
  CHECK(seg.change_points[0] <= 7);
  CHECK(seg.change_points[0] == 3);
}

TEST_CASE("infeasible stages are truncated and recorded") {
  const SegmentationResult none = segment_stats(Eigen::VectorXd::Zero(5), 2, 3);
  CHECK(none.requested == 2);
  CHECK(none.completed == 0);
  CHECK(none.change_points.empty());
  REQUIRE(none.stats.size() == 1);

  Eigen::VectorXd six(6);
  six << 1, 1, 1, 9, 9, 9;
  const SegmentationResult one = segment_stats(six, 2, 3);
  CHECK(one.requested == 2);
  CHECK(one.completed == 1);
  CHECK(one.change_points.size() == 1);
}

TEST_CASE("first stage agrees with the naive split scan bit for bit") {
  std::mt19937_64 eng(101);
  std::normal_distribution<double> gauss;
  std::uniform_int_distribution<int> msize(4, 200);
  std::uniform_int_distribution<int> lmin(1, 3);
  for (int rep = 0; rep < 60; ++rep) {
    const int m = msize(eng);
    int l = lmin(eng);
    if (2 * l > m) l = 1;
    Eigen::VectorXd means(m);
    for (int i = 0; i < m; ++i) means(i) = gauss(eng);
    const SegmentationResult seg = segment_stats(means, 1, l);
    const SplitOracle oracle = oracle_single_split(means, l);
    REQUIRE(seg.completed == 1);
    CHECK(seg.change_points[0] == oracle.tau);
    CHECK(seg.stats[1] == oracle.t1);
  }
}

TEST_CASE("aggregate statistic reproduces the worked values") {
  Eigen::VectorXd t(2), u(2), v(2);
  t << 5, 12;
  u << 5, 10;
  v << 1, 2;
  CHECK(aggregate_stat(t, u, v) == 1.0);
  CHECK(aggregate_stat(u, u, v) == 0.0);
  Eigen::VectorXd t1(1), u1(1), v1(1);
  t1 << 10;
  u1 << 4;
  v1 << 2;
  CHECK(aggregate_stat(t1, u1, v1) == 3.0);
}

TEST_CASE("p-value counts the reference tail at or above the observation") {
  Eigen::VectorXd w(4);
  w << 0.5, 1.5, 2.5, 3.5;
  CHECK(p_value(2.0, w) == 0.5);
  CHECK(p_value(0.0, w) == 1.0);
  CHECK(p_value(4.0, w) == 0.0);
  CHECK(p_value(2.5, w) == 0.5);  // ties count into the tail
}

TEST_CASE("p-value depends only on ranks") {
  Eigen::VectorXd w(5);
  w << 1, 2, 3, 4, 5;
  Eigen::VectorXd w2 = (w.array() * 100.0 - 7.0).matrix();
  CHECK(p_value(3.5, w) == p_value(3.5 * 100.0 - 7.0, w2));
}

TEST_CASE("permutation reference is seed-stable and thread-invariant") {
  const SubgroupMatrix sg = subgroup_values(
      gen_noise(NoiseKind::normal, 120, 5), 6);
  const ReferenceStats a = permutation_reference(sg, 3, 2, 400, 9, 1, 1);
  const ReferenceStats b = permutation_reference(sg, 3, 2, 400, 9, 1, 1);
  const ReferenceStats c = permutation_reference(sg, 3, 2, 400, 9, 1, 4);
  CHECK((a.u - b.u).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.u - c.u).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.v - c.v).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.w_tilde - c.w_tilde).cwiseAbs().maxCoeff() == 0.0);

  const ReferenceStats other = permutation_reference(sg, 3, 2, 400, 9, 2, 1);
  CHECK((a.w_tilde - other.w_tilde).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("a constant pool has no reference spread") {
  const SubgroupMatrix sg =
      subgroup_values(Eigen::VectorXd::Constant(60, 1.25), 6);
  CHECK_THROWS_AS((void)permutation_reference(sg, 2, 2, 100, 1, 1, 1),
                  std::runtime_error);
}

TEST_CASE("monte carlo p-value approaches the exact enumeration") {
  // Subgroups of two, so shuffling the pool genuinely reshapes the means and
  // every stage statistic has spread under permutation.
  Eigen::VectorXd values(8);
  values << 0.3, -1.2, 0.8, 2.4, -0.7, 1.9, -2.2, 0.4;
  const int stages = 1, lmin = 1;
  const ExactPermutation exact =
      oracle_exact_permutation(values, 2, stages, lmin);

  const SubgroupMatrix sg = subgroup_values(values, 2);
  const SegmentationResult seg = segment_stats(sg.means, stages, lmin);
  Eigen::VectorXd t(2);
  t << seg.stats[0], seg.stats[1];
  const ReferenceStats ref =
      permutation_reference(sg, stages, lmin, 20000, 31, 1, 2);
  const double w = aggregate_stat(t, ref.u, ref.v);
  const double p = p_value(w, ref.w_tilde);
  CHECK(std::fabs(p - exact.p) <= 0.01);
  CHECK(ref.u(0) == doctest::Approx(exact.u(0)).epsilon(0.05));
  CHECK(ref.u(1) == doctest::Approx(exact.u(1)).epsilon(0.05));
}

TEST_CASE("analysis flags a sustained step and then settles") {
  Eigen::VectorXd values = gen_noise(NoiseKind::normal, 200, 44);
  for (Eigen::Index i = 150; i < 200; ++i) values(i) += 3.0;
  AnalyzeConfig cfg;
  cfg.subgroup_size = 5;
  cfg.min_segment = 3;
  cfg.stages = 10;
  cfg.permutations = 500;
  cfg.alpha = 0.05;
  cfg.seed = 7;
  const AnalyzeOutcome out = analyze(series_of(values), cfg);
  CHECK(out.termination == "in_control");
  REQUIRE(!out.removed.empty());
  CHECK(out.rounds.front().p <= 0.05);
  CHECK(out.rounds.back().p > 0.05);
  // The step spans values 150..199; the dominant removed block sits on it.
  const OcSegment& s = out.removed.front();
  CHECK(s.start_t_index >= 135);
  CHECK(s.start_t_index <= 165);
  CHECK(s.end_t_index >= 165);
  CHECK(out.retained.values.size() < 200);
  // Removed ranges refer to the original series indexes.
  for (const OcSegment& seg : out.removed) {
    CHECK(seg.start_t_index >= 0);
    CHECK(seg.end_t_index <= 199);
    CHECK(seg.start_t_index <= seg.end_t_index);
  }
}

TEST_CASE("an isolated spike is removed as a single subgroup") {
  Eigen::VectorXd values = gen_noise(NoiseKind::normal, 200, 45);
  for (Eigen::Index i = 60; i < 65; ++i) values(i) += 6.0;
  AnalyzeConfig cfg;
  cfg.subgroup_size = 5;
  cfg.min_segment = 3;
  cfg.stages = 10;
  cfg.permutations = 500;
  cfg.alpha = 0.05;
  cfg.seed = 8;
  const AnalyzeOutcome out = analyze(series_of(values), cfg);
  REQUIRE(!out.removed.empty());
  const OcSegment& s = out.removed.front();
  CHECK(s.stage == 0);
  CHECK(s.end_subgroup - s.start_subgroup == 1);
  CHECK(s.start_subgroup == 12);
  CHECK(s.start_t_index == 60);
  CHECK(s.end_t_index == 64);
}

TEST_CASE("quiet data stays in control with nothing removed") {
  const Eigen::VectorXd values = gen_noise(NoiseKind::normal, 240, 46);
  AnalyzeConfig cfg;
  cfg.subgroup_size = 6;
  cfg.min_segment = 5;
  cfg.permutations = 500;
  cfg.alpha = 0.05;
  cfg.seed = 9;
  const AnalyzeOutcome out = analyze(series_of(values), cfg);
  CHECK(out.termination == "in_control");
  CHECK(out.removed.empty());
  CHECK(out.rounds.size() == 1);
  CHECK(out.retained.values.size() == 240);
}

TEST_CASE("alpha at one reports a round but never removes") {
  Eigen::VectorXd values = gen_noise(NoiseKind::normal, 200, 47);
  for (Eigen::Index i = 100; i < 200; ++i) values(i) += 3.0;
  AnalyzeConfig cfg;
  cfg.subgroup_size = 5;
  cfg.min_segment = 3;
  cfg.permutations = 300;
  cfg.alpha = 1.0;
  cfg.seed = 10;
  const AnalyzeOutcome out = analyze(series_of(values), cfg);
  CHECK(out.termination == "alpha_unreachable");
  CHECK(out.removed.empty());
  CHECK(out.rounds.size() == 1);
  CHECK(out.retained.values.size() == 200);
}

TEST_CASE("bad configuration and short series are rejected up front") {
  const ResidualSeries r = series_of(gen_noise(NoiseKind::normal, 100, 48));
  AnalyzeConfig cfg;
  cfg.subgroup_size = 0;
  CHECK_THROWS_AS((void)analyze(r, cfg), std::invalid_argument);
  cfg = AnalyzeConfig{};
  cfg.alpha = 0.0;
  CHECK_THROWS_AS((void)analyze(r, cfg), std::invalid_argument);
  cfg = AnalyzeConfig{};
  cfg.alpha = 1.5;
  CHECK_THROWS_AS((void)analyze(r, cfg), std::invalid_argument);
  cfg = AnalyzeConfig{};
  cfg.permutations = 1;
  CHECK_THROWS_AS((void)analyze(r, cfg), std::invalid_argument);

  // n * 2 * min_segment = 6 * 2 * 5 = 60 values needed.
  cfg = AnalyzeConfig{};
  cfg.seed = 1;
  const ResidualSeries tiny = series_of(gen_noise(NoiseKind::normal, 59, 49));
  CHECK_THROWS_AS((void)analyze(tiny, cfg), std::invalid_argument);
}

TEST_CASE("segment csv lists one row per removal with original indexes") {
  Eigen::VectorXd values = gen_noise(NoiseKind::normal, 200, 50);
  for (Eigen::Index i = 100; i < 200; ++i) values(i) += 3.0;
  AnalyzeConfig cfg;
  cfg.subgroup_size = 5;
  cfg.min_segment = 3;
  cfg.permutations = 400;
  cfg.alpha = 0.05;
  cfg.seed = 11;
  const AnalyzeOutcome out = analyze(series_of(values, 1000), cfg);
  REQUIRE(!out.removed.empty());

  std::ostringstream os;
  write_segments_csv(os, out);
  std::istringstream in(os.str());
  std::string line;
  std::getline(in, line);
  CHECK(line.find("round,stage,start_subgroup") == 0);
  int rows = 0;
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  CHECK(rows == static_cast<int>(out.removed.size()));
  // Offsets follow the t_index base of the input series.
  CHECK(out.removed.front().start_t_index >= 1000);
}

TEST_CASE("plot csv flags round-one change points") {
  Eigen::VectorXd values = gen_noise(NoiseKind::normal, 200, 51);
  for (Eigen::Index i = 100; i < 200; ++i) values(i) += 3.0;
  AnalyzeConfig cfg;
  cfg.subgroup_size = 5;
  cfg.min_segment = 3;
  cfg.permutations = 400;
  cfg.alpha = 0.05;
  cfg.seed = 12;
  const AnalyzeOutcome out = analyze(series_of(values), cfg);
  std::ostringstream os;
  write_plot_data_csv(os, out);
  std::istringstream in(os.str());
  std::string header;
  std::getline(in, header);
  CHECK(header ==
        "subgroup,start_t_index,end_t_index,start_timestamp,end_timestamp,"
        "mean,grand_mean,change_point,removed_round");
  int rows = 0, flagged = 0, removed = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++rows;
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    REQUIRE(cells.size() == 9);
    if (cells[7] == "1") ++flagged;
    if (cells[8] != "0") ++removed;
  }
  CHECK(rows == static_cast<int>(out.initial.count()));
  const ChartRound& r1 = out.rounds.front();
  CHECK(flagged == std::min(r1.k_star, r1.seg.completed));
  if (!out.removed.empty()) CHECK(removed > 0);
}
