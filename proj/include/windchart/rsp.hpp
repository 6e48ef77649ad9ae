#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "windchart/ifgls.hpp"

namespace windchart {

// Residuals grouped into rational subgroups of n consecutive values.
// Trailing values that do not fill a subgroup are dropped.
struct SubgroupMatrix {
  Eigen::MatrixXd values;  // m x n, row per subgroup, time order
  Eigen::VectorXd means;
  double grand_mean = 0.0;
  Eigen::Index dropped = 0;
  std::vector<std::pair<long, long>> t_index_ranges;          // per subgroup
  std::vector<std::pair<std::int64_t, std::int64_t>> time_ranges;

  Eigen::Index count() const { return means.size(); }
};

SubgroupMatrix subgroup(const ResidualSeries& r, int n);
SubgroupMatrix subgroup_values(const Eigen::Ref<const Eigen::VectorXd>& values,
                               int n);

// Shewhart-style stage-0 statistic: largest absolute mean deviation.
double stat_isolated(const Eigen::Ref<const Eigen::VectorXd>& means,
                     double grand_mean);

// Greedy recursive binary segmentation of the subgroup means.
struct SegmentationResult {
  std::vector<int> change_points;  // boundary positions, placement order
  std::vector<double> stats;       // stats[k] for stage k = 0..completed
  // stage_means[k-1] holds the k+1 segment means of stage k, left to right.
  std::vector<std::vector<double>> stage_means;
  int requested = 0;
  int completed = 0;               // stages with a feasible split
};

// stats[0] is the isolated statistic; stats[k] the between-segment sum of
// squares after k greedy splits, every segment at least min_len long.
SegmentationResult segment_stats(const Eigen::Ref<const Eigen::VectorXd>& means,
                                 int stages, int min_len);

// Permutation reference: per-stage mean and spread of the stage statistics
// over `count` random permutations of the pooled residuals, plus the
// studentized maxima of each permutation.
struct ReferenceStats {
  Eigen::VectorXd u;        // stage means
  Eigen::VectorXd v;        // stage standard deviations, divisor count-1
  Eigen::VectorXd w_tilde;  // per-permutation studentized maximum
};

ReferenceStats permutation_reference(const SubgroupMatrix& sg, int stages,
                                     int min_len, int count,
                                     std::uint64_t seed, std::uint64_t round,
                                     int threads);

// W = max_k (T_k - u_k) / v_k.
double aggregate_stat(const Eigen::Ref<const Eigen::VectorXd>& t_stats,
                      const Eigen::Ref<const Eigen::VectorXd>& u,
                      const Eigen::Ref<const Eigen::VectorXd>& v);

// Fraction of permutations with a studentized maximum at least w.
double p_value(double w, const Eigen::Ref<const Eigen::VectorXd>& w_tilde);

struct OcSegment {
  int round = 0;   // 1-based removal round
  int stage = 0;   // stage whose segmentation supplied the segment
  int start_subgroup = 0;  // inclusive, 0-based within that round
  int end_subgroup = 0;    // exclusive
  long start_t_index = 0;
  long end_t_index = 0;
  std::int64_t start_time = 0;
  std::int64_t end_time = 0;
  double segment_mean = 0.0;
  double grand_mean = 0.0;
  double w_stat = 0.0;
  double p = 0.0;
};

struct ChartRound {
  int subgroups = 0;
  Eigen::VectorXd t_stats;  // padded to the effective stage count
  Eigen::VectorXd u, v;
  double w = 0.0;
  double p = 0.0;
  int k_star = 0;
  SegmentationResult seg;
};

struct AnalyzeConfig {
  int subgroup_size = 6;
  int stages = 50;
  int min_segment = 5;
  int permutations = 1000;
  double alpha = 0.05;
  std::uint64_t seed = 0;
  int threads = 1;
};

struct AnalyzeOutcome {
  std::vector<ChartRound> rounds;
  std::vector<OcSegment> removed;
  SubgroupMatrix initial;     // round-1 subgrouping, kept for plotting
  ResidualSeries retained;
  // "in_control", "insufficient_data", or "alpha_unreachable" (alpha >= 1
  // can never clear, so one evaluation is reported and nothing is removed).
  std::string termination;
};

// Repeats chart evaluation, removing the dominant out-of-control segment
// each round, until the permutation p-value clears alpha.
AnalyzeOutcome analyze(const ResidualSeries& residuals,
                       const AnalyzeConfig& config);

void write_segments_csv(std::ostream& out, const AnalyzeOutcome& outcome);
void write_plot_data_csv(std::ostream& out, const AnalyzeOutcome& outcome);

}  // namespace windchart
