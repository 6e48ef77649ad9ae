#include "windchart/rsp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <ostream>
#include <stdexcept>
#include <thread>

#include "windchart/rng.hpp"

namespace windchart {

namespace {

// Reductions are written as plain ordered loops on purpose: stage statistics
// must come out identical no matter which code path produced the subgroup
// means (direct, permuted, or a reference implementation).
double seq_sum(const Eigen::Ref<const Eigen::VectorXd>& v) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) s += v(i);
  return s;
}

Eigen::VectorXd block_means(const std::vector<double>& values, int n,
                            Eigen::Index m) {
  Eigen::VectorXd means(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    double s = 0.0;
    for (int j = 0; j < n; ++j)
      s += values[static_cast<std::size_t>(i) * static_cast<std::size_t>(n) +
                  static_cast<std::size_t>(j)];
    means(i) = s / n;
  }
  return means;
}

// prefix[i] = sum of the first i means, accumulated left to right.
std::vector<double> prefix_sums(const Eigen::Ref<const Eigen::VectorXd>& means) {
  std::vector<double> p(static_cast<std::size_t>(means.size()) + 1, 0.0);
  for (Eigen::Index i = 0; i < means.size(); ++i)
    p[static_cast<std::size_t>(i) + 1] = p[static_cast<std::size_t>(i)] + means(i);
  return p;
}

double segment_term(const std::vector<double>& prefix, int a, int b,
                    double grand) {
  const double len = static_cast<double>(b - a);
  const double mean = (prefix[static_cast<std::size_t>(b)] -
                       prefix[static_cast<std::size_t>(a)]) /
                      len;
  const double dev = mean - grand;
  return len * dev * dev;
}

double bss(const std::vector<double>& prefix, const std::vector<int>& bounds,
           double grand) {
  double t = 0.0;
  for (std::size_t i = 1; i < bounds.size(); ++i)
    t += segment_term(prefix, bounds[i - 1], bounds[i], grand);
  return t;
}

int max_feasible_stages(Eigen::Index m, int min_len, int stages) {
  const int cap = static_cast<int>(m / min_len) - 1;
  return std::max(0, std::min(stages, cap));
}

// Stage statistics padded by carrying the deepest completed value forward,
// so observed and permuted series share a common stage axis.
Eigen::VectorXd padded_stats(const SegmentationResult& seg, int stages) {
  Eigen::VectorXd t(stages + 1);
  for (int k = 0; k <= stages; ++k)
    t(k) = seg.stats[static_cast<std::size_t>(std::min(k, seg.completed))];
  return t;
}

}  // namespace

SubgroupMatrix subgroup_values(
    const Eigen::Ref<const Eigen::VectorXd>& values, int n) {
  if (n < 1) throw std::invalid_argument("subgroup: size must be positive");
  SubgroupMatrix sg;
  const Eigen::Index m = values.size() / n;
  sg.dropped = values.size() - m * n;
  sg.values.resize(m, n);
  sg.means.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    double s = 0.0;
    for (int j = 0; j < n; ++j) {
      const double x = values(i * n + j);
      sg.values(i, j) = x;
      s += x;
    }
    sg.means(i) = s / n;
  }
  sg.grand_mean = m > 0 ? seq_sum(sg.means) / static_cast<double>(m) : 0.0;
  return sg;
}

SubgroupMatrix subgroup(const ResidualSeries& r, int n) {
  SubgroupMatrix sg = subgroup_values(r.values, n);
  const Eigen::Index m = sg.count();
  sg.t_index_ranges.reserve(static_cast<std::size_t>(m));
  sg.time_ranges.reserve(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) {
    const std::size_t a = static_cast<std::size_t>(i * n);
    const std::size_t b = a + static_cast<std::size_t>(n) - 1;
    sg.t_index_ranges.emplace_back(r.t_index[a], r.t_index[b]);
    sg.time_ranges.emplace_back(r.timestamps[a], r.timestamps[b]);
  }
  return sg;
}

double stat_isolated(const Eigen::Ref<const Eigen::VectorXd>& means,
                     double grand_mean) {
  double best = 0.0;
  for (Eigen::Index i = 0; i < means.size(); ++i)
    best = std::max(best, std::abs(means(i) - grand_mean));
  return best;
}

SegmentationResult segment_stats(
    const Eigen::Ref<const Eigen::VectorXd>& means, int stages, int min_len) {
  if (min_len < 1) throw std::invalid_argument("segment_stats: bad min_len");
  if (stages < 0) throw std::invalid_argument("segment_stats: bad stages");
  const int m = static_cast<int>(means.size());
  if (m < 1) throw std::invalid_argument("segment_stats: empty means");

  const std::vector<double> prefix = prefix_sums(means);
  const double grand = prefix.back() / static_cast<double>(m);

  SegmentationResult res;
  res.requested = stages;
  res.stats.push_back(stat_isolated(means, grand));

  std::vector<int> bounds = {0, m};
  for (int k = 1; k <= stages; ++k) {
    double best_val = -1.0;
    std::size_t best_seg = 0;
    int best_tau = -1;
    for (std::size_t s = 1; s < bounds.size(); ++s) {
      const int a = bounds[s - 1];
      const int b = bounds[s];
      if (b - a < 2 * min_len) continue;
      const double rest = segment_term(prefix, a, b, grand);
      for (int tau = a + min_len; tau + min_len <= b; ++tau) {
        const double val = segment_term(prefix, a, tau, grand) +
                           segment_term(prefix, tau, b, grand) - rest;
        if (val > best_val) {
          best_val = val;
          best_seg = s;
          best_tau = tau;
        }
      }
    }
    if (best_tau < 0) break;
    bounds.insert(bounds.begin() + static_cast<std::ptrdiff_t>(best_seg),
                  best_tau);
    res.change_points.push_back(best_tau);
    res.stats.push_back(bss(prefix, bounds, grand));
    std::vector<double> seg_means;
    seg_means.reserve(bounds.size() - 1);
    for (std::size_t s = 1; s < bounds.size(); ++s) {
      const int a = bounds[s - 1], b = bounds[s];
      seg_means.push_back((prefix[static_cast<std::size_t>(b)] -
                           prefix[static_cast<std::size_t>(a)]) /
                          static_cast<double>(b - a));
    }
    res.stage_means.push_back(std::move(seg_means));
    res.completed = k;
  }
  return res;
}

ReferenceStats permutation_reference(const SubgroupMatrix& sg, int stages,
                                     int min_len, int count,
                                     std::uint64_t seed, std::uint64_t round,
                                     int threads) {
  if (count < 2)
    throw std::invalid_argument("permutation_reference: count must be >= 2");
  const Eigen::Index m = sg.count();
  const int n = static_cast<int>(sg.values.cols());
  if (m < 1) throw std::invalid_argument("permutation_reference: no subgroups");

  std::vector<double> pooled(static_cast<std::size_t>(m) *
                             static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      pooled[static_cast<std::size_t>(i) * static_cast<std::size_t>(n) +
             static_cast<std::size_t>(j)] = sg.values(i, j);

  Eigen::MatrixXd t_tilde(stages + 1, count);
  const int workers = std::max(1, threads);
  std::exception_ptr failure;
  std::mutex failure_lock;

  const auto run_range = [&](int lo, int hi) {
    try {
      std::vector<double> work;
      for (int l = lo; l < hi; ++l) {
        work = pooled;
        RandomEngine eng =
            make_engine(seed, round, static_cast<std::uint64_t>(l) + 1);
        shuffle_values(eng, work.data(), work.size());
        const Eigen::VectorXd means = block_means(work, n, m);
        t_tilde.col(l) = padded_stats(segment_stats(means, stages, min_len),
                                      stages);
      }
    } catch (...) {
      const std::lock_guard<std::mutex> g(failure_lock);
      if (!failure) failure = std::current_exception();
    }
  };

  if (workers == 1) {
    run_range(0, count);
  } else {
    std::vector<std::thread> pool;
    const int chunk = (count + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
      const int lo = w * chunk;
      const int hi = std::min(count, lo + chunk);
      if (lo >= hi) break;
      pool.emplace_back(run_range, lo, hi);
    }
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  ReferenceStats ref;
  ref.u.resize(stages + 1);
  ref.v.resize(stages + 1);
  for (int k = 0; k <= stages; ++k) {
    double s = 0.0;
    for (int l = 0; l < count; ++l) s += t_tilde(k, l);
    const double u = s / count;
    double ss = 0.0;
    for (int l = 0; l < count; ++l) {
      const double d = t_tilde(k, l) - u;
      ss += d * d;
    }
    ref.u(k) = u;
    ref.v(k) = std::sqrt(ss / (count - 1));
    if (!(ref.v(k) > 0.0))
      throw std::runtime_error("rsp: degenerate reference distribution");
  }

  ref.w_tilde.resize(count);
  for (int l = 0; l < count; ++l) {
    double w = (t_tilde(0, l) - ref.u(0)) / ref.v(0);
    for (int k = 1; k <= stages; ++k)
      w = std::max(w, (t_tilde(k, l) - ref.u(k)) / ref.v(k));
    ref.w_tilde(l) = w;
  }
  return ref;
}

double aggregate_stat(const Eigen::Ref<const Eigen::VectorXd>& t_stats,
                      const Eigen::Ref<const Eigen::VectorXd>& u,
                      const Eigen::Ref<const Eigen::VectorXd>& v) {
  if (t_stats.size() != u.size() || u.size() != v.size() || u.size() == 0)
    throw std::invalid_argument("aggregate_stat: size mismatch");
  double w = (t_stats(0) - u(0)) / v(0);
  for (Eigen::Index k = 1; k < t_stats.size(); ++k)
    w = std::max(w, (t_stats(k) - u(k)) / v(k));
  return w;
}

double p_value(double w, const Eigen::Ref<const Eigen::VectorXd>& w_tilde) {
  if (w_tilde.size() == 0) throw std::invalid_argument("p_value: empty reference");
  Eigen::Index hits = 0;
  for (Eigen::Index l = 0; l < w_tilde.size(); ++l)
    if (w_tilde(l) >= w) ++hits;
  return static_cast<double>(hits) / static_cast<double>(w_tilde.size());
}

AnalyzeOutcome analyze(const ResidualSeries& residuals,
                       const AnalyzeConfig& config) {
  if (config.subgroup_size < 1 || config.stages < 0 ||
      config.min_segment < 1 || config.permutations < 2 ||
      !(config.alpha > 0.0 && config.alpha <= 1.0))
    throw std::invalid_argument("analyze: bad config");
  if (residuals.values.size() <
      static_cast<Eigen::Index>(config.subgroup_size) * 2 *
          config.min_segment)
    throw std::invalid_argument("analyze: residual series too short");

  AnalyzeOutcome out;
  ResidualSeries cur = residuals;

  for (int round = 1;; ++round) {
    SubgroupMatrix sg = subgroup(cur, config.subgroup_size);
    if (sg.count() < 2) {
      out.termination = "insufficient_data";
      break;
    }
    if (round == 1) out.initial = sg;

    const int stages =
        max_feasible_stages(sg.count(), config.min_segment, config.stages);
    const SegmentationResult seg =
        segment_stats(sg.means, stages, config.min_segment);
    const Eigen::VectorXd t = padded_stats(seg, stages);
    const ReferenceStats ref = permutation_reference(
        sg, stages, config.min_segment, config.permutations, config.seed,
        static_cast<std::uint64_t>(round), config.threads);

    ChartRound cr;
    cr.subgroups = static_cast<int>(sg.count());
    cr.t_stats = t;
    cr.u = ref.u;
    cr.v = ref.v;
    cr.w = aggregate_stat(t, ref.u, ref.v);
    cr.p = p_value(cr.w, ref.w_tilde);
    int k_star = 0;
    double best = (t(0) - ref.u(0)) / ref.v(0);
    for (int k = 1; k <= stages; ++k) {
      const double z = (t(k) - ref.u(k)) / ref.v(k);
      if (z > best) {
        best = z;
        k_star = k;
      }
    }
    cr.k_star = k_star;
    cr.seg = seg;
    out.rounds.push_back(cr);

    if (cr.p > config.alpha) {
      out.termination = "in_control";
      break;
    }
    if (config.alpha >= 1.0) {
      // p > 1 can never happen; report the evaluation and stop rather than
      // strip the series bare.
      out.termination = "alpha_unreachable";
      break;
    }

    // Locate the dominant segment at the alarming stage. Stages past the
    // deepest completed split carry no extra boundaries, so clamp.
    const int stage = std::min(k_star, seg.completed);
    int seg_lo = 0;
    int seg_hi = static_cast<int>(sg.count());
    double seg_mean = sg.grand_mean;
    if (stage == 0) {
      int pick = 0;
      double dev = -1.0;
      for (Eigen::Index i = 0; i < sg.means.size(); ++i) {
        const double d = std::abs(sg.means(i) - sg.grand_mean);
        if (d > dev) {
          dev = d;
          pick = static_cast<int>(i);
        }
      }
      seg_lo = pick;
      seg_hi = pick + 1;
      seg_mean = sg.means(pick);
    } else {
      std::vector<int> bounds(seg.change_points.begin(),
                              seg.change_points.begin() + stage);
      std::sort(bounds.begin(), bounds.end());
      bounds.insert(bounds.begin(), 0);
      bounds.push_back(static_cast<int>(sg.count()));
      const auto& means =
          seg.stage_means[static_cast<std::size_t>(stage - 1)];
      double dev = -1.0;
      for (std::size_t i = 1; i < bounds.size(); ++i) {
        const double mean = means[i - 1];
        const double d = std::abs(mean - sg.grand_mean);
        if (d > dev) {
          dev = d;
          seg_lo = bounds[i - 1];
          seg_hi = bounds[i];
          seg_mean = mean;
        }
      }
    }

    OcSegment oc;
    oc.round = round;
    oc.stage = stage;
    oc.start_subgroup = seg_lo;
    oc.end_subgroup = seg_hi;
    oc.start_t_index = sg.t_index_ranges[static_cast<std::size_t>(seg_lo)].first;
    oc.end_t_index = sg.t_index_ranges[static_cast<std::size_t>(seg_hi - 1)].second;
    oc.start_time = sg.time_ranges[static_cast<std::size_t>(seg_lo)].first;
    oc.end_time = sg.time_ranges[static_cast<std::size_t>(seg_hi - 1)].second;
    oc.segment_mean = seg_mean;
    oc.grand_mean = sg.grand_mean;
    oc.w_stat = cr.w;
    oc.p = cr.p;
    out.removed.push_back(oc);

    // Erase the segment's residual block and regroup from scratch.
    const Eigen::Index lo = static_cast<Eigen::Index>(seg_lo) *
                            config.subgroup_size;
    const Eigen::Index hi = static_cast<Eigen::Index>(seg_hi) *
                            config.subgroup_size;
    const Eigen::Index rest = cur.values.size() - hi;
    Eigen::VectorXd next(cur.values.size() - (hi - lo));
    next.head(lo) = cur.values.head(lo);
    next.tail(rest) = cur.values.tail(rest);
    cur.values = std::move(next);
    cur.t_index.erase(cur.t_index.begin() + lo, cur.t_index.begin() + hi);
    cur.timestamps.erase(cur.timestamps.begin() + lo,
                         cur.timestamps.begin() + hi);
  }

  out.retained = std::move(cur);
  return out;
}

void write_segments_csv(std::ostream& out, const AnalyzeOutcome& outcome) {
  out << "round,stage,start_subgroup,end_subgroup,start_t_index,end_t_index,"
         "start_timestamp,end_timestamp,segment_mean,grand_mean,w_stat,"
         "p_value\n";
  char buf[40];
  for (const OcSegment& s : outcome.removed) {
    out << s.round << ',' << s.stage << ',' << s.start_subgroup << ','
        << s.end_subgroup << ',' << s.start_t_index << ',' << s.end_t_index
        << ',' << format_timestamp_utc(s.start_time) << ','
        << format_timestamp_utc(s.end_time) << ',';
    std::snprintf(buf, sizeof(buf), "%.17g", s.segment_mean);
    out << buf << ',';
    std::snprintf(buf, sizeof(buf), "%.17g", s.grand_mean);
    out << buf << ',';
    std::snprintf(buf, sizeof(buf), "%.17g", s.w_stat);
    out << buf << ',';
    std::snprintf(buf, sizeof(buf), "%.17g", s.p);
    out << buf << '\n';
  }
}

void write_plot_data_csv(std::ostream& out, const AnalyzeOutcome& outcome) {
  out << "subgroup,start_t_index,end_t_index,start_timestamp,end_timestamp,"
         "mean,grand_mean,change_point,removed_round\n";
  const SubgroupMatrix& sg = outcome.initial;

  // Round-1 boundaries at the alarming stage; subgroup i is flagged when a
  // change point sits immediately before it.
  std::vector<int> marks;
  if (!outcome.rounds.empty()) {
    const ChartRound& r1 = outcome.rounds.front();
    const int stage = std::min(r1.k_star, r1.seg.completed);
    marks.assign(r1.seg.change_points.begin(),
                 r1.seg.change_points.begin() + stage);
    std::sort(marks.begin(), marks.end());
  }

  char buf[40];
  for (Eigen::Index i = 0; i < sg.count(); ++i) {
    const auto& ti = sg.t_index_ranges[static_cast<std::size_t>(i)];
    const auto& tr = sg.time_ranges[static_cast<std::size_t>(i)];
    int removed_round = 0;
    for (const OcSegment& s : outcome.removed) {
      if (s.start_t_index <= ti.second && s.end_t_index >= ti.first) {
        removed_round = s.round;
        break;
      }
    }
    const bool flagged = std::binary_search(marks.begin(), marks.end(),
                                            static_cast<int>(i));
    out << i << ',' << ti.first << ',' << ti.second << ','
        << format_timestamp_utc(tr.first) << ','
        << format_timestamp_utc(tr.second) << ',';
    std::snprintf(buf, sizeof(buf), "%.17g", sg.means(i));
    out << buf << ',';
    std::snprintf(buf, sizeof(buf), "%.17g", sg.grand_mean);
    out << buf << ',' << (flagged ? 1 : 0) << ',' << removed_round << '\n';
  }
}

}  // namespace windchart
