#include "windchart/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>
#include <stdexcept>

#include "windchart/rng.hpp"

namespace windchart {

namespace {

double draw_normal(RandomEngine& eng, bool& have_spare, double& spare) {
  if (have_spare) {
    have_spare = false;
    return spare;
  }
  double u1;
  do {
    u1 = uniform_unit(eng);
  } while (u1 <= 0.0);
  const double u2 = uniform_unit(eng);
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare = radius * std::sin(angle);
  have_spare = true;
  return radius * std::cos(angle);
}

struct NoiseStream {
  RandomEngine eng;
  NoiseKind kind;
  bool have_spare = false;
  double spare = 0.0;

  double normal() { return draw_normal(eng, have_spare, spare); }

  double next() {
    switch (kind) {
      case NoiseKind::normal:
        return normal();
      case NoiseKind::student_t5: {
        const double z = normal();
        double chi = 0.0;
        for (int i = 0; i < 5; ++i) {
          const double g = normal();
          chi += g * g;
        }
        return z / std::sqrt(chi / 5.0);
      }
      case NoiseKind::centered_exponential:
        return -std::log(1.0 - uniform_unit(eng)) - 1.0;
    }
    throw std::logic_error("noise: unknown kind");
  }
};

// All roots of 1 - a_1 z - ... - a_p z^p must lie outside the unit circle;
// checked on the companion matrix of the lag polynomial.
bool is_stationary(const Eigen::Ref<const Eigen::VectorXd>& coeffs) {
  const Eigen::Index p = coeffs.size();
  if (p == 0) return true;
  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(p, p);
  companion.row(0) = coeffs.transpose();
  if (p > 1)
    companion.block(1, 0, p - 1, p - 1).setIdentity();
  return companion.eigenvalues().cwiseAbs().maxCoeff() < 1.0;
}

void validate_shift(const ShiftSpec& shift, Eigen::Index count) {
  const auto need = [&](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("shift: ") + what);
  };
  for (Eigen::Index loc : shift.locations)
    need(loc >= 0 && loc < count, "location out of range");
  switch (shift.kind) {
    case ShiftKind::none:
      need(shift.locations.empty() && shift.magnitudes.empty(),
           "none takes no locations");
      break;
    case ShiftKind::isolated:
      need(!shift.locations.empty() &&
               shift.locations.size() == shift.magnitudes.size(),
           "isolated needs matching locations and magnitudes");
      break;
    case ShiftKind::step:
      need(shift.locations.size() == 1 && shift.magnitudes.size() == 1,
           "step takes one location and one magnitude");
      break;
    case ShiftKind::multi_step: {
      need(!shift.locations.empty() &&
               shift.locations.size() == shift.magnitudes.size(),
           "multi_step needs matching locations and magnitudes");
      for (std::size_t i = 1; i < shift.locations.size(); ++i)
        need(shift.locations[i - 1] < shift.locations[i],
             "multi_step locations must increase");
      break;
    }
    case ShiftKind::linear_trend:
      need(shift.locations.size() == 1 && shift.magnitudes.size() == 1,
           "linear_trend takes one location and one magnitude");
      break;
  }
}

}  // namespace

NoiseKind noise_from_name(const std::string& name) {
  if (name == "normal") return NoiseKind::normal;
  if (name == "t5") return NoiseKind::student_t5;
  if (name == "exponential") return NoiseKind::centered_exponential;
  throw std::invalid_argument("noise: unknown kind '" + name + "'");
}

std::string noise_name(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::normal: return "normal";
    case NoiseKind::student_t5: return "t5";
    case NoiseKind::centered_exponential: return "exponential";
  }
  return "?";
}

ShiftKind shift_from_name(const std::string& name) {
  if (name == "none") return ShiftKind::none;
  if (name == "isolated") return ShiftKind::isolated;
  if (name == "step") return ShiftKind::step;
  if (name == "multi_step") return ShiftKind::multi_step;
  if (name == "linear_trend") return ShiftKind::linear_trend;
  throw std::invalid_argument("shift: unknown kind '" + name + "'");
}

std::string shift_name(ShiftKind kind) {
  switch (kind) {
    case ShiftKind::none: return "none";
    case ShiftKind::isolated: return "isolated";
    case ShiftKind::step: return "step";
    case ShiftKind::multi_step: return "multi_step";
    case ShiftKind::linear_trend: return "linear_trend";
  }
  return "?";
}

Eigen::VectorXd gen_noise(NoiseKind kind, Eigen::Index count,
                          std::uint64_t seed, std::uint64_t stream) {
  if (count < 0) throw std::invalid_argument("gen_noise: negative count");
  NoiseStream ns{make_engine(seed, stream, 0), kind};
  Eigen::VectorXd out(count);
  for (Eigen::Index t = 0; t < count; ++t) out(t) = ns.next();
  return out;
}

Eigen::VectorXd gen_ar(const Eigen::Ref<const Eigen::VectorXd>& coeffs,
                       NoiseKind kind, Eigen::Index count, std::uint64_t seed,
                       std::uint64_t stream) {
  if (count < 0) throw std::invalid_argument("gen_ar: negative count");
  if (!is_stationary(coeffs))
    throw std::invalid_argument("gen_ar: coefficients are not stationary");
  const Eigen::Index p = coeffs.size();
  const Eigen::Index burn = 10 * p;
  NoiseStream ns{make_engine(seed, stream, 0), kind};

  Eigen::VectorXd x = Eigen::VectorXd::Zero(burn + count);
  for (Eigen::Index t = 0; t < x.size(); ++t) {
    double v = ns.next();
    for (Eigen::Index j = 0; j < p && j < t; ++j)
      v += coeffs(j) * x(t - j - 1);
    x(t) = v;
  }
  return x.tail(count);
}

Eigen::VectorXd shift_profile(const ShiftSpec& shift, Eigen::Index count) {
  if (count < 0) throw std::invalid_argument("shift: negative length");
  validate_shift(shift, count);
  Eigen::VectorXd delta = Eigen::VectorXd::Zero(count);
  switch (shift.kind) {
    case ShiftKind::none:
      break;
    case ShiftKind::isolated:
      for (std::size_t j = 0; j < shift.locations.size(); ++j)
        delta(shift.locations[j]) += shift.magnitudes[j];
      break;
    case ShiftKind::step:
      delta.tail(count - shift.locations[0]).array() += shift.magnitudes[0];
      break;
    case ShiftKind::multi_step:
      for (std::size_t j = 0; j < shift.locations.size(); ++j) {
        const Eigen::Index lo = shift.locations[j];
        const Eigen::Index hi = j + 1 < shift.locations.size()
                                    ? shift.locations[j + 1]
                                    : count;
        delta.segment(lo, hi - lo).array() = shift.magnitudes[j];
      }
      break;
    case ShiftKind::linear_trend: {
      const Eigen::Index lo = shift.locations[0];
      const double mag = shift.magnitudes[0];
      const double span = static_cast<double>(count - 1 - lo);
      for (Eigen::Index t = lo; t < count; ++t)
        delta(t) = span > 0.0
                       ? mag * static_cast<double>(t - lo) / span
                       : mag;
      break;
    }
  }
  return delta;
}

Eigen::VectorXd inject_shift(const Eigen::Ref<const Eigen::VectorXd>& series,
                             const ShiftSpec& shift) {
  return series + shift_profile(shift, series.size());
}

SplitOracle oracle_single_split(const Eigen::Ref<const Eigen::VectorXd>& means,
                                int min_len) {
  const int m = static_cast<int>(means.size());
  if (min_len < 1 || m < 2 * min_len)
    throw std::invalid_argument("oracle_single_split: no admissible split");

  double total = 0.0;
  for (int i = 0; i < m; ++i) total += means(i);
  const double grand = total / static_cast<double>(m);

  SplitOracle best;
  double best_val = -1.0;
  double left = 0.0;
  for (int tau = 1; tau + min_len <= m; ++tau) {
    left += means(tau - 1);
    if (tau < min_len) continue;
    const double right = total - left;
    const double dl = left / static_cast<double>(tau) - grand;
    const double dr = right / static_cast<double>(m - tau) - grand;
    const double val = static_cast<double>(tau) * dl * dl +
                       static_cast<double>(m - tau) * dr * dr;
    if (val > best_val) {
      best_val = val;
      best.tau = tau;
      best.t1 = val;
    }
  }
  return best;
}

namespace {

// Naive greedy segmentation used only by the exact-permutation oracle.
std::vector<double> naive_stage_stats(const std::vector<double>& means,
                                      int stages, int min_len) {
  const int m = static_cast<int>(means.size());
  double total = 0.0;
  for (double v : means) total += v;
  const double grand = total / m;

  const auto seg_sum = [&](int a, int b) {
    double s = 0.0;
    for (int i = a; i < b; ++i) s += means[static_cast<std::size_t>(i)];
    return s;
  };
  const auto seg_term = [&](int a, int b) {
    const double dev = seg_sum(a, b) / (b - a) - grand;
    return static_cast<double>(b - a) * dev * dev;
  };

  std::vector<double> stats;
  double t0 = 0.0;
  for (double v : means) t0 = std::max(t0, std::abs(v - grand));
  stats.push_back(t0);

  std::vector<int> bounds = {0, m};
  for (int k = 1; k <= stages; ++k) {
    double best_val = -1.0;
    std::size_t best_seg = 0;
    int best_tau = -1;
    for (std::size_t s = 1; s < bounds.size(); ++s) {
      const int a = bounds[s - 1], b = bounds[s];
      if (b - a < 2 * min_len) continue;
      for (int tau = a + min_len; tau + min_len <= b; ++tau) {
        const double val =
            seg_term(a, tau) + seg_term(tau, b) - seg_term(a, b);
        if (val > best_val) {
          best_val = val;
          best_seg = s;
          best_tau = tau;
        }
      }
    }
    if (best_tau < 0) {
      stats.push_back(stats.back());  // carry forward, same as the engine
      continue;
    }
    bounds.insert(bounds.begin() + static_cast<std::ptrdiff_t>(best_seg),
                  best_tau);
    double t = 0.0;
    for (std::size_t s = 1; s < bounds.size(); ++s)
      t += seg_term(bounds[s - 1], bounds[s]);
    stats.push_back(t);
  }
  return stats;
}

}  // namespace

ExactPermutation oracle_exact_permutation(
    const Eigen::Ref<const Eigen::VectorXd>& values, int subgroup_size,
    int stages, int min_len) {
  const Eigen::Index total = values.size();
  if (total > 10)
    throw std::invalid_argument("oracle_exact_permutation: too many values");
  if (subgroup_size < 1 || total % subgroup_size != 0)
    throw std::invalid_argument("oracle_exact_permutation: bad subgroup size");
  const int m = static_cast<int>(total) / subgroup_size;

  const auto stats_of = [&](const std::vector<double>& vals) {
    std::vector<double> means(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
      double s = 0.0;
      for (int j = 0; j < subgroup_size; ++j)
        s += vals[static_cast<std::size_t>(i * subgroup_size + j)];
      means[static_cast<std::size_t>(i)] = s / subgroup_size;
    }
    return naive_stage_stats(means, stages, min_len);
  };

  std::vector<double> observed(values.data(), values.data() + total);
  const std::vector<double> t_obs = stats_of(observed);

  std::vector<double> sorted = observed;
  std::sort(sorted.begin(), sorted.end());

  std::vector<std::vector<double>> all;
  do {
    all.push_back(stats_of(sorted));
  } while (std::next_permutation(sorted.begin(), sorted.end()));

  const std::size_t count = all.size();
  const std::size_t k_count = static_cast<std::size_t>(stages) + 1;
  ExactPermutation res;
  res.arrangements = static_cast<std::int64_t>(count);
  res.u.resize(static_cast<Eigen::Index>(k_count));
  res.v.resize(static_cast<Eigen::Index>(k_count));
  for (std::size_t k = 0; k < k_count; ++k) {
    double s = 0.0;
    for (const auto& t : all) s += t[k];
    const double u = s / static_cast<double>(count);
    double ss = 0.0;
    for (const auto& t : all) {
      const double d = t[k] - u;
      ss += d * d;
    }
    res.u(static_cast<Eigen::Index>(k)) = u;
    res.v(static_cast<Eigen::Index>(k)) =
        std::sqrt(ss / static_cast<double>(count - 1));
    if (!(res.v(static_cast<Eigen::Index>(k)) > 0.0))
      throw std::runtime_error(
          "oracle_exact_permutation: degenerate reference");
  }

  const auto w_of = [&](const std::vector<double>& t) {
    double w = (t[0] - res.u(0)) / res.v(0);
    for (std::size_t k = 1; k < k_count; ++k)
      w = std::max(w, (t[k] - res.u(static_cast<Eigen::Index>(k))) /
                          res.v(static_cast<Eigen::Index>(k)));
    return w;
  };

  res.w = w_of(t_obs);
  std::size_t hits = 0;
  for (const auto& t : all)
    if (w_of(t) >= res.w) ++hits;
  res.p = static_cast<double>(hits) / static_cast<double>(count);
  return res;
}

SynthData gen_scada(const SynthConfig& config) {
  if (config.rows < 1) throw std::invalid_argument("synth: rows must be positive");
  const Eigen::Index T = config.rows;

  SynthData data;
  data.noise = config.noise_scale *
               gen_ar(config.ar_coeffs, config.noise, T, config.seed, 0);
  data.shift = shift_profile(config.shift, T);

  // Environment streams are independent of the noise stream so changing the
  // shift or noise kind never perturbs the covariates.
  RandomEngine env = make_engine(config.seed, 1, 0);
  bool spare_ok = false;
  double spare = 0.0;
  const auto normal = [&] { return draw_normal(env, spare_ok, spare); };

  data.clean_power.resize(T);
  data.records.resize(static_cast<std::size_t>(T));

  double ws = 8.0;
  double dir = 200.0;
  for (Eigen::Index t = 0; t < T; ++t) {
    ws += 0.12 * (8.0 - ws) + 0.55 * normal();
    if (ws < 2.0) ws = 4.0 - ws;   // reflect away from the cut-in region
    if (ws > 19.0) ws = 38.0 - ws;
    dir += 4.0 * normal();
    dir = std::fmod(std::fmod(dir, 360.0) + 360.0, 360.0);
    const double day = static_cast<double>(t) *
                       static_cast<double>(config.step_seconds) / 86400.0;
    const double temp = 6.0 + 7.0 * std::sin(2.0 * std::numbers::pi * day / 30.0) +
                        0.8 * normal();

    const double curve = 150.0 + 1900.0 / (1.0 + std::exp(-0.9 * (ws - 8.5)));
    data.clean_power(t) = curve;

    ScadaRecord& r = data.records[static_cast<std::size_t>(t)];
    r.timestamp = config.start_time + t * config.step_seconds;
    r.power_kw = curve + data.noise(t) + data.shift(t);
    r.wind_speed = ws;
    r.wind_dir = dir;
    r.out_temp = temp;
    r.turb_intensity = std::min(0.6, 0.08 + 0.35 * std::abs(normal()) / ws);
    r.wind_dir_sd = 1.0 + 2.5 * std::abs(normal());
    r.out_temp_sd = 0.05 + 0.25 * std::abs(normal());
    r.pitch_deg = std::abs(normal());  // well under the filter threshold
  }
  return data;
}

void write_scada_csv(std::ostream& out, const std::vector<ScadaRecord>& records,
                     const ColumnMap& columns) {
  out << columns.timestamp << ',' << columns.power_kw << ','
      << columns.wind_speed << ',' << columns.wind_dir << ','
      << columns.out_temp << ',' << columns.turb_intensity << ','
      << columns.wind_dir_sd << ',' << columns.out_temp_sd << ','
      << columns.pitch_deg << '\n';
  char buf[40];
  const auto cell = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << ',' << buf;
  };
  for (const ScadaRecord& r : records) {
    out << format_timestamp_utc(r.timestamp);
    cell(r.power_kw);
    cell(r.wind_speed);
    cell(r.wind_dir);
    cell(r.out_temp);
    cell(r.turb_intensity);
    cell(r.wind_dir_sd);
    cell(r.out_temp_sd);
    cell(r.pitch_deg);
    out << '\n';
  }
}

void write_truth(std::ostream& out, const SynthConfig& config) {
  char buf[40];
  out << "rows = " << config.rows << '\n';
  out << "seed = " << config.seed << '\n';
  out << "noise = " << noise_name(config.noise) << '\n';
  std::snprintf(buf, sizeof(buf), "%.17g", config.noise_scale);
  out << "noise_scale = " << buf << '\n';
  out << "ar_coeffs =";
  for (Eigen::Index j = 0; j < config.ar_coeffs.size(); ++j) {
    std::snprintf(buf, sizeof(buf), "%.17g", config.ar_coeffs(j));
    out << ' ' << buf;
  }
  out << '\n';
  out << "shift = " << shift_name(config.shift.kind) << '\n';
  out << "shift_locations =";
  for (Eigen::Index loc : config.shift.locations) out << ' ' << loc;
  out << '\n';
  out << "shift_magnitudes =";
  for (double mag : config.shift.magnitudes) {
    std::snprintf(buf, sizeof(buf), "%.17g", mag);
    out << ' ' << buf;
  }
  out << '\n';
}

}  // namespace windchart
