#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "windchart/scada.hpp"

namespace windchart {

enum class NoiseKind { normal, student_t5, centered_exponential };

NoiseKind noise_from_name(const std::string& name);
std::string noise_name(NoiseKind kind);

// Innovation draws with zero mean; scale is the innovation sd for the
// normal kind and the natural scale of the other two.
Eigen::VectorXd gen_noise(NoiseKind kind, Eigen::Index count,
                          std::uint64_t seed, std::uint64_t stream = 0);

// Stationary AR series driven by the chosen innovations; the first
// 10*order draws are burned in. Throws when a root is on or inside the
// unit circle.
Eigen::VectorXd gen_ar(const Eigen::Ref<const Eigen::VectorXd>& coeffs,
                       NoiseKind kind, Eigen::Index count, std::uint64_t seed,
                       std::uint64_t stream = 0);

enum class ShiftKind { none, isolated, step, multi_step, linear_trend };

ShiftKind shift_from_name(const std::string& name);
std::string shift_name(ShiftKind kind);

struct ShiftSpec {
  ShiftKind kind = ShiftKind::none;
  std::vector<Eigen::Index> locations;
  std::vector<double> magnitudes;
};

// Additive mean profile of length `count`: isolated spikes, a sustained
// step, a staircase, or a linear ramp.
Eigen::VectorXd shift_profile(const ShiftSpec& shift, Eigen::Index count);

Eigen::VectorXd inject_shift(const Eigen::Ref<const Eigen::VectorXd>& series,
                             const ShiftSpec& shift);

// Reference implementations used to cross-check the chart engine. They are
// deliberately naive: direct scans, no incremental state.
struct SplitOracle {
  int tau = 0;      // left segment covers subgroups [0, tau)
  double t1 = 0.0;  // between-segment sum of squares at the split
};

SplitOracle oracle_single_split(const Eigen::Ref<const Eigen::VectorXd>& means,
                                int min_len);

// Full permutation distribution over every distinct arrangement of the
// pooled values. Only viable for tiny inputs; guarded at 10 values.
struct ExactPermutation {
  Eigen::VectorXd u, v;   // per-stage reference moments
  double w = 0.0;         // studentized maximum of the observed arrangement
  double p = 0.0;         // exact p-value
  std::int64_t arrangements = 0;
};

ExactPermutation oracle_exact_permutation(
    const Eigen::Ref<const Eigen::VectorXd>& values, int subgroup_size,
    int stages, int min_len);

// Synthetic SCADA generation: a smooth power curve over a mean-reverting
// wind profile plus AR noise and an optional injected shift.
struct SynthConfig {
  Eigen::Index rows = 3000;
  Eigen::VectorXd ar_coeffs;
  NoiseKind noise = NoiseKind::normal;
  double noise_scale = 30.0;  // kW
  ShiftSpec shift;            // kW, applied to the power signal
  std::uint64_t seed = 1;
  std::int64_t start_time = 1356998400;  // 2013-01-01T00:00:00Z
  std::int64_t step_seconds = 600;
};

struct SynthData {
  std::vector<ScadaRecord> records;
  Eigen::VectorXd clean_power;
  Eigen::VectorXd noise;
  Eigen::VectorXd shift;
};

SynthData gen_scada(const SynthConfig& config);

void write_scada_csv(std::ostream& out, const std::vector<ScadaRecord>& records,
                     const ColumnMap& columns = ColumnMap{});
void write_truth(std::ostream& out, const SynthConfig& config);

}  // namespace windchart
