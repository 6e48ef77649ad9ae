#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace windchart {

/// One 10-minute SCADA row.  Timestamps are unix seconds (UTC).
struct ScadaRecord {
  std::int64_t timestamp = 0;
  double power_kw = 0.0;
  double wind_speed = 0.0;
  double wind_dir = 0.0;
  double out_temp = 0.0;
  double turb_intensity = 0.0;
  double wind_dir_sd = 0.0;
  double out_temp_sd = 0.0;
  double pitch_deg = 0.0;
};

/// Source column name for each ScadaRecord field.  Defaults match the
/// La Haute Borne open dataset.
struct ColumnMap {
  std::string timestamp = "Date_time";
  std::string power_kw = "P_avg";
  std::string wind_speed = "Ws_avg";
  std::string wind_dir = "Wa_avg";
  std::string out_temp = "Ot_avg";
  std::string turb_intensity = "Va_avg";
  std::string wind_dir_sd = "Wa_std";
  std::string out_temp_sd = "Ot_std";
  std::string pitch_deg = "Ba_avg";
};

struct ParseOptions {
  ColumnMap columns;
  /// Keep only rows whose cell in .first equals .second (e.g. a turbine id
  /// column in a farm-wide export).
  std::optional<std::pair<std::string, std::string>> row_filter;
};

struct ParseDiagnostics {
  long total_rows = 0;       // data rows seen (after any row_filter)
  long missing_field = 0;    // rows dropped: empty or unparseable required cell
  long duplicate_timestamp = 0;
  std::vector<std::string> messages;  // first few row-level notes
};

/// Parse a SCADA CSV with a header row.  Rows are returned sorted by
/// timestamp; rows with missing or unparseable required fields are dropped
/// and counted, and for duplicate timestamps only the first row is kept.
/// Throws std::runtime_error if the source is unreadable or a mapped column
/// is absent from the header.
std::vector<ScadaRecord> parse_scada(std::istream& in, const ParseOptions& opts,
                                     ParseDiagnostics* diag = nullptr);
std::vector<ScadaRecord> parse_scada_file(const std::string& path,
                                          const ParseOptions& opts,
                                          ParseDiagnostics* diag = nullptr);

struct FilterReport {
  long input = 0;
  long idle = 0;              // power <= 0
  long adjacent_to_idle = 0;  // one 10-min step next to an idle record
  long pitch_exceeded = 0;    // pitch angle > 20 deg
  long missing_field = 0;     // filled from ParseDiagnostics by the pipeline
  long retained = 0;
};

/// Rough filtering: drop idle records (power <= 0), records exactly one
/// 10-minute grid step before or after an idle record, and records with
/// pitch angle above 20 degrees.  Input must be sorted by timestamp.
std::pair<std::vector<ScadaRecord>, FilterReport> rough_filter(
    const std::vector<ScadaRecord>& records);

inline constexpr int kFeatureArity = 7;
/// Feature order: wind_speed, wind_dir, out_temp, turb_intensity,
/// wind_dir_sd, out_temp_sd, month.
const std::vector<std::string>& feature_names();

/// Regression design built from filtered records; row i holds record i.
struct Design {
  Eigen::VectorXd y;   // power_kw
  Eigen::MatrixXd x;   // rows x kFeatureArity
  std::vector<long> t_index;
  std::vector<std::int64_t> timestamps;

  Eigen::Index rows() const { return y.size(); }
};

Design featurize(const std::vector<ScadaRecord>& records);

/// "YYYY-MM-DD HH:MM[:SS]" or ISO "YYYY-MM-DDTHH:MM:SS[+HH:MM|Z]" to unix
/// seconds; offsets are folded into UTC.
std::optional<std::int64_t> parse_timestamp(const std::string& text);
std::string format_timestamp_utc(std::int64_t t);
int month_of(std::int64_t t);  // 1..12, UTC calendar

void write_design_csv(std::ostream& out, const Design& d);
Design read_design_csv(std::istream& in);

std::string filter_report_text(const FilterReport& r);

}  // namespace windchart
