#include "windchart/scada.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace windchart {

namespace {

constexpr std::int64_t kStepSeconds = 600;
constexpr double kPitchLimitDeg = 20.0;
constexpr std::size_t kMaxMessages = 20;

// Minimal CSV line splitter; handles double-quoted cells with "" escapes.
std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      cells.push_back(std::move(cur));
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  cells.push_back(std::move(cur));
  return cells;
}

bool parse_double_cell(const std::string& cell, double* out) {
  const char* b = cell.data();
  const char* e = b + cell.size();
  while (b < e && (*b == ' ' || *b == '\t')) ++b;
  while (e > b && (*(e - 1) == ' ' || *(e - 1) == '\t')) --e;
  if (b == e) return false;
  const auto res = std::from_chars(b, e, *out);
  return res.ec == std::errc() && res.ptr == e;
}

bool parse_int_field(const std::string& s, std::size_t pos, std::size_t len,
                     int* out) {
  if (pos + len > s.size()) return false;
  const auto res = std::from_chars(s.data() + pos, s.data() + pos + len, *out);
  return res.ec == std::errc() && res.ptr == s.data() + pos + len;
}

// Days since 1970-01-01 for a proleptic Gregorian civil date.
std::int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy =
      (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2u) / 5u +
      static_cast<unsigned>(d) - 1u;
  const unsigned doe = yoe * 365u + yoe / 4u - yoe / 100u + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, int* y, int* m, int* d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t yy = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  *d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
  *m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
  *y = static_cast<int>(yy + (*m <= 2));
}

}  // namespace

std::optional<std::int64_t> parse_timestamp(const std::string& text) {
  // YYYY-MM-DD[T ]HH:MM[:SS][Z|+HH:MM|-HH:MM]
  std::string s = text;
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.pop_back();
  std::size_t start = 0;
  while (start < s.size() && s[start] == ' ') ++start;
  s = s.substr(start);
  if (s.size() < 16) return std::nullopt;

  int y, mo, d, h, mi, sec = 0;
  if (!parse_int_field(s, 0, 4, &y) || s[4] != '-' ||
      !parse_int_field(s, 5, 2, &mo) || s[7] != '-' ||
      !parse_int_field(s, 8, 2, &d) || (s[10] != 'T' && s[10] != ' ') ||
      !parse_int_field(s, 11, 2, &h) || s[13] != ':' ||
      !parse_int_field(s, 14, 2, &mi))
    return std::nullopt;

  std::size_t pos = 16;
  if (pos < s.size() && s[pos] == ':') {
    if (!parse_int_field(s, pos + 1, 2, &sec)) return std::nullopt;
    pos += 3;
  }
  std::int64_t offset = 0;
  if (pos < s.size()) {
    const char c = s[pos];
    if (c == 'Z') {
      ++pos;
    } else if (c == '+' || c == '-') {
      int oh, om;
      if (!parse_int_field(s, pos + 1, 2, &oh) || s.size() < pos + 6 ||
          s[pos + 3] != ':' || !parse_int_field(s, pos + 4, 2, &om))
        return std::nullopt;
      offset = (c == '+' ? 1 : -1) * (oh * 3600LL + om * 60LL);
      pos += 6;
    }
  }
  if (pos != s.size()) return std::nullopt;
  if (mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || sec > 60)
    return std::nullopt;

  return days_from_civil(y, mo, d) * 86400 + h * 3600 + mi * 60 + sec - offset;
}

std::string format_timestamp_utc(std::int64_t t) {
  std::int64_t days = t / 86400;
  std::int64_t rem = t % 86400;
  if (rem < 0) {
    rem += 86400;
    --days;
  }
  int y, m, d;
  civil_from_days(days, &y, &m, &d);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ", y, m, d,
                static_cast<int>(rem / 3600), static_cast<int>(rem / 60 % 60),
                static_cast<int>(rem % 60));
  return buf;
}

int month_of(std::int64_t t) {
  std::int64_t days = t / 86400;
  if (t % 86400 < 0) --days;
  int y, m, d;
  civil_from_days(days, &y, &m, &d);
  return m;
}

std::vector<ScadaRecord> parse_scada(std::istream& in,
                                     const ParseOptions& opts,
                                     ParseDiagnostics* diag) {
  ParseDiagnostics local;
  ParseDiagnostics& dg = diag ? *diag : local;
  dg = ParseDiagnostics{};

  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("scada: empty source, expected a header row");
  const std::vector<std::string> header = split_csv_line(line);

  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < header.size(); ++i) index.emplace(header[i], i);

  const auto require = [&](const std::string& name) -> std::size_t {
    const auto it = index.find(name);
    if (it == index.end())
      throw std::runtime_error("scada: mapped column not in header: " + name);
    return it->second;
  };

  const ColumnMap& cm = opts.columns;
  const std::size_t c_ts = require(cm.timestamp);
  const std::array<std::size_t, 8> cols = {
      require(cm.power_kw),       require(cm.wind_speed),
      require(cm.wind_dir),       require(cm.out_temp),
      require(cm.turb_intensity), require(cm.wind_dir_sd),
      require(cm.out_temp_sd),    require(cm.pitch_deg)};
  std::size_t c_filter = 0;
  if (opts.row_filter) c_filter = require(opts.row_filter->first);

  const auto note = [&](const std::string& msg) {
    if (dg.messages.size() < kMaxMessages) dg.messages.push_back(msg);
  };

  std::vector<ScadaRecord> records;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> cells = split_csv_line(line);
    if (opts.row_filter &&
        (c_filter >= cells.size() || cells[c_filter] != opts.row_filter->second))
      continue;
    ++dg.total_rows;

    std::size_t max_col = c_ts;
    for (const std::size_t c : cols) max_col = std::max(max_col, c);
    if (max_col >= cells.size()) {
      ++dg.missing_field;
      note("line " + std::to_string(line_no) + ": too few cells");
      continue;
    }

    const auto ts = parse_timestamp(cells[c_ts]);
    if (!ts) {
      ++dg.missing_field;
      note("line " + std::to_string(line_no) + ": bad timestamp '" +
           cells[c_ts] + "'");
      continue;
    }

    ScadaRecord rec;
    rec.timestamp = *ts;
    double* fields[8] = {&rec.power_kw,       &rec.wind_speed,
                         &rec.wind_dir,       &rec.out_temp,
                         &rec.turb_intensity, &rec.wind_dir_sd,
                         &rec.out_temp_sd,    &rec.pitch_deg};
    bool ok = true;
    for (int i = 0; i < 8 && ok; ++i)
      ok = parse_double_cell(cells[cols[i]], fields[i]);
    if (!ok) {
      ++dg.missing_field;
      note("line " + std::to_string(line_no) + ": missing or bad field");
      continue;
    }
    records.push_back(rec);
  }

  std::stable_sort(records.begin(), records.end(),
                   [](const ScadaRecord& a, const ScadaRecord& b) {
                     return a.timestamp < b.timestamp;
                   });

  // Strict monotonicity: keep the first record of each timestamp.
  std::vector<ScadaRecord> unique;
  unique.reserve(records.size());
  for (const ScadaRecord& r : records) {
    if (!unique.empty() && unique.back().timestamp == r.timestamp) {
      ++dg.duplicate_timestamp;
      note("duplicate timestamp " + format_timestamp_utc(r.timestamp));
      continue;
    }
    unique.push_back(r);
  }
  return unique;
}

std::vector<ScadaRecord> parse_scada_file(const std::string& path,
                                          const ParseOptions& opts,
                                          ParseDiagnostics* diag) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("scada: cannot open " + path);
  return parse_scada(in, opts, diag);
}

std::pair<std::vector<ScadaRecord>, FilterReport> rough_filter(
    const std::vector<ScadaRecord>& records) {
  FilterReport report;
  report.input = static_cast<long>(records.size());

  std::set<std::int64_t> idle_times;
  for (const ScadaRecord& r : records)
    if (r.power_kw <= 0.0) idle_times.insert(r.timestamp);

  std::vector<ScadaRecord> kept;
  kept.reserve(records.size());
  for (const ScadaRecord& r : records) {
    if (r.power_kw <= 0.0) {
      ++report.idle;
    } else if (idle_times.count(r.timestamp - kStepSeconds) ||
               idle_times.count(r.timestamp + kStepSeconds)) {
      ++report.adjacent_to_idle;
    } else if (r.pitch_deg > kPitchLimitDeg) {
      ++report.pitch_exceeded;
    } else {
      kept.push_back(r);
    }
  }
  report.retained = static_cast<long>(kept.size());
  return {std::move(kept), report};
}

const std::vector<std::string>& feature_names() {
  static const std::vector<std::string> names = {
      "wind_speed", "wind_dir",    "out_temp", "turb_intensity",
      "wind_dir_sd", "out_temp_sd", "month"};
  return names;
}

Design featurize(const std::vector<ScadaRecord>& records) {
  const Eigen::Index n = static_cast<Eigen::Index>(records.size());
  Design d;
  d.y.resize(n);
  d.x.resize(n, kFeatureArity);
  d.t_index.resize(records.size());
  d.timestamps.resize(records.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const ScadaRecord& r = records[static_cast<std::size_t>(i)];
    d.y(i) = r.power_kw;
    d.x(i, 0) = r.wind_speed;
    d.x(i, 1) = r.wind_dir;
    d.x(i, 2) = r.out_temp;
    d.x(i, 3) = r.turb_intensity;
    d.x(i, 4) = r.wind_dir_sd;
    d.x(i, 5) = r.out_temp_sd;
    d.x(i, 6) = static_cast<double>(month_of(r.timestamp));
    d.t_index[static_cast<std::size_t>(i)] = static_cast<long>(i);
    d.timestamps[static_cast<std::size_t>(i)] = r.timestamp;
  }
  return d;
}

void write_design_csv(std::ostream& out, const Design& d) {
  out << "t_index,timestamp,power_kw";
  for (const std::string& name : feature_names()) out << ',' << name;
  out << '\n';
  char buf[32];
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    out << d.t_index[static_cast<std::size_t>(i)] << ','
        << format_timestamp_utc(d.timestamps[static_cast<std::size_t>(i)]);
    std::snprintf(buf, sizeof(buf), "%.17g", d.y(i));
    out << ',' << buf;
    for (int j = 0; j < kFeatureArity; ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", d.x(i, j));
      out << ',' << buf;
    }
    out << '\n';
  }
}

Design read_design_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("design csv: empty source");
  std::vector<std::array<double, kFeatureArity + 1>> values;
  std::vector<long> t_index;
  std::vector<std::int64_t> timestamps;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() < 3 + kFeatureArity)
      throw std::runtime_error("design csv: short row");
    const auto ts = parse_timestamp(cells[1]);
    if (!ts) throw std::runtime_error("design csv: bad timestamp " + cells[1]);
    std::array<double, kFeatureArity + 1> row{};
    for (int j = 0; j <= kFeatureArity; ++j)
      if (!parse_double_cell(cells[static_cast<std::size_t>(2 + j)], &row[static_cast<std::size_t>(j)]))
        throw std::runtime_error("design csv: bad numeric cell");
    t_index.push_back(std::stol(cells[0]));
    timestamps.push_back(*ts);
    values.push_back(row);
  }
  Design d;
  const Eigen::Index n = static_cast<Eigen::Index>(values.size());
  d.y.resize(n);
  d.x.resize(n, kFeatureArity);
  for (Eigen::Index i = 0; i < n; ++i) {
    d.y(i) = values[static_cast<std::size_t>(i)][0];
    for (int j = 0; j < kFeatureArity; ++j)
      d.x(i, j) = values[static_cast<std::size_t>(i)][static_cast<std::size_t>(j + 1)];
  }
  d.t_index = std::move(t_index);
  d.timestamps = std::move(timestamps);
  return d;
}

std::string filter_report_text(const FilterReport& r) {
  std::ostringstream os;
  os << "input_rows = " << r.input << '\n'
     << "removed_idle = " << r.idle << '\n'
     << "removed_adjacent_to_idle = " << r.adjacent_to_idle << '\n'
     << "removed_pitch_exceeded = " << r.pitch_exceeded << '\n'
     << "removed_missing_field = " << r.missing_field << '\n'
     << "retained = " << r.retained << '\n';
  return os.str();
}

}  // namespace windchart
