#include "vctc/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "vctc/error.hpp"

namespace vctc {

namespace {

constexpr const char* kColumns[] = {"step",      "lr",     "prediction", "regularization",
                                    "total",     "kl_weight", "dev_ter", "test_ter"};

std::string num(double v) {
  if (std::isnan(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_num(const std::string& s, std::size_t line) {
  if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw FormatError("metrics line " + std::to_string(line) + ": bad number '" + s + "'");
  }
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

std::string metrics_header(bool with_wall_clock) {
  std::string h;
  for (const char* c : kColumns) h += (h.empty() ? "" : ",") + std::string(c);
  if (with_wall_clock) h += ",wall_clock_s";
  return h;
}

std::string format_metrics(const MetricsRecord& r, bool with_wall_clock) {
  std::string s = std::to_string(r.step) + "," + num(r.learning_rate) + "," + num(r.prediction) + "," +
                  num(r.regularization) + "," + num(r.total) + "," + num(r.kl_weight) + "," +
                  num(r.dev_error_rate) + "," + num(r.test_error_rate);
  if (with_wall_clock) s += "," + num(r.wall_clock_s);
  return s;
}

void write_metrics(std::ostream& os, const std::vector<MetricsRecord>& records, bool with_wall_clock) {
  os << metrics_header(with_wall_clock) << '\n';
  for (const auto& r : records) os << format_metrics(r, with_wall_clock) << '\n';
}

std::vector<MetricsRecord> read_metrics(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw FormatError("metrics: empty file");
  const auto header = split_csv(line);
  const bool with_clock = header.size() == std::size(kColumns) + 1;
  if (header.size() != std::size(kColumns) && !with_clock) throw FormatError("metrics: unexpected header");
  for (std::size_t i = 0; i < std::size(kColumns); ++i) {
    if (header[i] != kColumns[i]) throw FormatError("metrics: unexpected column '" + header[i] + "'");
  }
  if (with_clock && header.back() != "wall_clock_s") throw FormatError("metrics: unexpected trailing column");

  std::vector<MetricsRecord> out;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv(line);
    if (f.size() != header.size()) throw FormatError("metrics line " + std::to_string(line_no) + ": wrong field count");
    MetricsRecord r;
    const double step = parse_num(f[0], line_no);
    if (!(step >= 0) || step != std::floor(step)) throw FormatError("metrics line " + std::to_string(line_no) + ": bad step");
    r.step = static_cast<std::size_t>(step);
    r.learning_rate = parse_num(f[1], line_no);
    r.prediction = parse_num(f[2], line_no);
    r.regularization = parse_num(f[3], line_no);
    r.total = parse_num(f[4], line_no);
    r.kl_weight = parse_num(f[5], line_no);
    r.dev_error_rate = parse_num(f[6], line_no);
    r.test_error_rate = parse_num(f[7], line_no);
    if (with_clock) r.wall_clock_s = parse_num(f[8], line_no);
    if (!out.empty() && r.step <= out.back().step) {
      throw FormatError("metrics line " + std::to_string(line_no) + ": steps not increasing");
    }
    out.push_back(r);
  }
  return out;
}

std::vector<MetricsRecord> read_metrics_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("metrics: cannot open " + path);
  return read_metrics(is);
}

double gap_reduction(double gap, double reference_gap) {
  if (reference_gap == 0.0) return gap == 0.0 ? 0.0 : -std::numeric_limits<double>::infinity();
  return 1.0 - gap / reference_gap;
}

GapSummary convergence_report(const std::vector<std::pair<std::string, std::vector<MetricsRecord>>>& runs) {
  detail::require(!runs.empty(), "convergence_report: no runs");
  GapSummary s;
  for (const auto& [name, records] : runs) {
    GapSummary::Run run;
    run.name = name;
    for (const auto& r : records) {
      if (std::isnan(r.dev_error_rate) || std::isnan(r.test_error_rate)) continue;
      run.trajectory.emplace_back(r.step, r.test_error_rate - r.dev_error_rate);
      run.final_dev = r.dev_error_rate;
      run.final_test = r.test_error_rate;
    }
    if (run.trajectory.empty()) throw FormatError("convergence_report: run '" + name + "' has no dev/test records");
    run.final_gap = run.trajectory.back().second;
    s.runs.push_back(std::move(run));
  }
  s.reduction.assign(s.runs.size(), std::vector<double>(s.runs.size(), 0.0));
  for (std::size_t i = 0; i < s.runs.size(); ++i)
    for (std::size_t j = 0; j < s.runs.size(); ++j)
      s.reduction[i][j] = gap_reduction(s.runs[i].final_gap, s.runs[j].final_gap);
  return s;
}

GapSummary convergence_report(const std::vector<std::string>& metrics_paths) {
  std::vector<std::pair<std::string, std::vector<MetricsRecord>>> runs;
  for (const auto& p : metrics_paths) runs.emplace_back(p, read_metrics_file(p));
  return convergence_report(runs);
}

std::string GapSummary::to_text() const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << "run,final_dev,final_test,final_gap\n";
  for (const auto& r : runs) os << r.name << ',' << r.final_dev << ',' << r.final_test << ',' << r.final_gap << '\n';
  os << "\ngap reduction of row vs column (1 - gap_row / gap_col)\n";
  for (std::size_t i = 0; i < runs.size(); ++i) {
    for (std::size_t j = 0; j < runs.size(); ++j) {
      if (i == j) continue;
      os << runs[i].name << " vs " << runs[j].name << ": " << 100.0 * reduction[i][j] << "%\n";
    }
  }
  return os.str();
}

std::string GapSummary::to_json() const {
  nlohmann::json j;
  j["runs"] = nlohmann::json::array();
  for (const auto& r : runs) {
    nlohmann::json traj = nlohmann::json::array();
    for (const auto& [step, gap] : r.trajectory) traj.push_back({step, gap});
    j["runs"].push_back({{"name", r.name},
                         {"final_dev", r.final_dev},
                         {"final_test", r.final_test},
                         {"final_gap", r.final_gap},
                         {"trajectory", traj}});
  }
  j["reduction"] = reduction;
  return j.dump(2);
}

}  // namespace vctc
