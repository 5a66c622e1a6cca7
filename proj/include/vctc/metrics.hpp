#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

namespace vctc {

// One row of the training metrics file. Missing dev/test values are NaN
// and written as empty fields.
struct MetricsRecord {
  std::size_t step = 0;
  double learning_rate = 0.0;
  double prediction = 0.0;
  double regularization = 0.0;
  double total = 0.0;
  double kl_weight = 0.0;
  double dev_error_rate = 0.0;
  double test_error_rate = 0.0;
  double wall_clock_s = 0.0;
};

// Comma-separated, one header row. The wall-clock column is only present
// when requested, so that files from repeated runs compare equal.
std::string metrics_header(bool with_wall_clock);
std::string format_metrics(const MetricsRecord& r, bool with_wall_clock);
void write_metrics(std::ostream& os, const std::vector<MetricsRecord>& records, bool with_wall_clock);
// Throws FormatError on a malformed file.
std::vector<MetricsRecord> read_metrics(std::istream& is);
std::vector<MetricsRecord> read_metrics_file(const std::string& path);

// Relative shrinkage of `gap` against `reference_gap`: 1 - gap / reference.
double gap_reduction(double gap, double reference_gap);

struct GapSummary {
  struct Run {
    std::string name;
    std::vector<std::pair<std::size_t, double>> trajectory;  // (step, test - dev)
    double final_dev = 0.0;
    double final_test = 0.0;
    double final_gap = 0.0;
  };
  std::vector<Run> runs;
  // reduction[i][j] = gap_reduction(runs[i].final_gap, runs[j].final_gap).
  std::vector<std::vector<double>> reduction;

  std::string to_text() const;
  std::string to_json() const;
};

// Dev-test gap trajectories of each run, from records carrying both rates.
GapSummary convergence_report(const std::vector<std::pair<std::string, std::vector<MetricsRecord>>>& runs);
GapSummary convergence_report(const std::vector<std::string>& metrics_paths);

}  // namespace vctc
