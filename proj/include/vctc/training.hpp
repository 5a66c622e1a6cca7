#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "vctc/metrics.hpp"
#include "vctc/models.hpp"
#include "vctc/param_store.hpp"
#include "vctc/synthetic.hpp"

namespace vctc {

enum class LrSchedule { Geometric, Linear };
std::string to_string(LrSchedule s);
LrSchedule parse_schedule(const std::string& s);

// Raised when a batch produces a non-finite loss or gradient.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  Variant variant = Variant::CI;
  // Must agree with the variant when set.
  std::optional<LossKind> loss;
  std::size_t d_z = 32;
  std::size_t d_hidden = 64;
  std::size_t gru_hidden = 0;

  std::size_t batch_size = 16;
  std::size_t steps = 1000;
  double lr_start = 1e-3;
  double lr_end = 5e-6;
  LrSchedule schedule = LrSchedule::Geometric;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  // Global gradient-norm clip; 0 disables.
  double grad_clip = 0.0;

  double kl_weight = 1.0;
  // Linear ramp of the KL weight from 0 over this many steps.
  std::size_t kl_warmup_steps = 0;
  std::size_t kl_samples = 1;

  std::uint64_t seed = 1;
  std::size_t log_every = 10;
  std::size_t eval_every = 100;
  std::size_t checkpoint_every = 0;  // 0: final step only
  std::string checkpoint_path;
  std::string metrics_path;
  std::string summary_path;
  // Where a diverging batch is described; defaults next to the checkpoint.
  std::string dump_path;
  bool record_wall_clock = false;
  // Worker threads for the per-item pass; 0 uses the hardware count.
  std::size_t threads = 1;
  bool resume = false;
  // Stop once this many steps are complete (0: run to `steps`); a later
  // run with resume continues from the checkpoint written here.
  std::size_t stop_at = 0;

  // Throws ConfigError.
  void validate() const;
};

double learning_rate(const TrainConfig& cfg, std::size_t step);
double kl_weight_at(const TrainConfig& cfg, std::size_t step);

struct AdamState {
  std::vector<Array> m;
  std::vector<Array> v;
  std::size_t t = 0;
};

// One Adam update of `params` from `grads` (same order and shapes).
void adam_step(std::vector<Array*>& params, const std::vector<Array>& grads, AdamState& state, double lr,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

struct TrainResult {
  ModelConfig model;
  ParamStore params;
  std::vector<MetricsRecord> records;
  std::size_t steps_done = 0;
  double wall_clock_s = 0.0;
};

// Mini-batch Adam on -total. dev and test may be null. Metrics are appended
// every log_every steps (dev/test error rates every eval_every steps) and
// written to metrics_path if set; the checkpoint holds parameters, optimizer
// moments and the completed step count.
TrainResult train(const TrainConfig& cfg, const Dataset& train_set, const Dataset* dev = nullptr,
                  const Dataset* test = nullptr);

// Model parameters and config from a checkpoint, optimizer state dropped.
struct LoadedModel {
  ModelConfig config;
  ParamStore params;
  std::size_t step = 0;
};
LoadedModel load_model(const std::string& checkpoint_path);

}  // namespace vctc
