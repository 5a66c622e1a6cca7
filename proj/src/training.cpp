#include "vctc/training.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "vctc/error.hpp"
#include "vctc/evaluation.hpp"

namespace vctc {

namespace {

constexpr std::uint64_t kInitStream = 11;
constexpr std::uint64_t kShuffleStream = 12;
constexpr std::uint64_t kItemStream = 13;
constexpr const char* kOptimPrefix = "optim.";

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

bool all_finite(const Array& a) {
  return std::all_of(a.data.begin(), a.data.end(), [](double v) { return std::isfinite(v); });
}

// Sample order of one epoch: a Fisher-Yates shuffle keyed by the epoch.
std::vector<std::size_t> epoch_order(std::uint64_t seed, std::size_t epoch, std::size_t n) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng = Rng(seed, kShuffleStream).fork(epoch);
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
  return perm;
}

struct ItemResult {
  double prediction = 0.0;
  double regularization = 0.0;
  double total = 0.0;
  std::vector<Array> grads;
};

struct BatchItem {
  std::size_t dataset_index = 0;
  std::uint64_t global_index = 0;
};

ItemResult run_item(const ModelConfig& mc, ParamStore& replica, const std::vector<std::string>& names,
                    const Utterance& u, std::uint64_t seed, std::uint64_t global_index, double kl_weight,
                    std::size_t kl_samples) {
  replica.zero_grad();
  Rng rng = Rng(seed, kItemStream).fork(global_index);
  const ForwardOutput out = forward(mc, replica, u.features, rng, LatentMode::Sample);
  const LossBreakdown lb = model_loss(mc, out, u.labels, rng, kl_weight, kl_samples);
  ItemResult r;
  r.prediction = lb.prediction_value();
  r.regularization = lb.regularization_value();
  r.total = lb.total_value();
  if (std::isfinite(r.total)) ad::backward(ad::neg(lb.total));
  r.grads.reserve(names.size());
  for (const auto& n : names) r.grads.push_back(replica.get(n).grad());
  return r;
}

void write_dump(const std::string& path, std::size_t step, const std::vector<BatchItem>& batch,
                const std::vector<ItemResult>& results, const Dataset& data) {
  std::ofstream os(path);
  if (!os) return;
  os << "non-finite loss or gradient at step " << step << "\n";
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Utterance& u = data.items[batch[i].dataset_index];
    const ItemResult& r = results[i];
    bool grads_ok = true;
    for (const auto& g : r.grads) grads_ok = grads_ok && all_finite(g);
    double lo = 0.0, hi = 0.0;
    if (!u.features.data.empty()) {
      const auto [mn, mx] = std::minmax_element(u.features.data.begin(), u.features.data.end());
      lo = *mn;
      hi = *mx;
    }
    os << "item " << batch[i].dataset_index << " (sample " << batch[i].global_index << "): frames "
       << u.features.rows() << ", labels";
    for (int l : u.labels) os << ' ' << l;
    os << "; feature range [" << fmt_double(lo) << ", " << fmt_double(hi) << "]; prediction "
       << fmt_double(r.prediction) << ", regularization " << fmt_double(r.regularization) << ", total "
       << fmt_double(r.total) << ", gradients " << (grads_ok ? "finite" : "NON-FINITE") << "\n";
  }
}

ParamStore make_checkpoint(const ParamStore& params, const std::vector<std::string>& names, const AdamState& adam,
                           std::size_t step, const TrainConfig& cfg) {
  ParamStore ck = params.replicate();
  for (std::size_t i = 0; i < names.size(); ++i) {
    ck.add(std::string(kOptimPrefix) + "m." + names[i], adam.m[i], false);
    ck.add(std::string(kOptimPrefix) + "v." + names[i], adam.v[i], false);
  }
  ck.metadata["train.step"] = std::to_string(step);
  ck.metadata["train.adam_t"] = std::to_string(adam.t);
  ck.metadata["train.seed"] = std::to_string(cfg.seed);
  ck.metadata["train.steps"] = std::to_string(cfg.steps);
  ck.metadata["train.batch_size"] = std::to_string(cfg.batch_size);
  return ck;
}

std::size_t meta_count(const std::map<std::string, std::string>& meta, const std::string& key) {
  const auto it = meta.find(key);
  if (it == meta.end()) throw FormatError("checkpoint metadata lacks " + key);
  try {
    return static_cast<std::size_t>(std::stoull(it->second));
  } catch (const std::exception&) {
    throw FormatError("checkpoint metadata " + key + " is not a count");
  }
}

void write_summary(const std::string& path, const TrainConfig& cfg, const TrainResult& r) {
  nlohmann::json j;
  j["variant"] = to_string(cfg.variant);
  j["seed"] = cfg.seed;
  j["steps"] = cfg.steps;
  j["steps_done"] = r.steps_done;
  j["batch_size"] = cfg.batch_size;
  j["lr_start"] = cfg.lr_start;
  j["lr_end"] = cfg.lr_end;
  j["schedule"] = to_string(cfg.schedule);
  j["kl_weight"] = cfg.kl_weight;
  j["parameters"] = r.params.scalar_count();
  j["wall_clock_s"] = r.wall_clock_s;
  auto num_or_null = [](double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); };
  if (!r.records.empty()) {
    const MetricsRecord& last = r.records.back();
    j["final"] = {{"step", last.step},
                  {"prediction", last.prediction},
                  {"regularization", last.regularization},
                  {"total", last.total},
                  {"dev_ter", num_or_null(last.dev_error_rate)},
                  {"test_ter", num_or_null(last.test_error_rate)}};
  }
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write summary " + path);
  os << j.dump(2) << '\n';
}

}  // namespace

std::string to_string(LrSchedule s) { return s == LrSchedule::Geometric ? "geometric" : "linear"; }

LrSchedule parse_schedule(const std::string& s) {
  if (s == "geometric") return LrSchedule::Geometric;
  if (s == "linear") return LrSchedule::Linear;
  throw ConfigError("unknown schedule '" + s + "' (geometric, linear)");
}

void TrainConfig::validate() const {
  if (steps < 1) throw ConfigError("steps must be at least 1");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (!(lr_start > 0.0) || !(lr_end > 0.0)) throw ConfigError("learning rates must be positive");
  if (lr_end > lr_start) throw ConfigError("lr_end must not exceed lr_start");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
    throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
  if (!(kl_weight >= 0.0)) throw ConfigError("kl_weight must be non-negative");
  if (!(grad_clip >= 0.0)) throw ConfigError("grad_clip must be non-negative");
  if (kl_samples < 1) throw ConfigError("kl_samples must be at least 1");
  if (log_every < 1 || eval_every < 1) throw ConfigError("log_every and eval_every must be at least 1");
  if (loss && *loss != loss_for(variant))
    throw ConfigError("loss does not match variant " + to_string(variant));
  if (resume && checkpoint_path.empty()) throw ConfigError("resume needs a checkpoint path");
}

double learning_rate(const TrainConfig& cfg, std::size_t step) {
  if (step == 0 || cfg.steps == 1) return cfg.lr_start;
  const std::size_t last = cfg.steps - 1;
  if (step >= last) return cfg.lr_end;
  const double frac = static_cast<double>(step) / static_cast<double>(last);
  if (cfg.schedule == LrSchedule::Linear) return cfg.lr_start + (cfg.lr_end - cfg.lr_start) * frac;
  return cfg.lr_start * std::pow(cfg.lr_end / cfg.lr_start, frac);
}

double kl_weight_at(const TrainConfig& cfg, std::size_t step) {
  if (cfg.kl_warmup_steps == 0 || step + 1 >= cfg.kl_warmup_steps) return cfg.kl_weight;
  return cfg.kl_weight * static_cast<double>(step + 1) / static_cast<double>(cfg.kl_warmup_steps);
}

void adam_step(std::vector<Array*>& params, const std::vector<Array>& grads, AdamState& state, double lr,
               double beta1, double beta2, double eps) {
  detail::require(params.size() == grads.size(), "adam_step: parameter/gradient count mismatch");
  if (state.m.empty()) {
    for (const Array* p : params) {
      state.m.push_back(Array{p->shape, std::vector<double>(p->data.size(), 0.0)});
      state.v.push_back(Array{p->shape, std::vector<double>(p->data.size(), 0.0)});
    }
  }
  detail::require(state.m.size() == params.size(), "adam_step: state size mismatch");
  ++state.t;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i]->data;
    const auto& g = grads[i].data;
    auto& m = state.m[i].data;
    auto& v = state.v[i].data;
    detail::require(g.size() == p.size() && m.size() == p.size(), "adam_step: shape mismatch");
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
      v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      p[k] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

TrainResult train(const TrainConfig& cfg, const Dataset& train_set, const Dataset* dev, const Dataset* test) {
  cfg.validate();
  if (train_set.empty()) throw ConfigError("training set is empty");
  for (const Dataset* d : {dev, test}) {
    if (d && !(d->vocab == train_set.vocab)) throw ConfigError("dev/test vocabulary differs from training set");
    if (d && d->d_in != train_set.d_in) throw ConfigError("dev/test feature width differs from training set");
  }
  const auto t0 = std::chrono::steady_clock::now();

  ModelConfig mc;
  mc.d_in = train_set.d_in;
  mc.d_z = cfg.d_z;
  mc.d_hidden = cfg.d_hidden;
  mc.gru_hidden = cfg.gru_hidden;
  mc.vocab = train_set.vocab;
  mc.variant = cfg.variant;
  mc.validate();

  Rng init_rng(cfg.seed, kInitStream);
  TrainResult result;
  result.model = mc;
  result.params = init_params(mc, init_rng);
  ParamStore& params = result.params;

  std::vector<std::string> names;
  for (const auto& [name, e] : params.entries())
    if (e.trainable) names.push_back(name);
  std::vector<Array*> values;
  for (const auto& n : names) values.push_back(&params.get(n).node()->value);

  AdamState adam;
  for (Array* p : values) {
    adam.m.push_back(Array{p->shape, std::vector<double>(p->data.size(), 0.0)});
    adam.v.push_back(Array{p->shape, std::vector<double>(p->data.size(), 0.0)});
  }

  std::size_t start = 0;
  if (cfg.resume && std::filesystem::exists(cfg.checkpoint_path)) {
    const ParamStore ck = ParamStore::load(cfg.checkpoint_path);
    const ModelConfig saved = ModelConfig::from_metadata(ck.metadata);
    if (saved.variant != mc.variant || saved.d_in != mc.d_in || saved.d_z != mc.d_z ||
        saved.d_hidden != mc.d_hidden || saved.effective_gru_hidden() != mc.effective_gru_hidden() ||
        !(saved.vocab == mc.vocab))
      throw ConfigError("checkpoint model does not match the training config");
    if (meta_count(ck.metadata, "train.seed") != cfg.seed || meta_count(ck.metadata, "train.steps") != cfg.steps ||
        meta_count(ck.metadata, "train.batch_size") != cfg.batch_size)
      throw ConfigError("checkpoint was written with a different seed, step count or batch size");
    start = meta_count(ck.metadata, "train.step");
    adam.t = meta_count(ck.metadata, "train.adam_t");
    for (std::size_t i = 0; i < names.size(); ++i) {
      const auto& src = ck.get(names[i]).value();
      if (src.shape != values[i]->shape) throw FormatError("checkpoint shape mismatch for " + names[i]);
      values[i]->data = src.data;
      adam.m[i].data = ck.get(std::string(kOptimPrefix) + "m." + names[i]).value().data;
      adam.v[i].data = ck.get(std::string(kOptimPrefix) + "v." + names[i]).value().data;
    }
    if (!cfg.metrics_path.empty() && std::filesystem::exists(cfg.metrics_path)) {
      for (const auto& r : read_metrics_file(cfg.metrics_path))
        if (r.step <= start) result.records.push_back(r);
    }
  }

  std::ofstream metrics_out;
  if (!cfg.metrics_path.empty()) {
    metrics_out.open(cfg.metrics_path, std::ios::trunc);
    if (!metrics_out) throw ConfigError("cannot write metrics " + cfg.metrics_path);
    write_metrics(metrics_out, result.records, cfg.record_wall_clock);
    metrics_out.flush();
  }

  const std::size_t n = train_set.size();
  const std::size_t threads =
      std::max<std::size_t>(1, std::min(cfg.threads ? cfg.threads : std::thread::hardware_concurrency(),
                                        cfg.batch_size));
  std::vector<ParamStore> replicas;
  for (std::size_t w = 0; w < threads; ++w) replicas.push_back(params.replicate());

  std::size_t cached_epoch = static_cast<std::size_t>(-1);
  std::vector<std::size_t> order;
  std::vector<BatchItem> batch(cfg.batch_size);
  std::vector<ItemResult> results(cfg.batch_size);
  const std::string dump_path = !cfg.dump_path.empty()           ? cfg.dump_path
                                : !cfg.checkpoint_path.empty() ? cfg.checkpoint_path + ".diverged.txt"
                                                               : "vctc_diverged.txt";

  const std::size_t end = cfg.stop_at ? std::min(cfg.stop_at, cfg.steps) : cfg.steps;
  for (std::size_t step = start; step < end; ++step) {
    for (std::size_t i = 0; i < cfg.batch_size; ++i) {
      const std::uint64_t g = static_cast<std::uint64_t>(step) * cfg.batch_size + i;
      const std::size_t epoch = g / n;
      if (epoch != cached_epoch) {
        order = epoch_order(cfg.seed, epoch, n);
        cached_epoch = epoch;
      }
      batch[i] = {order[g % n], g};
    }
    const double klw = kl_weight_at(cfg, step);
    for (auto& r : replicas) r.copy_values_from(params);

    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(threads);
    auto work = [&](std::size_t w) {
      try {
        for (std::size_t i = next++; i < cfg.batch_size; i = next++) {
          results[i] = run_item(mc, replicas[w], names, train_set.items[batch[i].dataset_index], cfg.seed,
                                batch[i].global_index, klw, cfg.kl_samples);
        }
      } catch (...) {
        errors[w] = std::current_exception();
      }
    };
    if (threads == 1) {
      work(0);
    } else {
      std::vector<std::thread> pool;
      for (std::size_t w = 0; w < threads; ++w) pool.emplace_back(work, w);
      for (auto& t : pool) t.join();
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);

    // Reduction in item order keeps results independent of the thread count.
    double pred = 0.0, reg = 0.0, total = 0.0;
    std::vector<Array> grads;
    for (Array* p : values) grads.push_back(Array{p->shape, std::vector<double>(p->data.size(), 0.0)});
    bool finite = true;
    for (std::size_t i = 0; i < cfg.batch_size; ++i) {
      const ItemResult& r = results[i];
      pred += r.prediction;
      reg += r.regularization;
      total += r.total;
      for (std::size_t k = 0; k < grads.size(); ++k) {
        auto& dst = grads[k].data;
        const auto& src = r.grads[k].data;
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
      }
    }
    const double inv_b = 1.0 / static_cast<double>(cfg.batch_size);
    double sq = 0.0;
    for (auto& g : grads)
      for (double& v : g.data) {
        v *= inv_b;
        sq += v * v;
      }
    finite = std::isfinite(total) && std::isfinite(sq);
    if (!finite) {
      write_dump(dump_path, step, batch, results, train_set);
      throw DivergenceError("non-finite loss or gradient at step " + std::to_string(step) + "; batch written to " +
                            dump_path);
    }
    if (cfg.grad_clip > 0.0) {
      const double norm = std::sqrt(sq);
      if (norm > cfg.grad_clip) {
        const double s = cfg.grad_clip / norm;
        for (auto& g : grads)
          for (double& v : g.data) v *= s;
      }
    }
    const double lr = learning_rate(cfg, step);
    adam_step(values, grads, adam, lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);

    const std::size_t done = step + 1;
    const bool last = done == cfg.steps;
    const bool eval_now = last || done % cfg.eval_every == 0;
    if (last || done % cfg.log_every == 0 || eval_now) {
      MetricsRecord rec;
      rec.step = done;
      rec.learning_rate = lr;
      rec.prediction = pred * inv_b;
      rec.regularization = reg * inv_b;
      rec.total = total * inv_b;
      rec.kl_weight = klw;
      rec.dev_error_rate = std::nan("");
      rec.test_error_rate = std::nan("");
      if (eval_now && dev) rec.dev_error_rate = evaluate(mc, params, *dev, DecodeOptions{}).error_rate();
      if (eval_now && test) rec.test_error_rate = evaluate(mc, params, *test, DecodeOptions{}).error_rate();
      rec.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      result.records.push_back(rec);
      if (metrics_out.is_open()) {
        metrics_out << format_metrics(rec, cfg.record_wall_clock) << '\n';
        metrics_out.flush();
      }
    }
    if (!cfg.checkpoint_path.empty() &&
        (last || done == end || (cfg.checkpoint_every && done % cfg.checkpoint_every == 0))) {
      make_checkpoint(params, names, adam, done, cfg).save(cfg.checkpoint_path);
    }
    result.steps_done = done;
  }
  if (start >= end) result.steps_done = start;

  result.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!cfg.summary_path.empty()) write_summary(cfg.summary_path, cfg, result);
  return result;
}

LoadedModel load_model(const std::string& checkpoint_path) {
  const ParamStore ck = ParamStore::load(checkpoint_path);
  LoadedModel out;
  out.config = ModelConfig::from_metadata(ck.metadata);
  out.config.validate();
  out.params.metadata = ck.metadata;
  for (const auto& [name, e] : ck.entries()) {
    if (name.rfind(kOptimPrefix, 0) == 0) continue;
    out.params.add(name, e.tensor.value(), e.trainable);
  }
  const auto it = ck.metadata.find("train.step");
  if (it != ck.metadata.end()) out.step = meta_count(ck.metadata, "train.step");
  return out;
}

}  // namespace vctc
