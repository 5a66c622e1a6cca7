// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "elbo_oracle.hpp"
#include "gradcheck.hpp"
#include "vctc/decoding.hpp"
#include "vctc/evaluation.hpp"
#include "vctc/losses.hpp"
#include "vctc/metrics.hpp"
#include "vctc/models.hpp"
#include "vctc/oracles.hpp"
#include "vctc/synthetic.hpp"
#include "vctc/training.hpp"
#include "vctc/variational.hpp"

using namespace vctc;
using vctc::testing::gradient_error;
using vctc::testing::random_array;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const Outcome& o) {
  std::printf("%s %d %s: %s\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str());
  std::fflush(stdout);
  if (!o.pass) ++failures;
}

template <typename... Args>
std::string format(const char* fmt, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

const Variant kAll[] = {Variant::LinearCtc, Variant::NonRegCtc, Variant::CI, Variant::MD, Variant::MA};

// 1. Lattice likelihood against path enumeration.
Outcome ctc_oracle() {
  const auto t0 = Clock::now();
  Rng rng(101, 0);
  const auto r = oracle::check_ctc_against_enumeration(1000, 6, 3, 3, rng);
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = r.instances == 1000 && r.max_abs_error <= 1e-9 && secs < 5.0;
  o.detail = format("max |dp - enumeration| = %.3g over %zu instances (%zu infeasible), %.2f s", r.max_abs_error,
                    r.instances, r.infeasible, secs);
  return o;
}

// 2. Analytic gradients against central differences.
Outcome gradient_suite() {
  std::size_t instances = 0;
  double worst_ctc = 0.0, worst_kl = 0.0;
  std::vector<double> worst_model(3, 0.0);

  // CTC objective through log-softmax; differences taken of the enumerated
  // likelihood so the reference shares nothing with the lattice.
  Rng rng(201, 0);
  for (int i = 0; i < 40; ++i, ++instances) {
    const std::size_t T = 2 + rng.below(4), V = 1 + rng.below(3);
    LabelSequence y(rng.below(4));
    for (int& k : y) k = static_cast<int>(rng.below(V));
    while (min_frames_required(y) > T) y.pop_back();
    const Array logits0 = random_array(rng, {T, V + 1});
    auto logits = ad::Tensor::variable(logits0);
    ad::backward(loss_ctc(ad::log_softmax(logits), y).total);
    const auto f = [&](const std::vector<double>& flat) {
      return brute_force_log_likelihood(FrameLogProbs::from_logits(Array(logits0.shape, flat)), y);
    };
    worst_ctc = std::max(worst_ctc, oracle::max_relative_error(logits.grad().data,
                                                                oracle::numeric_gradient(f, logits0.data)));
  }

  for (int i = 0; i < 30; ++i, ++instances) {
    const std::size_t rows = 1 + rng.below(4), d = 1 + rng.below(4);
    auto mq = ad::Tensor::variable(random_array(rng, {rows, d}));
    auto lq = ad::Tensor::variable(random_array(rng, {rows, d}, 0.7));
    auto mp = ad::Tensor::variable(random_array(rng, {rows, d}));
    auto lp = ad::Tensor::variable(random_array(rng, {rows, d}, 0.7));
    worst_kl = std::max(worst_kl, gradient_error({mq, lq, mp, lp}, [&] { return kl_diag_gauss({mq, lq}, {mp, lp}); }));
  }

  const Variant latent[] = {Variant::CI, Variant::MD, Variant::MA};
  for (std::size_t v = 0; v < 3; ++v) {
    for (int i = 0; i < 12; ++i, ++instances) {
      ModelConfig c;
      c.d_in = 3;
      c.d_z = 2;
      c.d_hidden = 3;
      c.vocab = Vocab::numbered(2);
      c.variant = latent[v];
      Rng init(202 + v, static_cast<std::uint64_t>(i));
      const ParamStore p = init_params(c, init);
      const Array x = random_array(init, {3 + init.below(2), 3});
      LabelSequence y{static_cast<int>(init.below(2))};
      if (init.below(2)) y.push_back(static_cast<int>(init.below(2)));
      std::vector<ad::Tensor> leaves;
      for (const auto& [name, e] : p.entries())
        if (e.trainable) leaves.push_back(e.tensor);
      const auto build = [&] {
        Rng r(203, static_cast<std::uint64_t>(i));
        const auto out = forward(c, p, x, r);
        return model_loss(c, out, y, r, 1.0, 2).total;
      };
      worst_model[v] = std::max(worst_model[v], gradient_error(leaves, build));
    }
  }

  Outcome o;
  const double worst = std::max({worst_ctc, worst_kl, worst_model[0], worst_model[1], worst_model[2]});
  o.pass = instances >= 100 && worst <= 1e-4;
  o.detail = format("max relative error ctc %.2g, kl %.2g, ci %.2g, md %.2g, ma %.2g over %zu instances", worst_ctc,
                    worst_kl, worst_model[0], worst_model[1], worst_model[2], instances);
  return o;
}

DiagGaussian vector_gaussian(const std::vector<double>& mu, const std::vector<double>& lv) {
  return {ad::Tensor::constant(Array({mu.size()}, mu)), ad::Tensor::constant(Array({lv.size()}, lv))};
}

// 3. Closed-form KL against quadrature and Monte Carlo.
Outcome kl_correctness() {
  Rng rng(301, 0);
  double worst_gh = 0.0;
  for (int i = 0; i < 200; ++i) {
    const double mq = 2 * rng.normal(), lq = rng.normal(), mp = 2 * rng.normal(), lp = rng.normal();
    const double closed = kl_diag_gauss(vector_gaussian({mq}, {lq}), vector_gaussian({mp}, {lp})).item();
    worst_gh = std::max(worst_gh, std::abs(closed - oracle::kl_quadrature_1d(mq, lq, mp, lp)));
  }
  double worst_z = 0.0;
  for (std::size_t d = 1; d <= 8; ++d) {
    std::vector<double> mq(d), lq(d), mp(d), lp(d);
    for (std::size_t k = 0; k < d; ++k) {
      mq[k] = rng.normal();
      lq[k] = 0.5 * rng.normal();
      mp[k] = rng.normal();
      lp[k] = 0.5 * rng.normal();
    }
    const double closed = kl_diag_gauss(vector_gaussian(mq, lq), vector_gaussian(mp, lp)).item();
    const auto mc = oracle::kl_monte_carlo(mq, lq, mp, lp, 1000000, rng);
    worst_z = std::max(worst_z, std::abs(closed - mc.mean) / mc.std_error);
  }
  Outcome o;
  o.pass = worst_gh <= 1e-6 && worst_z <= 3.0;
  o.detail = format("max |closed - quadrature| = %.2g (200 instances, D_z = 1); max |closed - MC| = %.2f SE "
                    "(10^6 samples, D_z = 1..8)",
                    worst_gh, worst_z);
  return o;
}

// 4. ELBO never exceeds the log marginal likelihood.
Outcome elbo_bound() {
  Outcome o;
  double min_margin = INFINITY;
  std::string parts;
  for (std::uint64_t s = 0; s < 3; ++s) {
    Rng model_rng(401, s);
    const testing::TinyLatentModel m(model_rng);
    Rng rng(402, s);
    const auto c = testing::check_elbo_bound(m, 10000, rng);
    min_margin = std::min(min_margin, c.margin());
    parts += format("%s[%.4f <= %.4f]", parts.empty() ? "" : " ", c.elbo.mean, c.log_marginal.mean);
  }
  o.pass = min_margin >= 0.0;
  o.detail = format("ELBO vs importance-sampled log p(y|X), 10^4 samples: %s; min slack %.4f", parts.c_str(), min_margin);
  return o;
}

// 5. Degenerate cases reduce exactly.
Outcome degenerate_reductions() {
  double worst = 0.0;
  std::size_t cases = 0;
  const auto note = [&](double a, double b) {
    worst = std::max(worst, std::abs(a - b));
    ++cases;
  };
  // Through real models: sampled log-probs, then q substituted for the prior.
  for (Variant v : {Variant::CI, Variant::MD, Variant::MA}) {
    for (std::uint64_t s = 0; s < 20; ++s) {
      ModelConfig c;
      c.d_in = 4;
      c.d_z = 3;
      c.d_hidden = 5;
      c.vocab = Vocab::numbered(3);
      c.variant = v;
      Rng rng(501, s);
      const ParamStore p = init_params(c, rng);
      const Array x = random_array(rng, {6, 4});
      const LabelSequence y{0, 2, 2};
      const auto out = forward(c, p, x, rng);
      const double ctc = loss_ctc(out.log_probs, y).total_value();
      note(loss_ci(out.log_probs, y, *out.q, *out.q).total_value(), ctc);
      Rng r(502, s);
      note(loss_markov(out.log_probs, y, *out.q, PriorChain::from_fixed(*out.q), r).total_value(), ctc);
      const DiagGaussian q = *out.q;
      const auto tied = PriorChain::from_conditional(
          q.at(0), [q](std::size_t t, const ad::Tensor&) { return q.at(t); }, q.rows());
      note(loss_markov(out.log_probs, y, q, tied, r, 3).total_value(), ctc);
      // z-independent prior that differs from q: Markov bound equals CI bound.
      const DiagGaussian prior = *out.prior;
      const auto indep = PriorChain::from_conditional(
          prior.at(0), [prior](std::size_t t, const ad::Tensor&) { return prior.at(t); }, prior.rows());
      note(loss_markov(out.log_probs, y, q, indep, r, 2, 0.8).total_value(),
           loss_ci(out.log_probs, y, q, prior, 0.8).total_value());
    }
  }
  Outcome o;
  o.pass = worst <= 1e-12;
  o.detail = format("max |difference| = %.3g over %zu reductions (q = p -> CTC; z-independent prior -> CI)", worst, cases);
  return o;
}

// 6. Decoder properties.
Outcome decoder_properties() {
  Rng rng(601, 0);
  std::size_t decodes = 0, order_violations = 0, map_mismatches = 0, monotone_violations = 0;
  const NGramLm lm = NGramLm::train({{"t0", "t1", "t2"}, {"t2", "t2"}, {"t1", "t0"}, {"t3", "t1", "t3"}}, 3);
  const Vocab vocab = Vocab::numbered(4);
  const auto ordered = [](const DecodeResult& r) {
    return r.emission_frames.size() == r.tokens.size() &&
           std::is_sorted(r.emission_frames.begin(), r.emission_frames.end());
  };

  for (int i = 0; i < 300; ++i) {
    const FrameLogProbs p = FrameLogProbs::from_logits(random_array(rng, {2 + rng.below(20), 5}, 2.5));
    std::vector<DecodeResult> rs{best_path_decode(p)};
    for (std::size_t w : {1u, 4u, 30u}) {
      BeamConfig cfg;
      cfg.beam_width = w;
      rs.push_back(beam_search_decode(p, cfg));
      cfg.insertion_bonus = 0.5;
      rs.push_back(beam_search_decode(p, cfg, LmFusion{&lm, &vocab}));
    }
    for (const auto& r : rs) {
      ++decodes;
      if (!ordered(r)) ++order_violations;
    }
  }

  // Exhaustive beam against the best label sequence by enumeration.
  std::size_t map_cases = 0;
  for (int i = 0; i < 400; ++i, ++map_cases) {
    const std::size_t T = 1 + rng.below(4), V = 1 + rng.below(2);
    const FrameLogProbs p = FrameLogProbs::from_logits(random_array(rng, {T, V + 1}, 1.5));
    std::vector<LabelSequence> all{{}}, frontier{{}};
    for (std::size_t len = 1; len <= T; ++len) {
      std::vector<LabelSequence> grown;
      for (const auto& s : frontier)
        for (std::size_t c = 0; c < V; ++c) {
          auto e = s;
          e.push_back(static_cast<int>(c));
          grown.push_back(e);
        }
      all.insert(all.end(), grown.begin(), grown.end());
      frontier = std::move(grown);
    }
    double best = kNegInf;
    for (const auto& y : all) best = std::max(best, brute_force_log_likelihood(p, y));
    BeamConfig cfg;
    cfg.beam_width = all.size() * (V + 1);
    const DecodeResult r = beam_search_decode(p, cfg);
    ++decodes;
    if (!ordered(r)) ++order_violations;
    if (std::abs(r.score - best) > 1e-9 || std::abs(brute_force_log_likelihood(p, r.tokens) - best) > 1e-9)
      ++map_mismatches;
  }

  // Score as a function of the width, with and without the LM.
  std::size_t mono_cases = 0;
  for (int i = 0; i < 200; ++i, ++mono_cases) {
    const FrameLogProbs p = FrameLogProbs::from_logits(random_array(rng, {3 + rng.below(10), 5}, 1.5));
    for (bool with_lm : {false, true}) {
      double prev = kNegInf;
      for (std::size_t w = 1; w <= 24; ++w) {
        BeamConfig cfg;
        cfg.beam_width = w;
        const DecodeResult r =
            with_lm ? beam_search_decode(p, cfg, LmFusion{&lm, &vocab}) : beam_search_decode(p, cfg);
        ++decodes;
        if (!ordered(r)) ++order_violations;
        if (r.score < prev) ++monotone_violations;
        prev = r.score;
      }
    }
  }

  Outcome o;
  o.pass = order_violations == 0 && map_mismatches == 0 && monotone_violations == 0;
  o.detail = format("order violations %zu/%zu decodes; MAP mismatches %zu/%zu; width-monotonicity violations %zu "
                    "over %zu instances x widths 1..24",
                    order_violations, decodes, map_mismatches, map_cases, monotone_violations, mono_cases);
  return o;
}

// Frozen protocol for the desk-scale trend check.
constexpr std::uint64_t kTrendSeeds[] = {1, 2, 3, 4, 5, 6};
constexpr double kTrendThreshold = 0.10;

TrainConfig trend_config(Variant v, std::uint64_t seed) {
  TrainConfig c;
  c.variant = v;
  c.seed = seed;
  c.steps = 800;
  c.batch_size = 16;
  c.lr_start = 3e-2;
  c.lr_end = 1.5e-3;
  c.grad_clip = 5.0;
  c.log_every = 100;
  c.eval_every = 100;
  return c;
}

// 7. Trends on the synthetic task. Returns two outcomes: (a) and (b).
std::pair<Outcome, Outcome> trend_reproduction() {
  const auto t0 = Clock::now();
  std::vector<std::vector<double>> test(5), gap(5);
  std::vector<std::pair<std::string, std::vector<MetricsRecord>>> runs;
  for (std::uint64_t seed : kTrendSeeds) {
    SyntheticTaskSpec spec;
    spec.seed = seed;
    const Dataset train_set = generate_dataset(spec, 200, 0);
    const Dataset dev = generate_dataset(spec, 200, 1);
    // Test condition: noisier frames and stronger per-utterance offsets.
    const Dataset shifted = generate_dataset(spec, 200, 2, 0.9, 0.6);
    for (std::size_t v = 0; v < 5; ++v) {
      const TrainResult r = train(trend_config(kAll[v], seed), train_set, &dev, &shifted);
      const MetricsRecord& last = r.records.back();
      test[v].push_back(last.test_error_rate);
      gap[v].push_back(last.test_error_rate - last.dev_error_rate);
      std::printf("  seed %llu %-11s dev %.4f test %.4f gap %+.4f (%.1f s)\n", static_cast<unsigned long long>(seed),
                  to_string(kAll[v]).c_str(), last.dev_error_rate, last.test_error_rate,
                  last.test_error_rate - last.dev_error_rate, r.wall_clock_s);
      std::fflush(stdout);
      runs.emplace_back(to_string(kAll[v]) + "/" + std::to_string(seed), r.records);
    }
  }
  const auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  const GapSummary summary = convergence_report(runs);
  // Seed-mean gap per evaluation step; runs are stored seed-major.
  std::printf("  seed-mean test - dev gap by step:\n  %6s", "step");
  for (Variant v : kAll) std::printf(" %11s", to_string(v).c_str());
  std::printf("\n");
  const std::size_t points = summary.runs[0].trajectory.size();
  for (std::size_t k = 0; k < points; ++k) {
    std::printf("  %6zu", summary.runs[0].trajectory[k].first);
    for (std::size_t v = 0; v < 5; ++v) {
      double s = 0.0;
      for (std::size_t i = 0; i < std::size(kTrendSeeds); ++i) s += summary.runs[i * 5 + v].trajectory[k].second;
      std::printf(" %11.4f", s / static_cast<double>(std::size(kTrendSeeds)));
    }
    std::printf("\n");
  }
  const double secs = seconds_since(t0);

  Outcome a;
  std::string per;
  for (std::size_t v = 0; v < 5; ++v) {
    const double m = mean(test[v]);
    a.pass = a.pass && m <= kTrendThreshold;
    per += format("%s%s %.4f", per.empty() ? "" : ", ", to_string(kAll[v]).c_str(), m);
  }
  a.detail = format("seed-mean test error <= %.2f: %s", kTrendThreshold, per.c_str());

  Outcome b;
  const double gap_ci = mean(gap[2]), gap_nonreg = mean(gap[1]);
  const double test_ci = mean(test[2]), test_md = mean(test[3]);
  b.pass = gap_ci < gap_nonreg && test_md <= test_ci && secs <= 900.0;
  b.detail = format("over %zu seeds: gap ci %.4f %s non-reg %.4f (reduction %.1f%%); test md %.4f %s ci %.4f; %.0f s",
                    std::size(kTrendSeeds), gap_ci, gap_ci < gap_nonreg ? "<" : ">=", gap_nonreg,
                    100.0 * gap_reduction(gap_ci, gap_nonreg), test_md, test_md <= test_ci ? "<=" : ">", test_ci,
                    secs);
  return {a, b};
}

// 8. Repeated runs write identical files.
Outcome determinism() {
  const fs::path dir = fs::temp_directory_path() / "vctc_acceptance_determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  SyntheticTaskSpec spec;
  spec.vocab_size = 5;
  spec.d_in = 8;
  spec.max_frames = 30;
  spec.max_target = 5;
  spec.seed = 7;
  const Dataset train_set = generate_dataset(spec, 40, 0);
  const Dataset dev = generate_dataset(spec, 20, 1);
  std::size_t compared = 0, differing = 0;
  for (Variant v : kAll) {
    std::string first[3];
    for (int rep = 0; rep < 2; ++rep) {
      const fs::path base = dir / (to_string(v) + "_" + std::to_string(rep));
      TrainConfig c;
      c.variant = v;
      c.seed = 3;
      c.d_z = 6;
      c.d_hidden = 12;
      c.batch_size = 8;
      c.steps = 30;
      c.lr_start = 1e-2;
      c.lr_end = 1e-3;
      c.log_every = 5;
      c.eval_every = 10;
      c.threads = rep == 0 ? 1 : 2;
      c.checkpoint_path = base.string() + ".ckpt";
      c.metrics_path = base.string() + ".csv";
      train(c, train_set, &dev, &dev);
      const LoadedModel m = load_model(c.checkpoint_path);
      DecodeOptions opts;
      opts.method = DecodeMethod::Beam;
      opts.beam.beam_width = 8;
      {
        std::ofstream os(base.string() + ".json");
        os << evaluate(m.config, m.params, dev, opts).to_json();
      }
      const std::string files[3] = {slurp(c.metrics_path), slurp(c.checkpoint_path), slurp(base.string() + ".json")};
      for (int k = 0; k < 3; ++k) {
        if (rep == 0) {
          first[k] = files[k];
        } else {
          ++compared;
          if (files[k] != first[k] || files[k].empty()) ++differing;
        }
      }
    }
  }
  fs::remove_all(dir);
  Outcome o;
  o.pass = differing == 0;
  o.detail = format("%zu/%zu metrics/checkpoint/evaluation file pairs differ across repeated runs (all variants, "
                    "1 vs 2 worker threads)",
                    differing, compared);
  return o;
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  report(1, "ctc-oracle-equivalence", ctc_oracle());
  report(2, "gradient-suite", gradient_suite());
  report(3, "kl-correctness", kl_correctness());
  report(4, "elbo-bound", elbo_bound());
  report(5, "degenerate-reductions", degenerate_reductions());
  report(6, "decoder-properties", decoder_properties());
  const auto [a, b] = trend_reproduction();
  Outcome trend;
  trend.pass = a.pass && b.pass;
  trend.detail = format("(a) %s %s; (b) %s %s", a.pass ? "pass" : "fail", a.detail.c_str(), b.pass ? "pass" : "fail",
                        b.detail.c_str());
  report(7, "trend-reproduction", trend);
  report(8, "determinism", determinism());
  std::printf("%d of 8 criteria failed (%.0f s)\n", failures, seconds_since(t0));
  return failures == 0 ? 0 : 1;
}
