#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vctc/error.hpp"
#include "vctc/evaluation.hpp"
#include "vctc/metrics.hpp"
#include "vctc/ngram_lm.hpp"
#include "vctc/oracles.hpp"
#include "vctc/synthetic.hpp"
#include "vctc/training.hpp"
#include "vctc/variational.hpp"

using namespace vctc;

namespace {

// Expands `--config FILE` into `--key=value` arguments placed ahead of the
// remaining ones, so that explicit flags win (every option keeps its last
// value). The file holds `key = value` lines; '#' starts a comment.
std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::vector<std::string> out;
  std::string path;
  std::vector<std::string> rest;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (path.empty()) return args;
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  // The subcommand name stays first.
  std::size_t sub_end = 0;
  if (!rest.empty() && rest[0].rfind("-", 0) != 0) sub_end = 1;
  out.assign(rest.begin(), rest.begin() + static_cast<long>(sub_end));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(path + ":" + std::to_string(line_no) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    for (char& c : key)
      if (c == '_') c = '-';
    out.push_back("--" + key + "=" + trim(line.substr(eq + 1)));
  }
  out.insert(out.end(), rest.begin() + static_cast<long>(sub_end), rest.end());
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path);
  os << text;
}

std::string join_tokens(const LabelSequence& seq, const Vocab& vocab) {
  std::string s;
  for (int k : seq) s += (s.empty() ? "" : " ") + vocab.symbol(k);
  return s;
}

struct DecodeFlags {
  std::string method = "best-path";
  std::size_t beam_width = 30;
  std::string lm_path;
  std::size_t lm_order = 4;
  double lm_weight = 0.5;
  double insertion_bonus = 0.0;
  std::size_t bucket_width = 4;

  void add(CLI::App* app) {
    app->add_option("--decoder", method, "best-path or beam")->check(CLI::IsMember({"best-path", "beam"}));
    app->add_option("--beam-width", beam_width, "Beam width");
    app->add_option("--lm", lm_path, "ARPA language model for beam search");
    app->add_option("--lm-order", lm_order, "Highest LM order used");
    app->add_option("--lm-weight", lm_weight, "LM weight");
    app->add_option("--insertion-bonus", insertion_bonus, "Per-token bonus");
    app->add_option("--bucket-width", bucket_width, "Target-length bucket width");
  }

  DecodeOptions options(NGramLm& lm_storage) const {
    DecodeOptions o;
    o.method = method == "beam" ? DecodeMethod::Beam : DecodeMethod::BestPath;
    o.beam = BeamConfig{beam_width, lm_order, lm_weight, insertion_bonus};
    o.bucket_width = bucket_width;
    if (!lm_path.empty()) {
      if (o.method != DecodeMethod::Beam) throw ConfigError("--lm needs --decoder beam");
      lm_storage = NGramLm::load(lm_path);
      o.lm = &lm_storage;
    }
    return o;
  }
};

int run_oracle_check(std::size_t instances, std::uint64_t seed) {
  Rng rng(seed, 1);
  bool ok = true;
  const auto ctc = oracle::check_ctc_against_enumeration(instances, 6, 3, 3, rng);
  const bool ctc_ok = ctc.max_abs_error <= 1e-9;
  std::printf("ctc-enumeration   %zu instances (%zu infeasible), max |dp - brute force| = %.3e  %s\n", ctc.instances,
              ctc.infeasible, ctc.max_abs_error, ctc_ok ? "PASS" : "FAIL");
  ok = ok && ctc_ok;

  double worst_quad = 0.0;
  for (std::size_t i = 0; i < 100; ++i) {
    const double mq = 2.0 * rng.normal(), lq = rng.normal(), mp = 2.0 * rng.normal(), lp = rng.normal();
    const auto mk = [](double m, double l) {
      return DiagGaussian{ad::Tensor::constant(Array({1}, m)), ad::Tensor::constant(Array({1}, l))};
    };
    const double closed = kl_diag_gauss(mk(mq, lq), mk(mp, lp)).item();
    worst_quad = std::max(worst_quad, std::abs(closed - oracle::kl_quadrature_1d(mq, lq, mp, lp)));
  }
  const bool quad_ok = worst_quad <= 1e-6;
  std::printf("kl-quadrature     100 instances, max |closed form - Gauss-Hermite| = %.3e  %s\n", worst_quad,
              quad_ok ? "PASS" : "FAIL");
  ok = ok && quad_ok;

  double worst_z = 0.0;
  for (std::size_t d = 1; d <= 8; ++d) {
    std::vector<double> mq(d), lq(d), mp(d), lp(d);
    for (std::size_t k = 0; k < d; ++k) {
      mq[k] = rng.normal();
      lq[k] = 0.5 * rng.normal();
      mp[k] = rng.normal();
      lp[k] = 0.5 * rng.normal();
    }
    const DiagGaussian q{ad::Tensor::constant(Array({d}, mq)), ad::Tensor::constant(Array({d}, lq))};
    const DiagGaussian p{ad::Tensor::constant(Array({d}, mp)), ad::Tensor::constant(Array({d}, lp))};
    const double closed = kl_diag_gauss(q, p).item();
    const auto mc = oracle::kl_monte_carlo(mq, lq, mp, lp, 200000, rng);
    worst_z = std::max(worst_z, std::abs(closed - mc.mean) / mc.std_error);
  }
  const bool mc_ok = worst_z <= 3.0;
  std::printf("kl-monte-carlo    D_z = 1..8, max |closed form - MC| / stderr = %.3f  %s\n", worst_z,
              mc_ok ? "PASS" : "FAIL");
  ok = ok && mc_ok;
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Variational CTC toolkit: synthetic data, training, decoding and evaluation", "vctc"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);

  // generate
  SyntheticTaskSpec spec;
  std::size_t gen_count = 500;
  std::uint64_t gen_split = 0;
  double gen_noise = -1.0, gen_shift = -1.0;
  std::string gen_out;
  auto* gen = app.add_subcommand("generate", "Write a synthetic dataset");
  gen->add_option("--out", gen_out, "Output dataset file")->required();
  gen->add_option("--count", gen_count, "Number of utterances");
  gen->add_option("--split", gen_split, "Split id (train 0, dev 1, test 2, ...)");
  gen->add_option("--vocab-size", spec.vocab_size);
  gen->add_option("--min-segment", spec.min_segment);
  gen->add_option("--max-segment", spec.max_segment);
  gen->add_option("--min-target", spec.min_target);
  gen->add_option("--max-target", spec.max_target);
  gen->add_option("--max-frames", spec.max_frames);
  gen->add_option("--noise", spec.noise_std, "Frame noise stddev");
  gen->add_option("--utterance-shift", spec.utterance_shift_std, "Per-utterance offset stddev");
  gen->add_option("--silence-prob", spec.silence_prob);
  gen->add_option("--embedding-scale", spec.embedding_scale);
  gen->add_option("--d-in", spec.d_in);
  gen->add_option("--successors", spec.successors);
  gen->add_option("--seed", spec.seed, "Task seed (embeddings, grammar, samples)");
  gen->add_option("--split-noise", gen_noise, "Noise stddev for this split only");
  gen->add_option("--split-shift", gen_shift, "Utterance shift stddev for this split only");

  // train
  TrainConfig tc;
  std::string variant_name = "ci", schedule_name = "geometric", loss_name;
  std::string train_path, dev_path, test_path;
  auto* tr = app.add_subcommand("train", "Train a model; accepts --config FILE with key = value lines");
  tr->add_option("--train", train_path, "Training dataset")->required();
  tr->add_option("--dev", dev_path, "Dev dataset");
  tr->add_option("--test", test_path, "Test dataset");
  tr->add_option("--variant", variant_name, "linear-ctc, non-reg-ctc, ci, md, ma");
  tr->add_option("--loss", loss_name, "ctc, ci or markov; must match the variant");
  tr->add_option("--d-z", tc.d_z);
  tr->add_option("--d-hidden", tc.d_hidden);
  tr->add_option("--gru-hidden", tc.gru_hidden, "0: ceil(d_z / 2)");
  tr->add_option("--batch-size", tc.batch_size);
  tr->add_option("--steps", tc.steps);
  tr->add_option("--lr-start", tc.lr_start);
  tr->add_option("--lr-end", tc.lr_end);
  tr->add_option("--schedule", schedule_name, "geometric or linear");
  tr->add_option("--adam-beta1", tc.adam_beta1);
  tr->add_option("--adam-beta2", tc.adam_beta2);
  tr->add_option("--adam-eps", tc.adam_eps);
  tr->add_option("--grad-clip", tc.grad_clip, "Global gradient-norm clip, 0 disables");
  tr->add_option("--kl-weight", tc.kl_weight);
  tr->add_option("--kl-warmup-steps", tc.kl_warmup_steps);
  tr->add_option("--kl-samples", tc.kl_samples);
  tr->add_option("--seed", tc.seed);
  tr->add_option("--log-every", tc.log_every);
  tr->add_option("--eval-every", tc.eval_every);
  tr->add_option("--checkpoint-every", tc.checkpoint_every, "0: final step only");
  tr->add_option("--checkpoint", tc.checkpoint_path);
  tr->add_option("--metrics", tc.metrics_path);
  tr->add_option("--summary", tc.summary_path);
  tr->add_option("--dump", tc.dump_path, "Diagnostic file written on divergence");
  tr->add_flag("--record-wall-clock", tc.record_wall_clock, "Add a wall-clock column to the metrics");
  tr->add_option("--threads", tc.threads, "0: hardware concurrency");
  tr->add_flag("--resume", tc.resume, "Continue from --checkpoint if it exists");
  tr->add_option("--stop-at", tc.stop_at, "Stop after this many completed steps (0: run to --steps)");

  // evaluate
  std::string eval_ckpt, eval_data, eval_out;
  DecodeFlags eval_flags;
  auto* ev = app.add_subcommand("evaluate", "Decode a dataset and report token error rates");
  ev->add_option("--checkpoint", eval_ckpt)->required();
  ev->add_option("--data", eval_data)->required();
  ev->add_option("--out", eval_out, "JSON report path (stdout by default)");
  eval_flags.add(ev);

  // decode
  std::string dec_ckpt, dec_data, dec_out;
  bool dec_frames = false;
  DecodeFlags dec_flags;
  auto* dc = app.add_subcommand("decode", "Print hypotheses, one utterance per line");
  dc->add_option("--checkpoint", dec_ckpt)->required();
  dc->add_option("--data", dec_data)->required();
  dc->add_option("--out", dec_out, "Output path (stdout by default)");
  dc->add_flag("--emission-frames", dec_frames, "Append the frame of each emitted token");
  dec_flags.add(dc);

  // train-lm
  std::string lm_data, lm_out;
  std::size_t lm_order = 3;
  double lm_discount = 0.5;
  auto* tl = app.add_subcommand("train-lm", "Estimate an ARPA n-gram model from dataset labels");
  tl->add_option("--data", lm_data)->required();
  tl->add_option("--out", lm_out)->required();
  tl->add_option("--order", lm_order);
  tl->add_option("--discount", lm_discount, "Absolute discount in (0, 1)");

  // oracle-check
  std::size_t oracle_instances = 1000;
  std::uint64_t oracle_seed = 1;
  auto* oc = app.add_subcommand("oracle-check", "Cross-check CTC and KL against brute-force references");
  oc->add_option("--instances", oracle_instances, "Random CTC instances");
  oc->add_option("--seed", oracle_seed);

  // report
  std::vector<std::string> report_files;
  std::string report_out;
  bool report_json = false;
  auto* rp = app.add_subcommand("report", "Dev-test gap summary of training runs");
  rp->add_option("metrics", report_files, "Metrics files")->required();
  rp->add_flag("--json", report_json, "Emit JSON");
  rp->add_option("--out", report_out, "Output path (stdout by default)");

  try {
    std::vector<std::string> args = expand_config(argc, argv);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (*gen) {
      generate_dataset(spec, gen_count, gen_split, gen_noise, gen_shift).save(gen_out);
    } else if (*tr) {
      tc.variant = parse_variant(variant_name);
      tc.schedule = parse_schedule(schedule_name);
      if (!loss_name.empty()) {
        if (loss_name == "ctc") tc.loss = LossKind::Ctc;
        else if (loss_name == "ci") tc.loss = LossKind::ConditionalIndependence;
        else if (loss_name == "markov") tc.loss = LossKind::Markov;
        else throw ConfigError("unknown loss '" + loss_name + "' (ctc, ci, markov)");
      }
      const Dataset train_set = Dataset::load(train_path);
      Dataset dev, test;
      if (!dev_path.empty()) dev = Dataset::load(dev_path);
      if (!test_path.empty()) test = Dataset::load(test_path);
      const TrainResult r = train(tc, train_set, dev_path.empty() ? nullptr : &dev, test_path.empty() ? nullptr : &test);
      if (!r.records.empty()) {
        const MetricsRecord& m = r.records.back();
        std::fprintf(stderr, "step %zu  total %.6g  prediction %.6g  regularization %.6g", m.step, m.total,
                     m.prediction, m.regularization);
        if (!std::isnan(m.dev_error_rate)) std::fprintf(stderr, "  dev %.4f", m.dev_error_rate);
        if (!std::isnan(m.test_error_rate)) std::fprintf(stderr, "  test %.4f", m.test_error_rate);
        std::fprintf(stderr, "\n");
      }
    } else if (*ev) {
      const LoadedModel model = load_model(eval_ckpt);
      NGramLm lm;
      const DecodeOptions opts = eval_flags.options(lm);
      const EvalReport rep = evaluate(model.config, model.params, Dataset::load(eval_data), opts);
      write_text(eval_out, rep.to_json() + "\n");
    } else if (*dc) {
      const LoadedModel model = load_model(dec_ckpt);
      NGramLm lm;
      const DecodeOptions opts = dec_flags.options(lm);
      const Dataset data = Dataset::load(dec_data);
      if (!(data.vocab == model.config.vocab)) throw ConfigError("dataset vocabulary differs from the model's");
      std::ostringstream os;
      for (std::size_t i = 0; i < data.size(); ++i) {
        const DecodeResult r =
            decode(model_posteriors(model.config, model.params, data.items[i].features), opts, model.config.vocab);
        os << i << '\t' << join_tokens(r.tokens, model.config.vocab) << '\t'
           << join_tokens(data.items[i].labels, model.config.vocab);
        if (dec_frames) {
          os << '\t';
          for (std::size_t k = 0; k < r.emission_frames.size(); ++k) os << (k ? " " : "") << r.emission_frames[k];
        }
        os << '\n';
      }
      write_text(dec_out, os.str());
    } else if (*tl) {
      const Dataset data = Dataset::load(lm_data);
      std::vector<std::vector<std::string>> sentences;
      for (const auto& u : data.items) {
        std::vector<std::string> s;
        for (int k : u.labels) s.push_back(data.vocab.symbol(k));
        sentences.push_back(std::move(s));
      }
      NGramLm::train(sentences, lm_order, lm_discount, data.vocab.symbols()).save(lm_out);
    } else if (*oc) {
      return run_oracle_check(oracle_instances, oracle_seed);
    } else if (*rp) {
      const GapSummary s = convergence_report(report_files);
      write_text(report_out, report_json ? s.to_json() + "\n" : s.to_text());
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
