#include "vctc/models.hpp"

#include <sstream>
#include <vector>

#include "vctc/error.hpp"

namespace vctc {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::LinearCtc: return "linear-ctc";
    case Variant::NonRegCtc: return "non-reg-ctc";
    case Variant::CI: return "ci";
    case Variant::MD: return "md";
    case Variant::MA: return "ma";
  }
  return "?";
}

Variant parse_variant(const std::string& s) {
  for (Variant v : {Variant::LinearCtc, Variant::NonRegCtc, Variant::CI, Variant::MD, Variant::MA}) {
    if (to_string(v) == s) return v;
  }
  throw ConfigError("unknown model variant '" + s + "'");
}

LossKind loss_for(Variant v) {
  switch (v) {
    case Variant::LinearCtc:
    case Variant::NonRegCtc: return LossKind::Ctc;
    case Variant::CI: return LossKind::ConditionalIndependence;
    case Variant::MD:
    case Variant::MA: return LossKind::Markov;
  }
  return LossKind::Ctc;
}

void ModelConfig::validate() const {
  if (d_in == 0 || d_z == 0 || d_hidden == 0) throw ConfigError("model dimensions must be positive");
  if (vocab.symbol_count() == 0) throw ConfigError("model vocabulary is empty");
}

void ModelConfig::to_metadata(std::map<std::string, std::string>& meta) const {
  meta["model.variant"] = to_string(variant);
  meta["model.d_in"] = std::to_string(d_in);
  meta["model.d_z"] = std::to_string(d_z);
  meta["model.d_hidden"] = std::to_string(d_hidden);
  meta["model.gru_hidden"] = std::to_string(gru_hidden);
  std::string syms;
  for (const auto& s : vocab.symbols()) syms += (syms.empty() ? "" : " ") + s;
  meta["model.vocab"] = syms;
}

ModelConfig ModelConfig::from_metadata(const std::map<std::string, std::string>& meta) {
  auto field = [&](const char* key) -> const std::string& {
    auto it = meta.find(key);
    if (it == meta.end()) throw FormatError(std::string("checkpoint metadata lacks ") + key);
    return it->second;
  };
  ModelConfig cfg;
  cfg.variant = parse_variant(field("model.variant"));
  cfg.d_in = std::stoul(field("model.d_in"));
  cfg.d_z = std::stoul(field("model.d_z"));
  cfg.d_hidden = std::stoul(field("model.d_hidden"));
  cfg.gru_hidden = std::stoul(field("model.gru_hidden"));
  std::istringstream ss(field("model.vocab"));
  std::vector<std::string> syms;
  for (std::string s; ss >> s;) syms.push_back(s);
  cfg.vocab = Vocab(std::move(syms));
  cfg.validate();
  return cfg;
}

ParamStore init_params(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  ParamStore store;
  cfg.to_metadata(store.metadata);
  const std::size_t K = cfg.vocab.class_count();
  if (cfg.variant == Variant::LinearCtc) {
    LinearLayer::create(store, "head", cfg.d_in, K, rng);
    return store;
  }
  LinearLayer::create(store, "posterior.mu", cfg.d_in, cfg.d_z, rng);
  LinearLayer::create(store, "posterior.log_var", cfg.d_in, cfg.d_z, rng);
  switch (cfg.variant) {
    case Variant::NonRegCtc:
    case Variant::CI:
      LinearLayer::create(store, "prior.mu", cfg.d_in, cfg.d_z, rng);
      LinearLayer::create(store, "prior.log_var", cfg.d_in, cfg.d_z, rng);
      break;
    case Variant::MD:
      LinearLayer::create(store, "prior.mu", cfg.d_in + 2 * cfg.d_z, cfg.d_z, rng);
      LinearLayer::create(store, "prior.log_var", cfg.d_in + 2 * cfg.d_z, cfg.d_z, rng);
      store.add("prior.init_mu", Array({cfg.d_z}, 0.0));
      store.add("prior.init_log_var", Array({cfg.d_z}, 0.0));
      break;
    case Variant::MA: {
      const std::size_t h = cfg.effective_gru_hidden();
      BiGruLayer::create(store, "prior.mu_rnn", cfg.d_in, h, rng);
      BiGruLayer::create(store, "prior.log_var_rnn", cfg.d_in, h, rng);
      LinearLayer::create(store, "prior.mu", 2 * h, cfg.d_z, rng);
      LinearLayer::create(store, "prior.log_var", 2 * h, cfg.d_z, rng);
      break;
    }
    case Variant::LinearCtc: break;
  }
  LinearLayer::create(store, "latent_proj", cfg.d_z, cfg.d_hidden, rng);
  LinearLayer::create(store, "head", cfg.d_in + cfg.d_hidden, K, rng);
  return store;
}

namespace {

ad::Tensor input_tensor(const ModelConfig& cfg, const Array& x) {
  detail::require(x.shape.size() == 2 && x.cols() == cfg.d_in, "model: input must be T x d_in");
  detail::require(x.rows() > 0, "model: empty input sequence");
  return ad::Tensor::constant(x);
}

DiagGaussian posterior(const ParamStore& params, const ad::Tensor& xs) {
  return {linear_forward(LinearLayer::bind(params, "posterior.mu"), xs),
          clamp_log_var(linear_forward(LinearLayer::bind(params, "posterior.log_var"), xs))};
}

// Latent sample -> linear projection -> concat with x -> class scores.
void latent_head(const ParamStore& params, const ad::Tensor& xs, const DiagGaussian& q, Rng& rng, LatentMode mode,
                 ForwardOutput& out) {
  const ad::Tensor z = mode == LatentMode::Sample ? reparameterize(q, rng) : q.mu;
  const ad::Tensor h = linear_forward(LinearLayer::bind(params, "latent_proj"), z);
  const ad::Tensor parts[2] = {xs, h};
  const ad::Tensor logits = linear_forward(LinearLayer::bind(params, "head"), ad::concat_cols(parts));
  out.log_probs = ad::log_softmax(logits);
  out.z = z;
  out.q = q;
}

}  // namespace

ForwardOutput forward_linear_ctc(const ModelConfig& cfg, const ParamStore& params, const Array& x) {
  const ad::Tensor xs = input_tensor(cfg, x);
  ForwardOutput out;
  out.log_probs = ad::log_softmax(linear_forward(LinearLayer::bind(params, "head"), xs));
  return out;
}

ForwardOutput forward_ci(const ModelConfig& cfg, const ParamStore& params, const Array& x, Rng& rng,
                         LatentMode mode) {
  const ad::Tensor xs = input_tensor(cfg, x);
  ForwardOutput out;
  latent_head(params, xs, posterior(params, xs), rng, mode, out);
  out.prior = DiagGaussian{linear_forward(LinearLayer::bind(params, "prior.mu"), xs),
                           clamp_log_var(linear_forward(LinearLayer::bind(params, "prior.log_var"), xs))};
  return out;
}

ForwardOutput forward_md(const ModelConfig& cfg, const ParamStore& params, const Array& x, Rng& rng,
                         LatentMode mode) {
  const ad::Tensor xs = input_tensor(cfg, x);
  ForwardOutput out;
  latent_head(params, xs, posterior(params, xs), rng, mode, out);

  const LinearLayer mu_fc = LinearLayer::bind(params, "prior.mu");
  const LinearLayer lv_fc = LinearLayer::bind(params, "prior.log_var");
  ad::Tensor mu_prev = params.get("prior.init_mu");
  ad::Tensor lv_prev = params.get("prior.init_log_var");
  const std::size_t T = xs.rows();
  std::vector<ad::Tensor> mus, lvs;
  mus.reserve(T);
  lvs.reserve(T);
  for (std::size_t t = 0; t < T; ++t) {
    const ad::Tensor parts[3] = {ad::row(xs, t), mu_prev, lv_prev};
    const ad::Tensor in = ad::concat_cols(parts);
    mu_prev = linear_forward(mu_fc, in);
    lv_prev = clamp_log_var(linear_forward(lv_fc, in));
    mus.push_back(mu_prev);
    lvs.push_back(lv_prev);
  }
  out.prior = DiagGaussian{ad::stack_rows(mus), ad::stack_rows(lvs)};
  out.chain = PriorChain::from_fixed(*out.prior);
  return out;
}

ForwardOutput forward_ma(const ModelConfig& cfg, const ParamStore& params, const Array& x, Rng& rng,
                         LatentMode mode) {
  const ad::Tensor xs = input_tensor(cfg, x);
  ForwardOutput out;
  latent_head(params, xs, posterior(params, xs), rng, mode, out);
  const ad::Tensor mu_states = bigru_forward(BiGruLayer::bind(params, "prior.mu_rnn"), xs);
  const ad::Tensor lv_states = bigru_forward(BiGruLayer::bind(params, "prior.log_var_rnn"), xs);
  out.prior = DiagGaussian{linear_forward(LinearLayer::bind(params, "prior.mu"), mu_states),
                           clamp_log_var(linear_forward(LinearLayer::bind(params, "prior.log_var"), lv_states))};
  out.chain = PriorChain::from_fixed(*out.prior);
  return out;
}

ForwardOutput forward(const ModelConfig& cfg, const ParamStore& params, const Array& x, Rng& rng, LatentMode mode) {
  switch (cfg.variant) {
    case Variant::LinearCtc: return forward_linear_ctc(cfg, params, x);
    case Variant::NonRegCtc:
    case Variant::CI: return forward_ci(cfg, params, x, rng, mode);
    case Variant::MD: return forward_md(cfg, params, x, rng, mode);
    case Variant::MA: return forward_ma(cfg, params, x, rng, mode);
  }
  throw ContractError("forward: unknown variant");
}

LossBreakdown model_loss(const ModelConfig& cfg, const ForwardOutput& out, const LabelSequence& y, Rng& rng,
                         double kl_weight, std::size_t kl_samples) {
  switch (loss_for(cfg.variant)) {
    case LossKind::Ctc: return loss_ctc(out.log_probs, y);
    case LossKind::ConditionalIndependence:
      detail::require(out.q && out.prior, "model_loss: forward output lacks latent distributions");
      return loss_ci(out.log_probs, y, *out.q, *out.prior, kl_weight);
    case LossKind::Markov:
      detail::require(out.q && out.chain, "model_loss: forward output lacks a prior chain");
      return loss_markov(out.log_probs, y, *out.q, *out.chain, rng, kl_samples, kl_weight);
  }
  throw ContractError("model_loss: unknown loss");
}

}  // namespace vctc
