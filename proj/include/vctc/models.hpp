#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>

#include "vctc/ctc.hpp"
#include "vctc/layers.hpp"
#include "vctc/losses.hpp"
#include "vctc/param_store.hpp"
#include "vctc/variational.hpp"

namespace vctc {

enum class Variant { LinearCtc, NonRegCtc, CI, MD, MA };

std::string to_string(Variant v);
Variant parse_variant(const std::string& s);

enum class LossKind { Ctc, ConditionalIndependence, Markov };
LossKind loss_for(Variant v);

struct ModelConfig {
  std::size_t d_in = 32;
  std::size_t d_z = 32;
  std::size_t d_hidden = 64;
  // Per-direction GRU width of the MA prior networks; 0 means ceil(d_z / 2).
  std::size_t gru_hidden = 0;
  Vocab vocab;
  Variant variant = Variant::CI;

  std::size_t effective_gru_hidden() const { return gru_hidden ? gru_hidden : (d_z + 1) / 2; }
  void validate() const;

  // Round trip through checkpoint metadata.
  void to_metadata(std::map<std::string, std::string>& meta) const;
  static ModelConfig from_metadata(const std::map<std::string, std::string>& meta);
};

// Whether latents are drawn from q (training) or fixed at its mean.
enum class LatentMode { Sample, Mean };

struct ForwardOutput {
  ad::Tensor log_probs;               // T x (|V| + 1), row-normalized
  std::optional<DiagGaussian> q;      // posterior, one row per frame
  std::optional<DiagGaussian> prior;  // per-frame prior parameters
  std::optional<PriorChain> chain;    // Markov prior chain (MD, MA)
  std::optional<ad::Tensor> z;        // latent sequence used by the head

  FrameLogProbs frame_log_probs() const { return FrameLogProbs(log_probs.value()); }
};

// Creates and initializes every parameter of the configured variant; the
// config is recorded in the store's metadata.
ParamStore init_params(const ModelConfig& cfg, Rng& rng);

ForwardOutput forward_linear_ctc(const ModelConfig& cfg, const ParamStore& params, const Array& x);
// Also used by NonRegCtc, which differs only in its loss.
ForwardOutput forward_ci(const ModelConfig& cfg, const ParamStore& params, const Array& x, Rng& rng,
                         LatentMode mode = LatentMode::Sample);
ForwardOutput forward_md(const ModelConfig& cfg, const ParamStore& params, const Array& x, Rng& rng,
                         LatentMode mode = LatentMode::Sample);
ForwardOutput forward_ma(const ModelConfig& cfg, const ParamStore& params, const Array& x, Rng& rng,
                         LatentMode mode = LatentMode::Sample);

ForwardOutput forward(const ModelConfig& cfg, const ParamStore& params, const Array& x, Rng& rng,
                      LatentMode mode = LatentMode::Sample);

// The loss the variant trains with.
LossBreakdown model_loss(const ModelConfig& cfg, const ForwardOutput& out, const LabelSequence& y, Rng& rng,
                         double kl_weight = 1.0, std::size_t kl_samples = 1);

}  // namespace vctc
