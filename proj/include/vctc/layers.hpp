#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "vctc/autodiff.hpp"
#include "vctc/param_store.hpp"

namespace vctc {

// Uniform in +-1/sqrt(fan_in).
Array init_weight(Rng& rng, std::size_t out, std::size_t fan_in);

// Fully-connected layer, y = W x + b. Parameters live in a ParamStore under
// "<prefix>.weight" (out x in) and "<prefix>.bias" (out).
struct LinearLayer {
  ad::Tensor weight;
  ad::Tensor bias;

  std::size_t in_dim() const { return weight.cols(); }
  std::size_t out_dim() const { return weight.rows(); }

  static LinearLayer create(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng);
  static LinearLayer bind(const ParamStore& store, const std::string& prefix);
};

ad::Tensor linear_forward(const LinearLayer& layer, const ad::Tensor& x);

// Gated recurrent unit, one direction:
//   r = sigmoid(W_ir x + b_ir + W_hr h + b_hr)
//   u = sigmoid(W_iu x + b_iu + W_hu h + b_hu)
//   n = tanh(W_in x + b_in + W_hn (r * h) + b_hn)
//   h' = (1 - u) * n + u * h
// The input projection is stacked [r; u; n] in one (3H x in) matrix.
struct GruCell {
  LinearLayer input;         // in -> 3H
  LinearLayer hidden_gates;  // H -> 2H (r, u)
  LinearLayer hidden_cand;   // H -> H

  std::size_t hidden() const { return hidden_cand.out_dim(); }

  static GruCell create(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t hidden, Rng& rng);
  static GruCell bind(const ParamStore& store, const std::string& prefix);
};

// Runs the cell over every row of xs (T x in), in reverse when asked. Row t
// of the result is the state after consuming x_t.
ad::Tensor gru_sequence(const GruCell& cell, const ad::Tensor& xs, bool reverse);

struct BiGruLayer {
  GruCell forward;
  GruCell backward;

  std::size_t hidden() const { return forward.hidden(); }
  std::size_t out_dim() const { return 2 * hidden(); }

  static BiGruLayer create(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t hidden, Rng& rng);
  static BiGruLayer bind(const ParamStore& store, const std::string& prefix);
};

// Output row t is [forward state from x_1..x_t, backward state from x_T..x_t].
ad::Tensor bigru_forward(const BiGruLayer& layer, const ad::Tensor& xs);
std::vector<ad::Tensor> bigru_forward(const BiGruLayer& layer, const std::vector<ad::Tensor>& xs);

}  // namespace vctc
