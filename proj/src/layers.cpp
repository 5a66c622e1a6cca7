#include "vctc/layers.hpp"

#include <cmath>

#include "vctc/error.hpp"

namespace vctc {

Array init_weight(Rng& rng, std::size_t out, std::size_t fan_in) {
  Array w = Array::matrix(out, fan_in);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& v : w.data) v = (2.0 * rng.uniform() - 1.0) * bound;
  return w;
}

LinearLayer LinearLayer::create(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out,
                                Rng& rng) {
  detail::require(in > 0 && out > 0, "LinearLayer: zero dimension");
  LinearLayer l;
  l.weight = store.add(prefix + ".weight", init_weight(rng, out, in));
  l.bias = store.add(prefix + ".bias", Array({out}, 0.0));
  return l;
}

LinearLayer LinearLayer::bind(const ParamStore& store, const std::string& prefix) {
  return LinearLayer{store.get(prefix + ".weight"), store.get(prefix + ".bias")};
}

ad::Tensor linear_forward(const LinearLayer& layer, const ad::Tensor& x) {
  return ad::affine(x, layer.weight, layer.bias);
}

GruCell GruCell::create(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t hidden, Rng& rng) {
  GruCell c;
  c.input = LinearLayer::create(store, prefix + ".input", in, 3 * hidden, rng);
  c.hidden_gates = LinearLayer::create(store, prefix + ".hidden_gates", hidden, 2 * hidden, rng);
  c.hidden_cand = LinearLayer::create(store, prefix + ".hidden_cand", hidden, hidden, rng);
  return c;
}

GruCell GruCell::bind(const ParamStore& store, const std::string& prefix) {
  return GruCell{LinearLayer::bind(store, prefix + ".input"), LinearLayer::bind(store, prefix + ".hidden_gates"),
                 LinearLayer::bind(store, prefix + ".hidden_cand")};
}

ad::Tensor gru_sequence(const GruCell& cell, const ad::Tensor& xs, bool reverse) {
  const std::size_t steps = xs.rows();
  const std::size_t H = cell.hidden();
  detail::require(steps > 0, "gru: empty sequence");
  detail::require(xs.cols() == cell.input.in_dim(), "gru: input width mismatch");

  const ad::Tensor projected = linear_forward(cell.input, xs);  // T x 3H
  ad::Tensor h = ad::Tensor::constant(Array({1, H}, 0.0));
  std::vector<ad::Tensor> states(steps);
  for (std::size_t k = 0; k < steps; ++k) {
    const std::size_t t = reverse ? steps - 1 - k : k;
    const ad::Tensor xp = ad::row(projected, t);
    const ad::Tensor hg = linear_forward(cell.hidden_gates, h);
    const ad::Tensor r = ad::sigmoid(ad::add(ad::slice_cols(xp, 0, H), ad::slice_cols(hg, 0, H)));
    const ad::Tensor u = ad::sigmoid(ad::add(ad::slice_cols(xp, H, 2 * H), ad::slice_cols(hg, H, 2 * H)));
    const ad::Tensor n =
        ad::tanh(ad::add(ad::slice_cols(xp, 2 * H, 3 * H), linear_forward(cell.hidden_cand, ad::mul(r, h))));
    h = ad::add(n, ad::mul(u, ad::sub(h, n)));
    states[t] = h;
  }
  return ad::stack_rows(states);
}

BiGruLayer BiGruLayer::create(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t hidden,
                              Rng& rng) {
  return BiGruLayer{GruCell::create(store, prefix + ".fwd", in, hidden, rng),
                    GruCell::create(store, prefix + ".bwd", in, hidden, rng)};
}

BiGruLayer BiGruLayer::bind(const ParamStore& store, const std::string& prefix) {
  return BiGruLayer{GruCell::bind(store, prefix + ".fwd"), GruCell::bind(store, prefix + ".bwd")};
}

ad::Tensor bigru_forward(const BiGruLayer& layer, const ad::Tensor& xs) {
  const ad::Tensor parts[2] = {gru_sequence(layer.forward, xs, false), gru_sequence(layer.backward, xs, true)};
  return ad::concat_cols(parts);
}

std::vector<ad::Tensor> bigru_forward(const BiGruLayer& layer, const std::vector<ad::Tensor>& xs) {
  detail::require(!xs.empty(), "bigru_forward: empty sequence");
  std::vector<ad::Tensor> rows;
  rows.reserve(xs.size());
  for (const ad::Tensor& x : xs) {
    detail::require(x.cols() == xs[0].cols(), "bigru_forward: ragged feature dims");
    detail::require(x.rows() == 1, "bigru_forward: each step must be a single frame");
    rows.push_back(x);
  }
  const ad::Tensor out = bigru_forward(layer, ad::stack_rows(rows));
  std::vector<ad::Tensor> result;
  result.reserve(xs.size());
  for (std::size_t t = 0; t < xs.size(); ++t) result.push_back(ad::row(out, t));
  return result;
}

}  // namespace vctc
