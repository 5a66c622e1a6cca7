#include <gtest/gtest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "vctc/error.hpp"
#include "vctc/models.hpp"

using namespace vctc;
using vctc::testing::gradient_error;
using vctc::testing::random_array;

namespace {

ModelConfig tiny(Variant v, std::size_t d_in = 3, std::size_t d_z = 2, std::size_t d_hidden = 3) {
  ModelConfig c;
  c.d_in = d_in;
  c.d_z = d_z;
  c.d_hidden = d_hidden;
  c.vocab = Vocab::numbered(2);
  c.variant = v;
  return c;
}

const Variant kAll[] = {Variant::LinearCtc, Variant::NonRegCtc, Variant::CI, Variant::MD, Variant::MA};
const Variant kLatent[] = {Variant::CI, Variant::MD, Variant::MA};

std::vector<ad::Tensor> leaves(const ParamStore& store) {
  std::vector<ad::Tensor> out;
  for (const auto& [name, e] : store.entries())
    if (e.trainable) out.push_back(e.tensor);
  return out;
}

}  // namespace

TEST(Variant, NamesRoundTripAndLossPairing) {
  for (Variant v : kAll) EXPECT_EQ(parse_variant(to_string(v)), v);
  EXPECT_THROW(parse_variant("rnn-t"), ConfigError);
  EXPECT_EQ(loss_for(Variant::LinearCtc), LossKind::Ctc);
  EXPECT_EQ(loss_for(Variant::NonRegCtc), LossKind::Ctc);
  EXPECT_EQ(loss_for(Variant::CI), LossKind::ConditionalIndependence);
  EXPECT_EQ(loss_for(Variant::MD), LossKind::Markov);
  EXPECT_EQ(loss_for(Variant::MA), LossKind::Markov);
}

TEST(ModelConfig, ValidationAndMetadataRoundTrip) {
  ModelConfig c = tiny(Variant::MA);
  c.gru_hidden = 5;
  std::map<std::string, std::string> meta;
  c.to_metadata(meta);
  const ModelConfig r = ModelConfig::from_metadata(meta);
  EXPECT_EQ(r.variant, c.variant);
  EXPECT_EQ(r.d_in, c.d_in);
  EXPECT_EQ(r.d_z, c.d_z);
  EXPECT_EQ(r.d_hidden, c.d_hidden);
  EXPECT_EQ(r.gru_hidden, 5u);
  EXPECT_EQ(r.vocab, c.vocab);
  c.d_z = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  meta.erase("model.d_z");
  EXPECT_THROW(ModelConfig::from_metadata(meta), FormatError);
}

TEST(Models, DefaultGruWidthIsHalfLatent) {
  ModelConfig c = tiny(Variant::MA, 3, 5);
  EXPECT_EQ(c.effective_gru_hidden(), 3u);
  c.d_z = 32;
  EXPECT_EQ(c.effective_gru_hidden(), 16u);
}

TEST(LinearCtc, ZeroWeightsGiveUniformPosteriors) {
  const ModelConfig c = tiny(Variant::LinearCtc);
  Rng rng(1, 0);
  ParamStore p = init_params(c, rng);
  for (double& v : p.get("head.weight").node()->value.data) v = 0.0;
  const auto out = forward_linear_ctc(c, p, random_array(rng, {4, 3}));
  for (double v : out.log_probs.value().data) EXPECT_NEAR(v, -std::log(3.0), 1e-15);
  EXPECT_FALSE(out.q.has_value());
  EXPECT_FALSE(out.prior.has_value());
}

TEST(Models, SingleFrameGivesSingleRow) {
  for (Variant v : kAll) {
    const ModelConfig c = tiny(v);
    Rng rng(2, 0);
    const ParamStore p = init_params(c, rng);
    const auto out = forward(c, p, random_array(rng, {1, 3}), rng);
    EXPECT_EQ(out.log_probs.shape(), (std::vector<std::size_t>{1, 3})) << to_string(v);
  }
}

TEST(Models, RowsAreNormalized) {
  for (Variant v : kAll) {
    const ModelConfig c = tiny(v, 4, 3, 5);
    Rng rng(3, 0);
    const ParamStore p = init_params(c, rng);
    const auto out = forward(c, p, random_array(rng, {7, 4}, 3.0), rng);
    EXPECT_LE(out.frame_log_probs().max_normalization_error(), 1e-9) << to_string(v);
  }
}

TEST(Models, ShapeMismatchIsContractError) {
  for (Variant v : kAll) {
    const ModelConfig c = tiny(v);
    Rng rng(4, 0);
    const ParamStore p = init_params(c, rng);
    EXPECT_THROW(forward(c, p, Array({3, 4}, 0.0), rng), ContractError) << to_string(v);
    EXPECT_THROW(forward(c, p, Array({0, 3}), rng), ContractError) << to_string(v);
  }
}

TEST(Models, LatentVariantsPopulateDistributions) {
  for (Variant v : kLatent) {
    const ModelConfig c = tiny(v);
    Rng rng(5, 0);
    const ParamStore p = init_params(c, rng);
    const auto out = forward(c, p, random_array(rng, {4, 3}), rng);
    ASSERT_TRUE(out.q.has_value());
    ASSERT_TRUE(out.prior.has_value());
    ASSERT_TRUE(out.z.has_value());
    EXPECT_EQ(out.q->rows(), 4u);
    EXPECT_EQ(out.prior->rows(), 4u);
    EXPECT_EQ(out.z->shape(), (std::vector<std::size_t>{4, 2}));
    EXPECT_EQ(out.chain.has_value(), v != Variant::CI);
  }
}

TEST(Models, FixedSeedGivesIdenticalOutputs) {
  for (Variant v : kLatent) {
    const ModelConfig c = tiny(v);
    Rng init(6, 0);
    const ParamStore p = init_params(c, init);
    const Array x = random_array(init, {5, 3});
    Rng a(7, 0), b(7, 0), other(8, 0);
    const auto o1 = forward(c, p, x, a);
    const auto o2 = forward(c, p, x, b);
    const auto o3 = forward(c, p, x, other);
    EXPECT_EQ(o1.z->value(), o2.z->value());
    EXPECT_EQ(o1.log_probs.value(), o2.log_probs.value());
    EXPECT_NE(o1.z->value(), o3.z->value());
  }
}

TEST(Models, MeanModeIsDeterministicAndUsesPosteriorMean) {
  for (Variant v : kLatent) {
    const ModelConfig c = tiny(v);
    Rng init(9, 0);
    const ParamStore p = init_params(c, init);
    const Array x = random_array(init, {5, 3});
    Rng a(1, 0), b(2, 0);
    const auto o1 = forward(c, p, x, a, LatentMode::Mean);
    const auto o2 = forward(c, p, x, b, LatentMode::Mean);
    EXPECT_EQ(o1.log_probs.value(), o2.log_probs.value());
    EXPECT_EQ(o1.z->value(), o1.q->mu.value());
    EXPECT_EQ(a.counter(), 0u);
  }
}

TEST(Models, CiAndNonRegShareParameterCount) {
  Rng a(10, 0), b(10, 0);
  const ParamStore ci = init_params(tiny(Variant::CI), a);
  const ParamStore nr = init_params(tiny(Variant::NonRegCtc), b);
  EXPECT_EQ(ci.scalar_count(), nr.scalar_count());
  EXPECT_EQ(ci.names(), nr.names());
}

TEST(Models, TiedPosteriorAndPriorReduceToCtc) {
  const ModelConfig c = tiny(Variant::CI);
  Rng rng(11, 0);
  ParamStore p = init_params(c, rng);
  for (const char* part : {"mu", "log_var"}) {
    for (const char* field : {"weight", "bias"}) {
      const std::string post = std::string("posterior.") + part + "." + field;
      const std::string prior = std::string("prior.") + part + "." + field;
      p.get(prior).node()->value = p.get(post).value();
    }
  }
  const Array x = random_array(rng, {5, 3});
  Rng r(12, 0);
  const auto out = forward(c, p, x, r);
  Rng r2(13, 0);
  const auto l = model_loss(c, out, {0, 1}, r2);
  EXPECT_EQ(l.total_value(), loss_ctc(out.log_probs, {0, 1}).total_value());
}

TEST(Md, FirstPriorUsesInitialState) {
  const ModelConfig c = tiny(Variant::MD);
  Rng rng(14, 0);
  ParamStore p = init_params(c, rng);
  p.get("prior.init_mu").node()->value = random_array(rng, {2});
  p.get("prior.init_log_var").node()->value = random_array(rng, {2});
  const Array x = random_array(rng, {3, 3});
  const auto out = forward_md(c, p, x, rng);
  const Array& w = p.get("prior.mu.weight").value();
  const Array& b = p.get("prior.mu.bias").value();
  const Array& m0 = p.get("prior.init_mu").value();
  const Array& l0 = p.get("prior.init_log_var").value();
  for (std::size_t j = 0; j < 2; ++j) {
    double v = b[j];
    for (std::size_t i = 0; i < 3; ++i) v += w(j, i) * x(0, i);
    for (std::size_t i = 0; i < 2; ++i) v += w(j, 3 + i) * m0[i] + w(j, 5 + i) * l0[i];
    EXPECT_NEAR(out.prior->mu.value()(0, j), v, 1e-14);
  }
}

TEST(Md, InitialStateStartsAtZero) {
  Rng rng(15, 0);
  const ParamStore p = init_params(tiny(Variant::MD), rng);
  for (double v : p.get("prior.init_mu").value().data) EXPECT_EQ(v, 0.0);
  for (double v : p.get("prior.init_log_var").value().data) EXPECT_EQ(v, 0.0);
}

TEST(Md, ConstantInputsStillEvolveThePrior) {
  const ModelConfig c = tiny(Variant::MD);
  Rng rng(16, 0);
  const ParamStore p = init_params(c, rng);
  const auto out = forward_md(c, p, Array({4, 3}, 0.8), rng);
  const Array& mu = out.prior->mu.value();
  EXPECT_NE(mu(0, 0), mu(1, 0));
}

TEST(Ma, PriorAtFirstFrameSeesLastFrame) {
  const ModelConfig c = tiny(Variant::MA);
  Rng rng(17, 0);
  const ParamStore p = init_params(c, rng);
  Array x = random_array(rng, {5, 3});
  Rng a(1, 0), b(1, 0);
  const auto before = forward_ma(c, p, x, a).prior->mu.value();
  x(4, 1) += 0.5;
  const auto after = forward_ma(c, p, x, b).prior->mu.value();
  EXPECT_NE(before(0, 0), after(0, 0));
}

TEST(GradCheck, FullModels) {
  for (Variant v : kAll) {
    for (int trial = 0; trial < 3; ++trial) {
      const ModelConfig c = tiny(v);
      Rng rng(18, static_cast<std::uint64_t>(trial));
      const ParamStore p = init_params(c, rng);
      const Array x = random_array(rng, {3, 3});
      const LabelSequence y{static_cast<int>(rng.below(2))};
      const auto build = [&] {
        Rng r(19, static_cast<std::uint64_t>(trial));
        const auto out = forward(c, p, x, r);
        return model_loss(c, out, y, r).total;
      };
      EXPECT_LE(gradient_error(leaves(p), build), 1e-4) << to_string(v) << " trial " << trial;
    }
  }
}
