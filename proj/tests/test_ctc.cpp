#include <gtest/gtest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "vctc/ctc.hpp"
#include "vctc/error.hpp"
#include "vctc/oracles.hpp"

using namespace vctc;
using vctc::testing::random_array;

namespace {

constexpr int A = 0, B = 1;

FrameLogProbs uniform(std::size_t frames, std::size_t classes) {
  return FrameLogProbs(frames, classes, -std::log(static_cast<double>(classes)));
}

FrameLogProbs random_probs(Rng& rng, std::size_t frames, std::size_t classes, double scale = 2.0) {
  return FrameLogProbs::from_logits(random_array(rng, {frames, classes}, scale));
}

LabelSequence random_labels(Rng& rng, std::size_t len, std::size_t symbols) {
  LabelSequence y(len);
  for (int& l : y) l = static_cast<int>(rng.below(symbols));
  return y;
}

}  // namespace

TEST(Collapse, MergesThenDropsBlanks) {
  const int blank = 2;
  EXPECT_EQ(collapse({A, A, blank, B, B}, blank), (LabelSequence{A, B}));
  EXPECT_EQ(collapse({blank, blank, blank}, blank), LabelSequence{});
  EXPECT_EQ(collapse({A, blank, A}, blank), (LabelSequence{A, A}));
  EXPECT_EQ(collapse({}, blank), LabelSequence{});
}

TEST(MinFrames, CountsRepeatSeparators) {
  EXPECT_EQ(min_frames_required({}), 0u);
  EXPECT_EQ(min_frames_required({A, B}), 2u);
  EXPECT_EQ(min_frames_required({A, A}), 3u);
  EXPECT_EQ(min_frames_required({A, A, B, B}), 6u);
}

TEST(CtcLikelihood, TwoFramesUniformSingleToken) {
  EXPECT_NEAR(ctc_log_likelihood(uniform(2, 2), {A}), std::log(0.75), 1e-15);
}

TEST(CtcLikelihood, RepeatTooLongIsNegInf) {
  EXPECT_EQ(ctc_log_likelihood(uniform(2, 2), {A, A}), kNegInf);
  EXPECT_EQ(brute_force_log_likelihood(uniform(2, 2), {A, A}), kNegInf);
}

TEST(CtcLikelihood, EmptyTargetIsBlankSum) {
  Rng rng(1, 0);
  const FrameLogProbs p = random_probs(rng, 5, 4);
  double expected = 0.0;
  for (std::size_t t = 0; t < 5; ++t) expected += p(t, 3);
  EXPECT_NEAR(ctc_log_likelihood(p, {}), expected, 1e-12);
}

TEST(CtcLikelihood, SingleFrameSingleToken) {
  Rng rng(2, 0);
  const FrameLogProbs p = random_probs(rng, 1, 3);
  EXPECT_NEAR(brute_force_log_likelihood(p, {B}), p(0, B), 1e-15);
  EXPECT_NEAR(ctc_log_likelihood(p, {B}), p(0, B), 1e-15);
}

TEST(CtcLikelihood, AgreesWithEnumeration) {
  Rng rng(3, 0);
  const auto rep = oracle::check_ctc_against_enumeration(1000, 6, 3, 3, rng);
  EXPECT_EQ(rep.instances, 1000u);
  EXPECT_LE(rep.max_abs_error, 1e-9);
  EXPECT_GT(rep.infeasible, 0u);
}

TEST(CtcLikelihood, ZeroFrames) {
  const FrameLogProbs p(0, 3);
  EXPECT_EQ(ctc_log_likelihood(p, {}), 0.0);
  EXPECT_EQ(ctc_log_likelihood(p, {A}), kNegInf);
}

TEST(BruteForce, RefusesHugeInstances) {
  const FrameLogProbs p = uniform(12, 5);  // 5^12 > 1e7 paths
  EXPECT_THROW(brute_force_log_likelihood(p, {A}), ContractError);
}

TEST(Lattice, AlphaBetaIdentityHoldsAtEveryFrame) {
  Rng rng(4, 0);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t V = 1 + rng.below(4);
    const std::size_t U = rng.below(4);
    const LabelSequence y = random_labels(rng, U, V);
    const std::size_t T = min_frames_required(y) + rng.below(5) + (U == 0 ? 1 : 0);
    const FrameLogProbs p = random_probs(rng, T, V + 1);
    const CtcLattice lat = build_lattice(p, y);
    ASSERT_TRUE(std::isfinite(lat.log_likelihood));
    for (std::size_t t = 0; t < T; ++t) {
      double acc = kNegInf;
      for (std::size_t s = 0; s < lat.states(); ++s)
        acc = log_add(acc, lat.a(t, s) + lat.b(t, s) - p(t, static_cast<std::size_t>(lat.extended[s])));
      EXPECT_NEAR(acc, lat.log_likelihood, 1e-9);
    }
  }
}

TEST(Lattice, ExtendedTargetInterleavesBlanks) {
  const CtcLattice lat = build_lattice(uniform(4, 3), {A, B});
  EXPECT_EQ(lat.extended, (std::vector<int>{2, A, 2, B, 2}));
}

TEST(CtcGrad, RowsSumToZero) {
  Rng rng(5, 0);
  const FrameLogProbs p = random_probs(rng, 6, 4);
  const Array g = ctc_grad(p, {A, B, A});
  for (std::size_t t = 0; t < 6; ++t) {
    double s = 0.0;
    for (std::size_t k = 0; k < 4; ++k) s += g(t, k);
    EXPECT_NEAR(s, 0.0, 1e-12);
  }
}

TEST(CtcGrad, SingleFrameIsOneHotMinusSoftmax) {
  Rng rng(6, 0);
  const FrameLogProbs p = random_probs(rng, 1, 3);
  const Array g = ctc_grad(p, {A});
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(g(0, k), (k == A ? 1.0 : 0.0) - std::exp(p(0, k)), 1e-15);
}

TEST(CtcGrad, InfeasibleTargetThrows) {
  EXPECT_THROW(ctc_grad(uniform(2, 2), {A, A}), InfeasibleError);
  EXPECT_THROW(ctc_occupancy(uniform(2, 2), {A, A}), InfeasibleError);
}

TEST(CtcGrad, MatchesFiniteDifferencesOfEnumeration) {
  Rng rng(7, 0);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t T = trial == 0 ? 5 : 2 + rng.below(4);
    const std::size_t V = trial == 0 ? 3 : 1 + rng.below(3);
    LabelSequence y = random_labels(rng, trial == 0 ? 2 : rng.below(3), V);
    if (min_frames_required(y) > T) y.pop_back();
    Array logits = random_array(rng, {T, V + 1});
    const Array g = ctc_grad(FrameLogProbs::from_logits(logits), y);
    const auto f = [&](const std::vector<double>& flat) {
      return brute_force_log_likelihood(FrameLogProbs::from_logits(Array(logits.shape, flat)), y);
    };
    const auto num = oracle::numeric_gradient(f, logits.data);
    EXPECT_LE(oracle::max_relative_error(g.data, num), 1e-4) << "trial " << trial;
  }
}

TEST(CtcGrad, TensorOpBackwardGivesOccupancy) {
  Rng rng(8, 0);
  const FrameLogProbs p = random_probs(rng, 5, 3);
  auto lp = ad::Tensor::variable(p.to_array());
  const auto ll = ctc_log_likelihood(lp, {A, B});
  EXPECT_NEAR(ll.item(), ctc_log_likelihood(p, {A, B}), 1e-12);
  ad::backward(ll);
  const Array occ = ctc_occupancy(p, {A, B});
  for (std::size_t i = 0; i < occ.size(); ++i) EXPECT_NEAR(lp.grad()[i], occ[i], 1e-12);
}

TEST(CtcLikelihood, NonIncreasingWhenAFrameProbabilityShrinks) {
  Rng rng(9, 0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t V = 1 + rng.below(3);
    const LabelSequence y = random_labels(rng, 1 + rng.below(2), V);
    const std::size_t T = min_frames_required(y) + rng.below(3);
    FrameLogProbs p = random_probs(rng, T, V + 1);
    const double before = ctc_log_likelihood(p, y);
    p(rng.below(T), rng.below(V + 1)) -= 0.5 + rng.uniform();
    EXPECT_LE(ctc_log_likelihood(p, y), before + 1e-12);
  }
}

TEST(CtcPaths, EveryConsistentPathEmitsTokensInOrder) {
  // Enumerate all paths of a small instance; each one collapsing to y must
  // first emit y_1, then y_2, ... at increasing frames.
  const LabelSequence y{A, B, A};
  const int blank = 2;
  const std::size_t T = 6;
  std::size_t consistent = 0;
  std::vector<int> path(T, 0);
  for (std::size_t code = 0; code < 729; ++code) {
    std::size_t c = code;
    for (std::size_t t = 0; t < T; ++t, c /= 3) path[t] = static_cast<int>(c % 3);
    if (collapse(path, blank) != y) continue;
    ++consistent;
    std::vector<std::size_t> starts;
    for (std::size_t t = 0; t < T; ++t)
      if (path[t] != blank && (t == 0 || path[t] != path[t - 1])) starts.push_back(t);
    ASSERT_EQ(starts.size(), y.size());
    for (std::size_t i = 0; i < y.size(); ++i) EXPECT_EQ(path[starts[i]], y[i]);
    for (std::size_t i = 1; i < starts.size(); ++i) EXPECT_LT(starts[i - 1], starts[i]);
  }
  EXPECT_GT(consistent, 0u);
}

TEST(FrameLogProbs, FromLogitsIsNormalized) {
  Rng rng(10, 0);
  const FrameLogProbs p = random_probs(rng, 7, 5, 10.0);
  EXPECT_LE(p.max_normalization_error(), 1e-9);
}
