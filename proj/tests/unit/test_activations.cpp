#include <gtest/gtest.h>

#include <cmath>

#include "gradient_check.hpp"
#include "sparsegate/activations.hpp"
#include "sparsegate/errors.hpp"
#include "test_support.hpp"

namespace sg = sparsegate;
using sg::ActivationKind;

TEST(Combine, ReluFamilyExamples) {
  EXPECT_EQ(sg::combine(ActivationKind::drelu(), 1.0, -1.0), 0.0);
  EXPECT_EQ(sg::combine(ActivationKind::drelu(), -1.0, 1.0), 0.0);
  EXPECT_EQ(sg::combine(ActivationKind::drelu(), 2.0, 3.0), 6.0);
  EXPECT_EQ(sg::combine(ActivationKind::reglu(), -1.0, 5.0), 0.0);
  EXPECT_EQ(sg::combine(ActivationKind::reglu(), 2.0, -3.0), -6.0);
  EXPECT_EQ(sg::combine(ActivationKind::shifted_relu(0.5), 0.4, 10.0), 0.0);
  EXPECT_EQ(sg::combine(ActivationKind::shifted_relu(0.5), 0.5, 10.0), 0.0);
  EXPECT_EQ(sg::combine(ActivationKind::shifted_relu(0.5), 0.75, 2.0), 1.5);
}

TEST(Combine, SwigluAtOne) {
  // sigmoid(1) = 1 / (1 + e^-1)
  EXPECT_NEAR(sg::combine(ActivationKind::swiglu(), 1.0, 1.0), 0.7310585786300049, 1e-15);
  EXPECT_NEAR(sg::combine(ActivationKind::swiglu(), 1.0F, 1.0F), 0.731059F, 1e-6F);
}

TEST(Combine, SigmoidStableAtExtremes) {
  EXPECT_TRUE(std::isfinite(sg::sigmoid(-1000.0)));
  EXPECT_TRUE(std::isfinite(sg::sigmoid(1000.0)));
  EXPECT_EQ(sg::sigmoid(1000.0), 1.0);
  EXPECT_EQ(sg::sigmoid(-1000.0), 0.0);
  EXPECT_TRUE(std::isfinite(sg::silu(-100.0F)));
}

TEST(Combine, ShiftedReluZeroEqualsReglu) {
  sg::Rng rng(17);
  const auto shifted = ActivationKind::shifted_relu(0.0);
  for (int i = 0; i < 10000; ++i) {
    const float g = static_cast<float>(rng.normal());
    const float u = static_cast<float>(rng.normal());
    ASSERT_EQ(sg::combine(shifted, g, u), sg::combine(ActivationKind::reglu(), g, u));
  }
}

TEST(Combine, DreluNonNegativeAndSparserThanReglu) {
  sg::Rng rng(18);
  for (int i = 0; i < 10000; ++i) {
    const float g = static_cast<float>(rng.normal());
    const float u = static_cast<float>(rng.normal());
    const float dr = sg::combine(ActivationKind::drelu(), g, u);
    ASSERT_GE(dr, 0.0F);
    if (sg::combine(ActivationKind::reglu(), g, u) == 0.0F) {
      ASSERT_EQ(dr, 0.0F);
    }
  }
}

TEST(ActivationKind, ParseAndPrint) {
  EXPECT_EQ(ActivationKind::parse("drelu"), ActivationKind::drelu());
  EXPECT_EQ(ActivationKind::parse("swiglu"), ActivationKind::swiglu());
  EXPECT_EQ(ActivationKind::parse("reglu"), ActivationKind::reglu());
  EXPECT_EQ(ActivationKind::parse("shifted_relu"), ActivationKind::shifted_relu(0.0));
  EXPECT_EQ(ActivationKind::parse("shifted_relu:0.25"), ActivationKind::shifted_relu(0.25));
  EXPECT_EQ(ActivationKind::parse(ActivationKind::shifted_relu(0.25).to_string()), ActivationKind::shifted_relu(0.25));
  EXPECT_THROW(ActivationKind::parse("gelu"), sg::DomainError);
  EXPECT_THROW(ActivationKind::shifted_relu(-0.1), sg::DomainError);
  EXPECT_FALSE(ActivationKind::swiglu().has_exact_zeros());
  EXPECT_TRUE(ActivationKind::drelu().has_exact_zeros());
}

TEST(FfnForward, ZeroWeightsGiveZero) {
  const sg::FfnWeights w(sg::Matrix(4, 3), sg::Matrix(4, 3), sg::Matrix(3, 4), ActivationKind::drelu());
  const sg::Vector x{1.0F, -2.0F, 3.0F};
  EXPECT_EQ(sg::ffn_forward(w, x.span()).output, sg::Vector(3));
}

TEST(FfnForward, HandComputed) {
  // d = 2, n = 2; neuron 0 active, neuron 1 has a negative gate.
  const auto gate = sg::Matrix::from_rows({{1, 0}, {-1, 0}});
  const auto up = sg::Matrix::from_rows({{0, 1}, {0, 1}});
  const auto down = sg::Matrix::from_rows({{1, 1}, {2, 2}});
  const sg::FfnWeights w(gate, up, down, ActivationKind::drelu());
  const sg::Vector x{2.0F, 3.0F};
  const auto r = sg::ffn_forward(w, x.span(), true);
  EXPECT_EQ(r.trace->combined, (sg::Vector{6.0F, 0.0F}));
  EXPECT_EQ(r.output, (sg::Vector{6.0F, 12.0F}));
}

TEST(FfnForward, ShapeErrors) {
  EXPECT_THROW(sg::FfnWeights(sg::Matrix(4, 3), sg::Matrix(4, 2), sg::Matrix(3, 4), ActivationKind::drelu()),
               sg::ShapeError);
  EXPECT_THROW(sg::FfnWeights(sg::Matrix(4, 3), sg::Matrix(4, 3), sg::Matrix(4, 3), ActivationKind::drelu()),
               sg::ShapeError);
  const sg::FfnWeights w(sg::Matrix(4, 3), sg::Matrix(4, 3), sg::Matrix(3, 4), ActivationKind::drelu());
  const sg::Vector x{1.0F, 2.0F};
  EXPECT_THROW(sg::ffn_forward(w, x.span()), sg::ShapeError);
}

TEST(FfnForward, MatchesCompositionOfPrimitives) {
  sg::Rng rng(21);
  for (std::size_t i = 0; i < 40; ++i) {
    const auto w = sg::gaussian_ffn<float>(16, 48, sg::testing::kind_from_index(i), 0.3, rng);
    const auto x = sg::gaussian_vector<float>(16, 1.0, rng);
    const auto c = sg::combined<float>(w.kind(), sg::matvec(w.w_gate(), x.span()).span(),
                                       sg::matvec(w.w_up(), x.span()).span());
    EXPECT_EQ(sg::ffn_forward(w, x.span()).output, sg::matvec(w.w_down(), c.span()));
  }
}

TEST(FfnForward, DreluActiveFractionMonteCarlo) {
  // Gate and up pre-activations are independent symmetric Gaussians, so a
  // neuron is active with probability 1/2 * 1/2.
  sg::Rng rng(22);
  std::size_t active = 0;
  std::size_t total = 0;
  for (int i = 0; i < 64; ++i) {
    const auto w = sg::gaussian_ffn<float>(64, 2048, ActivationKind::drelu(), 0.02, rng);
    const auto x = sg::gaussian_vector<float>(64, 1.0, rng);
    const auto r = sg::ffn_forward(w, x.span(), true);
    for (float c : r.trace->combined) active += c != 0.0F ? 1 : 0;
    total += 2048;
  }
  EXPECT_GE(total, 100000U);
  EXPECT_NEAR(static_cast<double>(active) / static_cast<double>(total), 0.25, 0.02);
}

TEST(FfnBackward, ZeroUpstreamGivesZeroGradients) {
  sg::Rng rng(23);
  const auto w = sg::gaussian_ffn<double>(5, 7, ActivationKind::swiglu(), 0.5, rng);
  const auto x = sg::gaussian_vector<double>(5, 1.0, rng);
  const auto g = sg::ffn_backward(w, x.span(), sg::VectorF64(5).span());
  EXPECT_EQ(g.grad_x, sg::VectorF64(5));
  EXPECT_EQ(sg::frobenius_norm(g.grad_w_gate), 0.0);
  EXPECT_EQ(sg::frobenius_norm(g.grad_w_up), 0.0);
  EXPECT_EQ(sg::frobenius_norm(g.grad_w_down), 0.0);
}

TEST(FfnBackward, DeadNeuronsHaveZeroGateAndUpGradients) {
  // Every gate row is the negative of a positive input, so nothing fires.
  const auto gate = sg::MatrixF64::from_rows({{-1, -1}, {-2, -1}});
  const auto up = sg::MatrixF64::from_rows({{1, 2}, {3, 4}});
  const auto down = sg::MatrixF64::from_rows({{1, 2}, {3, 4}});
  for (auto kind : {ActivationKind::reglu(), ActivationKind::drelu(), ActivationKind::shifted_relu(0.1)}) {
    const sg::FfnWeightsF64 w(gate, up, down, kind);
    const sg::VectorF64 x{1.0, 1.0};
    const sg::VectorF64 grad_out{1.0, -1.0};
    const auto g = sg::ffn_backward(w, x.span(), grad_out.span());
    EXPECT_EQ(sg::frobenius_norm(g.grad_w_gate), 0.0);
    EXPECT_EQ(sg::frobenius_norm(g.grad_w_up), 0.0);
    EXPECT_EQ(g.grad_x, sg::VectorF64(2));
  }
}

class GradientCheck : public ::testing::TestWithParam<int> {};

TEST_P(GradientCheck, MatchesCentralDifferences) {
  const auto kind = sg::testing::kind_from_index(static_cast<std::size_t>(GetParam()));
  sg::Rng rng(sg::derive_seed(300, static_cast<std::uint64_t>(GetParam())));
  for (int i = 0; i < 25; ++i) {
    EXPECT_LE(sg::testing::gradient_check_instance(kind, rng), 1e-4) << kind.to_string() << " instance " << i;
  }
}

INSTANTIATE_TEST_SUITE_P(AllKinds, GradientCheck, ::testing::Values(0, 1, 2, 3));
