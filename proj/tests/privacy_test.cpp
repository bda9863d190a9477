// Copyright 2026 The dpmix Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "dpmix/privacy.hpp"
#include "test_util.hpp"

namespace dpmix {
namespace {

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

// The rounded figure usually quoted for this case is off in the fifth digit.
TEST(Accountant, QuotedWorkedExampleAgreesToFourFigures) {
  EXPECT_NEAR(epsilon_mixup(10, 1, 2, 1.0, 1.0).epsilon, 0.12202, 5e-5);
}

// Reference values evaluated at 40 significant digits.
TEST(Accountant, MatchesHighPrecisionReference) {
  auto c = epsilon_mixup(10, 1, 2, 1.0, 1.0);
  EXPECT_LT(rel(c.branch_a, 0.12199128333927103), 1e-14);
  EXPECT_LT(rel(c.branch_b, 0.08196290713934398), 1e-14);
  EXPECT_LT(rel(c.epsilon, 0.12199128333927103), 1e-14);
  EXPECT_DOUBLE_EQ(c.upper_bound, 0.5);
  EXPECT_EQ(c.dp_delta, 0.0);

  c = epsilon_mixup(3, 1, 2, 1.0, 1.0);
  EXPECT_LT(rel(c.branch_a, 0.35940779927892402), 1e-14);
  EXPECT_LT(rel(c.branch_b, 0.30423551925046651), 1e-14);

  c = epsilon_mixup(10, 1, 2, 0.5, 1.0);
  EXPECT_LT(rel(c.branch_a, 0.29539452912034765), 1e-14);
  EXPECT_LT(rel(c.branch_b, 0.13516027483680967), 1e-14);

  c = epsilon_mixup(50000, 50000, 4, 16.0 / 255.0, 1.0);
  EXPECT_LT(rel(c.branch_a, 0.0042112549392449231), 1e-12);
  EXPECT_LT(rel(c.branch_b, 7.8514756744244006e-5), 1e-12);
  EXPECT_LT(rel(c.epsilon, 210.56274696224616), 1e-12);
  EXPECT_LT(rel(c.upper_bound, 199218.75), 1e-15);
}

TEST(Accountant, HugeSigmaGivesNearZero) {
  const auto c = epsilon_mixup(10, 1, 2, 1e9, 1.0);
  EXPECT_GT(c.epsilon, 0.0);
  EXPECT_LT(c.epsilon, 1e-9);
}

TEST(Accountant, OverflowBranchStaysFinite) {
  const auto c = epsilon_mixup(100, 1, 1, 1e-6, 1.0);
  ASSERT_TRUE(std::isfinite(c.branch_a));
  // log(k/n) + a + log1p(...) with a = 1e6.
  EXPECT_NEAR(c.branch_a, std::log(0.01) + 1e6, 1e-6);
  EXPECT_LE(c.epsilon, c.upper_bound);
  // Continuity across the switch at a = 700.
  const double lo = epsilon_mixup(50, 1, 1, 1.0 / 699.999999).branch_a;
  const double hi = epsilon_mixup(50, 1, 1, 1.0 / 700.000001).branch_a;
  EXPECT_NEAR(lo, hi, 1e-5);
}

TEST(Accountant, RejectsInvalidDomain) {
  EXPECT_THROW(epsilon_mixup(10, 1, 0, 1.0), InvalidArgument);
  EXPECT_THROW(epsilon_mixup(10, 1, 11, 1.0), InvalidArgument);
  EXPECT_THROW(epsilon_mixup(10, 0, 2, 1.0), InvalidArgument);
  EXPECT_THROW(epsilon_mixup(10, 1, 2, 0.0), InvalidArgument);
  EXPECT_THROW(epsilon_mixup(10, 1, 2, 1.0, -1.0), InvalidArgument);
}

TEST(Accountant, KEqualsNGivesBareExponent) {
  const auto c = epsilon_mixup(5, 3, 5, 0.1);
  EXPECT_NEAR(c.branch_a, std::log(std::exp(2.0)), 1e-12);  // r = 1: A = a
}

TEST(AccountantProperties, RandomGridHierarchy) {
  Rng rng = make_rng(2024);
  for (int i = 0; i < 2000; ++i) {
    const std::uint64_t n = 1 + uniform_index(rng, 100000);
    const std::uint64_t k = 1 + uniform_index(rng, std::min<std::uint64_t>(n, 64));
    const std::uint64_t T = 1 + uniform_index(rng, 100000);
    const double sigma = std::exp(-8.0 + 12.0 * uniform_open01(rng));
    const double delta = std::exp(-3.0 + 6.0 * uniform_open01(rng));
    const auto c = epsilon_mixup(n, T, k, sigma, delta);
    ASSERT_LE(c.epsilon, c.upper_bound * (1 + 1e-12));
    ASSERT_GE(c.branch_a, c.branch_b * (1 - 1e-12));
    ASSERT_GE(c.branch_b, 0.0);
    if (k == 1) ASSERT_EQ(c.upper_bound, epsilon_classical(T, sigma, delta));
  }
}

TEST(AccountantProperties, BranchAStrictlyDecreasingInK) {
  for (std::uint64_t n : {8u, 64u, 1000u, 50000u}) {
    for (double sigma : {2.0 / 255, 16.0 / 255, 0.5, 4.0}) {
      double prev = std::numeric_limits<double>::infinity();
      for (std::uint64_t k = 1; k <= std::min<std::uint64_t>(64, n); ++k) {
        const double a = epsilon_mixup(n, 1, k, sigma).branch_a;
        if (k < n) {
          ASSERT_LT(a, prev) << "n=" << n << " k=" << k << " sigma=" << sigma;
        }
        prev = a;
      }
    }
  }
}

TEST(Classical, Formula) {
  EXPECT_DOUBLE_EQ(epsilon_classical(10, 0.5, 2.0), 40.0);
  EXPECT_THROW(epsilon_classical(1, 0.0), InvalidArgument);
}

TEST(Laplace, ZeroSigmaAndDeterminism) {
  EXPECT_EQ(sample_laplace(0.0, 5, 1), Eigen::VectorXd::Zero(5));
  EXPECT_EQ(sample_laplace(1.0, 5, 1), sample_laplace(1.0, 5, 1));
  EXPECT_NE(sample_laplace(1.0, 5, 1), sample_laplace(1.0, 5, 2));
  EXPECT_THROW(sample_laplace(-1.0, 5, 1), InvalidArgument);
}

LabeledDataset small_images() {
  BlobSpec spec;
  spec.per_class = 4;
  spec.shape = {3, 3, 1};
  return synth_blobs(spec);
}

TEST(Release, ReproducibleAndThreadIndependent) {
  const auto ds = small_images();
  const auto a = release_dataset(ds, 3, 0.2, 50, 1.0, 77, 1);
  const auto b = release_dataset(ds, 3, 0.2, 50, 1.0, 77, 4);
  ASSERT_EQ(a.data.size(), 50u);
  for (std::size_t t = 0; t < 50; ++t) {
    EXPECT_EQ(a.data.examples[t].image.pixels, b.data.examples[t].image.pixels);
    EXPECT_EQ(a.data.examples[t].label.probs, b.data.examples[t].label.probs);
  }
  EXPECT_EQ(a.certificate.epsilon, epsilon_mixup(12, 50, 3, 0.2).epsilon);
  const auto c = release_dataset(ds, 3, 0.2, 50, 1.0, 78, 1);
  EXPECT_NE(a.data.examples[0].image.pixels, c.data.examples[0].image.pixels);
}

TEST(Release, LabelsAreExactMixtureMeans) {
  const auto ds = small_images();
  for (double sigma : {0.01, 1e9}) {
    const auto r = release_dataset(ds, 3, sigma, 40, 1.0, 5);
    for (const auto& e : r.data.examples) {
      EXPECT_TRUE(e.label.on_simplex(1e-12));
      for (Eigen::Index c = 0; c < e.label.probs.size(); ++c) {
        const double thirds = e.label.probs[c] * 3.0;
        EXPECT_NEAR(thirds, std::round(thirds), 1e-12);
      }
    }
  }
}

TEST(Release, HugeSigmaDecorrelatesImages) {
  const auto ds = small_images();
  const auto r = release_dataset(ds, 2, 1e6, 20, 1.0, 5);
  for (const auto& e : r.data.examples) EXPECT_GT(e.image.pixels.cwiseAbs().maxCoeff(), 10.0);
}

TEST(Release, PixelsAreNotClipped) {
  const auto ds = small_images();
  const auto r = release_dataset(ds, 2, 1.0, 30, 1.0, 9);
  bool outside = false;
  for (const auto& e : r.data.examples)
    outside |= (e.image.pixels.array() < 0).any() || (e.image.pixels.array() > 1).any();
  EXPECT_TRUE(outside);
  EXPECT_THROW(release_dataset(ds, 13, 1.0, 3, 1.0, 1), InvalidArgument);
  EXPECT_THROW(release_dataset(ds, 2, 0.0, 3, 1.0, 1), InvalidArgument);
}

TEST(Certificate, BlockAndCsvRoundTrip) {
  const auto c = epsilon_mixup(10, 1, 2, 1.0);
  const auto back = PrivacyCertificate::from_block(c.to_block());
  EXPECT_EQ(back.epsilon, c.epsilon);
  EXPECT_EQ(back.branch_b, c.branch_b);
  EXPECT_EQ(certificate_csv_header(), "n,T,k,sigma,delta,branch_A,branch_B,epsilon,upper_bound");
  EXPECT_EQ(certificate_csv_row(c),
            "10,1,2,1,1,0.12199128333927103,0.08196290713934398,0.12199128333927103,0.5");
}

std::vector<Eigen::VectorXd> grid_1d(double lo, double hi, int steps) {
  std::vector<Eigen::VectorXd> g;
  for (int i = 0; i <= steps; ++i) {
    Eigen::VectorXd z(1);
    z << lo + (hi - lo) * i / steps;
    g.push_back(z);
  }
  return g;
}

TEST(Oracle, IdenticalPointsAreIndistinguishable) {
  const auto ds = testing::scalar_points({0.4, 0.4});
  const auto g = grid_1d(-5, 5, 200);
  const auto s = density_ratio_oracle(ds, 0, 1, 1.0, g);
  EXPECT_NEAR(s.log_p_over_q, 0.0, 1e-12);
  EXPECT_NEAR(s.log_q_over_p, 0.0, 1e-12);
}

TEST(Oracle, DominatedByAccountantAndMonotoneInSigma) {
  const auto ds = testing::scalar_points({0.0, 0.5, 1.0});
  const auto g = grid_1d(-6, 7, 5200);
  const auto s1 = density_ratio_oracle(ds, 0, 2, 1.0, g);
  const auto c1 = epsilon_mixup(3, 1, 2, 1.0);
  EXPECT_LE(s1.log_p_over_q, c1.branch_a + 1e-9);
  EXPECT_LE(s1.log_q_over_p, c1.branch_b + 1e-9);
  const auto s2 = density_ratio_oracle(ds, 0, 2, 0.5, g);
  EXPECT_GT(s2.log_p_over_q, s1.log_p_over_q);
  EXPECT_GT(s2.log_q_over_p, s1.log_q_over_p);
}

TEST(Oracle, Preconditions) {
  const auto ds = testing::scalar_points({0.0, 0.5, 1.0});
  const auto g = grid_1d(0, 1, 4);
  EXPECT_THROW(density_ratio_oracle(ds, 0, 3, 1.0, g), InvalidArgument);
  EXPECT_THROW(density_ratio_oracle(ds, 3, 1, 1.0, g), InvalidArgument);
  EXPECT_THROW(density_ratio_oracle(ds, 0, 1, 0.0, g), InvalidArgument);
  const auto big = testing::scalar_points(std::vector<double>(11, 0.5));
  EXPECT_THROW(density_ratio_oracle(big, 0, 1, 1.0, g), InvalidArgument);
}

TEST(AttackBound, ClosedForms) {
  AttackBoundInput in;
  in.j_clean = 1.0;
  in.epsilon = 0.1;
  in.l = 5;
  EXPECT_LT(rel(attack_cost_bound(in), 0.6065306597126334), 1e-12);
  in.l = 0;
  EXPECT_EQ(attack_cost_bound(in), 1.0);
  in.l = 100000;
  in.epsilon = 10;
  EXPECT_EQ(attack_cost_bound(in), 0.0);
  in.epsilon = 0;
  EXPECT_THROW(attack_cost_bound(in), InvalidArgument);
}

TEST(AttackBound, SlackTerm) {
  AttackBoundInput in{0.5, 2.0, 1.0, 0.01, 2, CostSign::kNonNegative};
  const double slack = 2.0 * 0.01 / std::expm1(1.0);
  EXPECT_NEAR(attack_cost_bound(in), std::max(std::exp(-2.0) * (0.5 + slack) - slack, 0.0), 1e-15);
  in.sign = CostSign::kNonPositive;
  in.j_clean = -0.5;
  EXPECT_NEAR(attack_cost_bound(in), std::max(std::exp(-2.0) * (-0.5 + slack) + slack, -2.0), 1e-15);
  in.j_clean = 0.5;
  EXPECT_THROW(attack_cost_bound(in), InvalidArgument);
}

TEST(AttackBound, NonIncreasingInLAndEpsilonForNonNegativeCost) {
  Rng rng = make_rng(17);
  for (int i = 0; i < 1000; ++i) {
    AttackBoundInput in;
    in.j_clean = uniform_open01(rng) * 5;
    in.b_cost = 5;
    in.epsilon = 0.01 + 3 * uniform_open01(rng);
    in.l = uniform_index(rng, 50);
    const double base = attack_cost_bound(in);
    AttackBoundInput more_l = in;
    more_l.l += 1;
    AttackBoundInput more_eps = in;
    more_eps.epsilon *= 1.5;
    ASSERT_LE(attack_cost_bound(more_l), base);
    ASSERT_LE(attack_cost_bound(more_eps), base);
  }
}

}  // namespace
}  // namespace dpmix
