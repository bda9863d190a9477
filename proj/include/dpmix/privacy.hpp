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

// Mixup-plus-Laplace dataset release and its privacy accounting.
//
// The release draws T samples z = mean(k-subset of D) + eta, eta ~ Lap(0, sigma I).
// Removing one element changes a k-mean by at most delta/k in l1, which
// yields per-sample privacy loss max(A, B) with
//
//   A = log(1 - k/n + (k/n) e^{delta/(k sigma)})
//   B = log(n / (n - k + k e^{-delta/(k sigma)}))
//
// and epsilon = T max(A, B) <= T delta / (k sigma) under basic composition.

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "dpmix/datastore.hpp"

namespace dpmix {

struct NoiseSpec {
  double sigma = 1.0;  // Laplace scale, pixel-intensity units
};

struct PrivacyCertificate {
  std::uint64_t n = 0;
  std::uint64_t T = 0;
  std::uint64_t k = 0;
  double sigma = 0;
  double delta_diameter = 0;
  double epsilon = 0;
  double branch_a = 0;
  double branch_b = 0;
  double upper_bound = 0;
  double dp_delta = 0;  // always 0: the mechanism is pure DP

  /// Which channel the certificate covers. Labels are released un-noised.
  static constexpr const char* kScope = "image channel only; labels are exact mixture means";

  CertificateBlock to_block() const;
  static PrivacyCertificate from_block(const CertificateBlock& b);
};

struct ReleasedDataset {
  LabeledDataset data;
  PrivacyCertificate certificate;
};

/// i.i.d. Laplace(0, sigma) vector; sigma == 0 gives zeros.
Eigen::VectorXd sample_laplace(double sigma, std::size_t d, std::uint64_t seed);
Eigen::VectorXd sample_laplace(double sigma, std::size_t d, Rng& rng);

PrivacyCertificate epsilon_mixup(std::uint64_t n, std::uint64_t T, std::uint64_t k, double sigma,
                                 double delta_diameter = 1.0);

/// Per-point Laplace release composed T times: T * delta / sigma.
double epsilon_classical(std::uint64_t T, double sigma, double delta_diameter = 1.0);

/// Release of T noisy k-subset means. Sample t uses sub-seed (seed, t), so the
/// output does not depend on `threads`.
ReleasedDataset release_dataset(const LabeledDataset& ds, std::uint64_t k, double sigma,
                                std::uint64_t T, double delta_diameter, std::uint64_t seed,
                                unsigned threads = 1);

struct OracleSuprema {
  double log_p_over_q = 0;
  double log_q_over_p = 0;
};

/// Exact mixture-of-Laplace densities of one release sample under D (p) and
/// D minus element `removed_index` (q), enumerating every k-subset, with
/// suprema of both log-ratios over `grid`. Enumeration is capped at n <= 10.
OracleSuprema density_ratio_oracle(const LabeledDataset& ds_small, std::size_t removed_index,
                                   std::size_t k, double sigma,
                                   std::span<const Eigen::VectorXd> grid);

enum class CostSign { kNonNegative, kNonPositive };

struct AttackBoundInput {
  double j_clean = 0;  // attack cost on clean data
  double b_cost = 1;   // |C| <= b_cost
  double epsilon = 1;
  double dp_delta = 0;
  std::uint64_t l = 0;  // modified elements
  CostSign sign = CostSign::kNonNegative;
};

/// Lower bound on the attack cost J(D') reachable by modifying l elements
/// against an (epsilon, delta)-DP learner.
double attack_cost_bound(const AttackBoundInput& input);

// CSV header and row for a certificate, columns
// n,T,k,sigma,delta,branch_A,branch_B,epsilon,upper_bound.
std::string certificate_csv_header();
std::string certificate_csv_row(const PrivacyCertificate& c);

}  // namespace dpmix
