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

#include "dpmix/privacy.hpp"

#include <cmath>
#include <limits>

#include "dpmix/augment.hpp"
#include "dpmix/csv.hpp"

namespace dpmix {
namespace {

// Exponent above which e^a is evaluated in log space.
constexpr double kOverflowExponent = 700.0;

double log_sum_exp(const std::vector<double>& v) {
  double hi = -std::numeric_limits<double>::infinity();
  for (double x : v) hi = std::max(hi, x);
  if (!std::isfinite(hi)) return hi;
  double s = 0;
  for (double x : v) s += std::exp(x - hi);
  return hi + std::log(s);
}

// Calls fn(subset) for every k-subset of `pool` in lexicographic order.
template <typename Fn>
void for_each_subset(const std::vector<std::size_t>& pool, std::size_t k, Fn&& fn) {
  std::vector<std::size_t> pos(k);
  for (std::size_t i = 0; i < k; ++i) pos[i] = i;
  std::vector<std::size_t> subset(k);
  while (true) {
    for (std::size_t i = 0; i < k; ++i) subset[i] = pool[pos[i]];
    fn(subset);
    std::size_t i = k;
    while (i > 0 && pos[i - 1] == pool.size() - k + (i - 1)) --i;
    if (i == 0) return;
    ++pos[i - 1];
    for (std::size_t j = i; j < k; ++j) pos[j] = pos[j - 1] + 1;
  }
}

}  // namespace

CertificateBlock PrivacyCertificate::to_block() const {
  return {n, T, k, sigma, delta_diameter, branch_a, branch_b, epsilon, upper_bound, dp_delta};
}

PrivacyCertificate PrivacyCertificate::from_block(const CertificateBlock& b) {
  PrivacyCertificate c;
  c.n = b.n;
  c.T = b.T;
  c.k = b.k;
  c.sigma = b.sigma;
  c.delta_diameter = b.delta;
  c.branch_a = b.branch_a;
  c.branch_b = b.branch_b;
  c.epsilon = b.epsilon;
  c.upper_bound = b.upper_bound;
  c.dp_delta = b.dp_delta;
  return c;
}

Eigen::VectorXd sample_laplace(double sigma, std::size_t d, Rng& rng) {
  require(sigma >= 0, "sample_laplace: sigma must be >= 0");
  require(d >= 1, "sample_laplace: d must be >= 1");
  Eigen::VectorXd eta(static_cast<Eigen::Index>(d));
  if (sigma == 0) return eta.setZero();
  for (Eigen::Index i = 0; i < eta.size(); ++i) eta[i] = laplace_draw(rng, sigma);
  return eta;
}

Eigen::VectorXd sample_laplace(double sigma, std::size_t d, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  return sample_laplace(sigma, d, rng);
}

PrivacyCertificate epsilon_mixup(std::uint64_t n, std::uint64_t T, std::uint64_t k, double sigma,
                                 double delta_diameter) {
  require(k >= 1, "epsilon_mixup: k must be >= 1");
  require(k <= n, "epsilon_mixup: k must be <= n");
  require(T >= 1, "epsilon_mixup: T must be >= 1");
  require(sigma > 0 && std::isfinite(sigma), "epsilon_mixup: sigma must be > 0");
  require(delta_diameter > 0 && std::isfinite(delta_diameter),
          "epsilon_mixup: delta must be > 0");

  const double kd = static_cast<double>(k);
  const double nd = static_cast<double>(n);
  const double a = delta_diameter / (kd * sigma);
  const double r = kd / nd;

  PrivacyCertificate c;
  c.n = n;
  c.T = T;
  c.k = k;
  c.sigma = sigma;
  c.delta_diameter = delta_diameter;
  if (a > kOverflowExponent) {
    c.branch_a = std::log(r) + a + std::log1p((nd / kd - 1.0) * std::exp(-a));
  } else {
    c.branch_a = std::log1p(r * std::expm1(a));
  }
  // 1 - r + r e^{-a} lies in (0, 1]; log1p keeps precision for tiny a.
  c.branch_b = -std::log1p(r * std::expm1(-a));
  c.epsilon = static_cast<double>(T) * std::max(c.branch_a, c.branch_b);
  c.upper_bound = static_cast<double>(T) * delta_diameter / (kd * sigma);
  c.dp_delta = 0.0;
  return c;
}

double epsilon_classical(std::uint64_t T, double sigma, double delta_diameter) {
  require(sigma > 0, "epsilon_classical: sigma must be > 0");
  require(delta_diameter > 0, "epsilon_classical: delta must be > 0");
  return static_cast<double>(T) * delta_diameter / sigma;
}

ReleasedDataset release_dataset(const LabeledDataset& ds, std::uint64_t k, double sigma,
                                std::uint64_t T, double delta_diameter, std::uint64_t seed,
                                unsigned threads) {
  require(!ds.empty(), "release_dataset: empty dataset");
  require(k >= 1 && k <= ds.size(), "release_dataset: k must satisfy 1 <= k <= n");
  require(sigma > 0, "release_dataset: sigma must be > 0");
  require(T >= 1, "release_dataset: T must be >= 1");

  ReleasedDataset out;
  out.certificate = epsilon_mixup(ds.size(), T, k, sigma, delta_diameter);
  out.data.name = ds.name + ".release";
  out.data.class_count = ds.class_count;
  out.data.examples.resize(T);
  const std::size_t d = ds.shape().size();
  const MixSpec spec{k, false};
  parallel_for(T, threads, [&](std::size_t t) {
    Rng rng = make_rng(derive_seed(seed, "release", t));
    const auto idx = draw_mixture(ds.size(), spec, rng);
    LabeledImage mixed = mix_equal(ds, idx);
    mixed.image.pixels += sample_laplace(sigma, d, rng);
    out.data.examples[t] = Example{std::move(mixed.image), std::move(mixed.label), false};
  });
  return out;
}

OracleSuprema density_ratio_oracle(const LabeledDataset& ds_small, std::size_t removed_index,
                                   std::size_t k, double sigma,
                                   std::span<const Eigen::VectorXd> grid) {
  const std::size_t n = ds_small.size();
  require(n <= 10, "density_ratio_oracle: n too large to enumerate (max 10)");
  require(k >= 1 && k < n, "density_ratio_oracle: need 1 <= k < n");
  require(removed_index < n, "density_ratio_oracle: removed index out of range");
  require(sigma > 0, "density_ratio_oracle: sigma must be > 0");
  require(!grid.empty(), "density_ratio_oracle: empty grid");

  std::vector<std::size_t> all(n), rest;
  for (std::size_t i = 0; i < n; ++i) {
    all[i] = i;
    if (i != removed_index) rest.push_back(i);
  }
  auto subset_means = [&](const std::vector<std::size_t>& pool) {
    std::vector<Eigen::VectorXd> means;
    for_each_subset(pool, k, [&](const std::vector<std::size_t>& s) {
      Eigen::VectorXd m = Eigen::VectorXd::Zero(ds_small.examples[s[0]].image.pixels.size());
      for (auto i : s) m += ds_small.examples[i].image.pixels;
      means.push_back(m / static_cast<double>(k));
    });
    return means;
  };
  const auto means_p = subset_means(all);
  const auto means_q = subset_means(rest);

  // log of a uniform mixture of Laplace densities centered at `means`.
  auto log_density = [&](const Eigen::VectorXd& z, const std::vector<Eigen::VectorXd>& means) {
    std::vector<double> terms;
    terms.reserve(means.size());
    const double norm = static_cast<double>(z.size()) * std::log(2.0 * sigma);
    for (const auto& m : means) terms.push_back(-(z - m).lpNorm<1>() / sigma - norm);
    return log_sum_exp(terms) - std::log(static_cast<double>(means.size()));
  };

  OracleSuprema sup{-std::numeric_limits<double>::infinity(),
                    -std::numeric_limits<double>::infinity()};
  for (const auto& z : grid) {
    const double lp = log_density(z, means_p);
    const double lq = log_density(z, means_q);
    sup.log_p_over_q = std::max(sup.log_p_over_q, lp - lq);
    sup.log_q_over_p = std::max(sup.log_q_over_p, lq - lp);
  }
  return sup;
}

double attack_cost_bound(const AttackBoundInput& in) {
  require(in.epsilon > 0 && std::isfinite(in.epsilon), "attack_cost_bound: epsilon must be > 0");
  require(in.b_cost > 0, "attack_cost_bound: cost bound B must be > 0");
  require(in.dp_delta >= 0, "attack_cost_bound: delta must be >= 0");
  const double slack = in.b_cost * in.dp_delta / std::expm1(in.epsilon);
  const double decay = std::exp(-static_cast<double>(in.l) * in.epsilon);
  if (in.sign == CostSign::kNonNegative) {
    require(in.j_clean >= 0, "attack_cost_bound: non-negative cost requires J >= 0");
    return std::max(decay * (in.j_clean + slack) - slack, 0.0);
  }
  require(in.j_clean <= 0 && in.j_clean >= -in.b_cost,
          "attack_cost_bound: non-positive cost requires -B <= J <= 0");
  return std::max(decay * (in.j_clean + slack) + slack, -in.b_cost);
}

std::string certificate_csv_header() {
  return "n,T,k,sigma,delta,branch_A,branch_B,epsilon,upper_bound";
}

std::string certificate_csv_row(const PrivacyCertificate& c) {
  return join_csv({format_count(c.n), format_count(c.T), format_count(c.k), format_real(c.sigma),
                   format_real(c.delta_diameter), format_real(c.branch_a),
                   format_real(c.branch_b), format_real(c.epsilon), format_real(c.upper_bound)});
}

}  // namespace dpmix
