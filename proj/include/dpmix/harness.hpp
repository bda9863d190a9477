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

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dpmix/attack.hpp"
#include "dpmix/config.hpp"
#include "dpmix/csv.hpp"
#include "dpmix/datastore.hpp"
#include "dpmix/defense.hpp"
#include "dpmix/privacy.hpp"
#include "dpmix/trainer.hpp"

namespace dpmix {

enum class DataSource { kBlobs, kIdx, kCifar, kContainer };
enum class AttackKind { kNone, kBackdoor, kFeatureCollision };
enum class DefenseKind {
  kNone,
  kAugmentation,
  kSpectral,
  kActivationClustering,
  kDeepKnn,
  kDpSgd,
  kCertifiedRelease
};

std::string to_string(DefenseKind kind);

struct DataConfig {
  DataSource source = DataSource::kBlobs;
  BlobSpec blobs;
  std::string images;  // idx image file
  std::string labels;  // idx label file
  std::string path;    // cifar binary or container
  double train_fraction = 0.8;
};

struct AttackConfig {
  AttackKind kind = AttackKind::kBackdoor;
  BackdoorSpec backdoor;  // seed is re-derived per trial
  CollisionSpec collision;
  std::size_t bases = 5;
  std::size_t pretrain_epochs = 10;
};

struct DefenseConfig {
  DefenseKind kind = DefenseKind::kNone;
  double remove_fraction = 0.15;
  ActivationClusterConfig clustering;
  std::size_t knn_k = 5;
  DpSgdConfig dp_sgd;
  std::size_t release_k = 2;
  double release_sigma = 16.0 / 255.0;
  std::size_t release_T = 0;  // 0: same as the training set size
  double delta = 1.0;         // diameter handed to the accountant
};

struct ExperimentConfig {
  DataConfig data;
  AttackConfig attack;
  DefenseConfig defense;
  ModelSpec model;  // input shape and class count are filled from the data
  TrainConfig trainer;
  std::size_t trials = 1;
  std::uint64_t master_seed = 0;
  unsigned threads = 1;
  std::vector<std::uint64_t> sweep_k;  // overrides mixup k or release k
  std::vector<double> sweep_sigma;     // overrides input noise or release sigma

  void validate() const;
  static ExperimentConfig parse(std::string_view text);
  static const std::set<std::string>& allowed_keys();
};

/// One row of an epsilon sweep or an experiment report.
struct SweepRow {
  std::string policy;
  std::optional<std::uint64_t> k;
  std::optional<double> sigma;
  std::uint64_t n = 0;
  std::uint64_t T = 0;
  double delta = 1.0;
  std::optional<double> epsilon, branch_a, branch_b, upper_bound;
  std::optional<double> poison_success, clean_accuracy;
  std::uint64_t trial = 0;
  std::uint64_t seed = 0;
};

std::string sweep_csv_header();
std::string sweep_csv(const std::vector<SweepRow>& rows);
std::vector<SweepRow> parse_sweep_csv(const CsvTable& table);

/// Recomputes epsilon, A, B and the upper bound for every row that carries
/// them; returns the largest relative discrepancy.
double verify_sweep_rows(const std::vector<SweepRow>& rows);

std::vector<SweepRow> sweep_epsilon(std::uint64_t n, std::uint64_t T,
                                    const std::vector<std::uint64_t>& ks,
                                    const std::vector<double>& sigmas, double delta);

/// Line chart, one curve per sigma, k on x and log10(epsilon) on y. Depends
/// only on the CSV text.
std::string render_epsilon_svg(const CsvTable& table);

struct SummaryRow {
  std::string policy;
  std::optional<std::uint64_t> k;
  std::optional<double> sigma;
  std::size_t trials = 0;
  double clean_mean = 0, clean_std = 0;
  std::optional<double> poison_mean, poison_std;
};

struct ExperimentReport {
  std::vector<SweepRow> rows;  // grid-major, trial order
  std::vector<SummaryRow> summary;
  std::optional<PrivacyCertificate> certificate;  // last certified release, if any
  std::string header;                             // human-readable notes
};

/// A trial failed to train; carries the trial index for the exit status.
class TrialFailed : public Error {
 public:
  TrialFailed(const std::string& what, std::size_t trial) : Error(what), trial_(trial) {}
  std::size_t trial() const { return trial_; }

 private:
  std::size_t trial_;
};

ExperimentReport run_experiment(const ExperimentConfig& cfg);

std::string summary_text(const ExperimentReport& report);

/// Writes report.csv and summary.txt (deterministic) plus run_meta.txt
/// (timestamped) into out_dir.
void write_report(const std::filesystem::path& out_dir, const ExperimentReport& report);

}  // namespace dpmix
