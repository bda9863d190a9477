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

// dpmix command line. Exit status: 0 ok, 2 bad parameters or config,
// 3 training diverged, 1 anything else (I/O, format).

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "dpmix/attack.hpp"
#include "dpmix/harness.hpp"
#include "dpmix/privacy.hpp"
#include "dpmix/trainer.hpp"

namespace fs = std::filesystem;
using namespace dpmix;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  std::string out_dir = ".";
  unsigned threads = 1;
};

fs::path in_out_dir(const Globals& g, const std::string& name) {
  fs::create_directories(g.out_dir);
  return fs::path(g.out_dir) / name;
}

void print_certificate(const PrivacyCertificate& c) {
  std::cout << "epsilon = " << format_real(c.epsilon) << "\n"
            << "branch_A = " << format_real(c.branch_a) << "\n"
            << "branch_B = " << format_real(c.branch_b) << "\n"
            << "upper_bound = " << format_real(c.upper_bound) << "\n"
            << "delta_dp = 0\n"
            << certificate_csv_header() << "\n"
            << certificate_csv_row(c) << "\n";
}

// ---- ingest -----------------------------------------------------------------

struct IngestArgs {
  std::string format = "blobs";
  std::string images, labels, path, out = "data.dpmx";
  BlobSpec blobs;
  std::size_t side = 8;
};

void cmd_ingest(const Globals& g, const IngestArgs& a) {
  LabeledDataset ds;
  if (a.format == "idx") {
    require(!a.images.empty() && !a.labels.empty(), "ingest: --images and --labels are required");
    ds = load_idx(a.images, a.labels);
  } else if (a.format == "cifar") {
    require(!a.path.empty(), "ingest: --path is required");
    ds = load_cifar_binary(a.path);
  } else if (a.format == "blobs") {
    BlobSpec spec = a.blobs;
    spec.shape.height = spec.shape.width = a.side;
    spec.seed = g.seed;
    ds = synth_blobs(spec);
  } else {
    throw InvalidArgument("ingest: unknown format '" + a.format + "'");
  }
  const auto out = in_out_dir(g, a.out);
  write_container(out, ds);
  std::cout << "wrote " << ds.size() << " examples, " << ds.class_count << " classes, shape "
            << ds.shape().height << "x" << ds.shape().width << "x" << ds.shape().channels << " to "
            << out.string() << "\n";
}

// ---- release ----------------------------------------------------------------

struct ReleaseArgs {
  std::string in, out = "release.dpmx";
  std::uint64_t k = 2, T = 0;
  std::string sigma = "16/255";
  double delta = 1.0;
};

void cmd_release(const Globals& g, const ReleaseArgs& a) {
  const auto src = read_container(fs::path(a.in));
  const std::uint64_t T = a.T ? a.T : src.data.size();
  auto rel = release_dataset(src.data, a.k, parse_scalar(a.sigma), T, a.delta, g.seed, g.threads);
  const auto out = in_out_dir(g, a.out);
  write_container(out, rel.data, rel.certificate.to_block());
  std::cout << "released " << T << " samples to " << out.string() << " ("
            << PrivacyCertificate::kScope << ")\n";
  print_certificate(rel.certificate);
}

// ---- sweep ------------------------------------------------------------------

struct SweepArgs {
  std::uint64_t n = 50000, T = 50000, k_min = 1, k_max = 8;
  std::vector<std::string> sigmas = {"2/255", "4/255", "8/255", "16/255", "32/255"};
  double delta = 1.0;
  std::string from_csv;
};

void cmd_sweep(const Globals& g, const SweepArgs& a) {
  const auto svg_path = in_out_dir(g, "epsilon_sweep.svg");
  if (!a.from_csv.empty()) {
    write_text(svg_path, render_epsilon_svg(read_csv(a.from_csv)));
    std::cout << "rendered " << svg_path.string() << "\n";
    return;
  }
  require(a.k_min >= 1 && a.k_min <= a.k_max, "sweep-epsilon: need 1 <= k-min <= k-max");
  require(!a.sigmas.empty(), "sweep-epsilon: empty sigma list");
  std::vector<std::uint64_t> ks;
  for (auto k = a.k_min; k <= a.k_max; ++k) ks.push_back(k);
  std::vector<double> sigmas;
  for (const auto& s : a.sigmas) sigmas.push_back(parse_scalar(s));
  const std::string csv = sweep_csv(sweep_epsilon(a.n, a.T, ks, sigmas, a.delta));
  const auto csv_path = in_out_dir(g, "epsilon_sweep.csv");
  write_text(csv_path, csv);
  write_text(svg_path, render_epsilon_svg(parse_csv(csv)));
  std::cout << "wrote " << csv_path.string() << " and " << svg_path.string() << "\n";
}

// ---- poison -----------------------------------------------------------------

struct PoisonArgs {
  std::string in, out = "poisoned.dpmx", test_in, test_out = "patched_test.dpmx";
  BackdoorSpec spec;
  std::size_t patch = 4;
};

void cmd_poison(const Globals& g, const PoisonArgs& a) {
  const auto src = read_container(fs::path(a.in));
  BackdoorSpec spec = a.spec;
  spec.patch_h = spec.patch_w = a.patch;
  spec.seed = g.seed;
  const ImageTensor patch = gen_patch(spec, channel_stats(src.data));
  const auto poisoned = apply_backdoor(src.data, spec, patch);
  const auto out = in_out_dir(g, a.out);
  write_container(out, poisoned);
  std::size_t flagged = 0;
  for (const auto& e : poisoned.examples) flagged += e.poisoned ? 1 : 0;
  std::cout << "poisoned " << flagged << " of " << poisoned.size() << " examples -> " << out.string()
            << "\n";
  if (!a.test_in.empty()) {
    const auto test = read_container(fs::path(a.test_in));
    const auto test_out = in_out_dir(g, a.test_out);
    write_container(test_out, patch_test_set(test.data, spec, patch));
    std::cout << "patched victim test set -> " << test_out.string() << "\n";
  }
}

// ---- train / evaluate -------------------------------------------------------

struct TrainArgs {
  std::string in, out = "model.dpmc", eval, arch = "smallconv", augmentation = "none";
  std::vector<std::size_t> hidden = {64};
  TrainConfig cfg;
  std::string noise = "0";
  bool dp = false;
  DpSgdConfig dp_cfg;
};

void cmd_train(const Globals& g, const TrainArgs& a) {
  const auto src = read_container(fs::path(a.in));
  const auto& ds = src.data;
  ModelSpec spec;
  if (a.arch == "mlp") {
    spec = ModelSpec::mlp(ds.shape(), ds.class_count, a.hidden);
  } else if (a.arch == "smallconv") {
    spec = ModelSpec::small_conv(ds.shape(), ds.class_count);
  } else {
    throw InvalidArgument("train: unknown architecture '" + a.arch + "'");
  }
  TrainConfig cfg = a.cfg;
  cfg.seed = g.seed;
  cfg.policy.kind = parse_augmentation(a.augmentation);
  cfg.policy.input_noise_sigma = parse_scalar(a.noise);
  if (a.dp) cfg.dp_sgd = a.dp_cfg;
  cfg.validate();
  TrainHooks hooks;
  std::optional<LabeledDataset> eval;
  if (!a.eval.empty()) {
    eval = read_container(fs::path(a.eval)).data;
    hooks.eval = &*eval;
  }
  const Model model = train(ds, spec, cfg, hooks);
  const auto out = in_out_dir(g, a.out);
  save_checkpoint(out, model);
  write_text(in_out_dir(g, "training_log.csv"), training_log_csv(model));
  const auto& last = model.log.back();
  std::cout << "trained " << model.log.size() << " epochs, final loss " << format_real(last.loss)
            << ", train acc " << format_real(last.train_acc) << " -> " << out.string() << "\n";
}

struct EvalArgs {
  std::string model, test, patched;
  std::size_t target = 0;
};

void cmd_evaluate(const Globals&, const EvalArgs& a) {
  const Model model = load_checkpoint(a.model);
  const auto test = read_container(fs::path(a.test)).data;
  std::cout << "clean_accuracy = " << format_real(clean_accuracy(model, test)) << "\n";
  if (!a.patched.empty()) {
    const auto patched = read_container(fs::path(a.patched)).data;
    std::cout << "poison_success = " << format_real(poison_success(model, patched, a.target)) << "\n";
  }
}

// ---- run / bound ------------------------------------------------------------

void cmd_run(const Globals& g, const std::string& config_path, bool seed_given, bool threads_given) {
  ExperimentConfig cfg = ExperimentConfig::parse(read_text(config_path));
  if (seed_given) cfg.master_seed = g.seed;
  if (threads_given) cfg.threads = g.threads;
  const auto report = run_experiment(cfg);
  write_report(g.out_dir, report);
  std::cout << summary_text(report);
}

struct BoundArgs {
  AttackBoundInput in;
  std::string sign = "nonnegative";
};

void cmd_bound(const BoundArgs& a) {
  AttackBoundInput in = a.in;
  if (a.sign == "nonnegative") {
    in.sign = CostSign::kNonNegative;
  } else if (a.sign == "nonpositive") {
    in.sign = CostSign::kNonPositive;
  } else {
    throw InvalidArgument("bound: --sign must be nonnegative or nonpositive");
  }
  const double b = attack_cost_bound(in);
  std::cout << "bound = " << format_real(b) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dpmix: certified mixup-plus-noise releases and poisoning experiments"};
  app.require_subcommand(1);
  Globals g;
  auto* seed_opt = app.add_option("--seed", g.seed, "master seed")->capture_default_str();
  app.add_option("--out-dir", g.out_dir, "output directory")->capture_default_str();
  auto* threads_opt =
      app.add_option("--threads", g.threads, "worker threads")->check(CLI::Range(1u, 1024u));

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "load a dataset into the dpmx container");
  c_ingest->add_option("--format", ingest.format, "idx, cifar or blobs")->capture_default_str();
  c_ingest->add_option("--images", ingest.images, "idx image file");
  c_ingest->add_option("--labels", ingest.labels, "idx label file");
  c_ingest->add_option("--path", ingest.path, "cifar binary batch");
  c_ingest->add_option("--classes", ingest.blobs.classes)->capture_default_str();
  c_ingest->add_option("--per-class", ingest.blobs.per_class)->capture_default_str();
  c_ingest->add_option("--side", ingest.side)->capture_default_str();
  c_ingest->add_option("--separation", ingest.blobs.separation)->capture_default_str();
  c_ingest->add_option("--noise", ingest.blobs.noise)->capture_default_str();
  c_ingest->add_option("--out", ingest.out, "file name under --out-dir")->capture_default_str();

  ReleaseArgs release;
  auto* c_release = app.add_subcommand("release", "noisy k-mixup release with certificate");
  c_release->add_option("--in", release.in)->required();
  c_release->add_option("--k", release.k)->capture_default_str();
  c_release->add_option("--sigma", release.sigma, "Laplace scale, fractions allowed")->capture_default_str();
  c_release->add_option("--T", release.T, "samples; 0 means n")->capture_default_str();
  c_release->add_option("--delta", release.delta)->capture_default_str();
  c_release->add_option("--out", release.out)->capture_default_str();

  std::uint64_t acc_n = 0, acc_T = 0, acc_k = 0;
  std::string acc_sigma;
  double acc_delta = 1.0;
  auto* c_acc = app.add_subcommand("accountant", "privacy loss of a release");
  c_acc->add_option("--n", acc_n)->required();
  c_acc->add_option("--T", acc_T)->required();
  c_acc->add_option("--k", acc_k)->required();
  c_acc->add_option("--sigma", acc_sigma, "Laplace scale, fractions allowed")->required();
  c_acc->add_option("--delta", acc_delta)->capture_default_str();

  SweepArgs sweep;
  auto* c_sweep = app.add_subcommand("sweep-epsilon", "epsilon over k and sigma, CSV and SVG");
  c_sweep->add_option("--n", sweep.n)->capture_default_str();
  c_sweep->add_option("--T", sweep.T)->capture_default_str();
  c_sweep->add_option("--k-min", sweep.k_min)->capture_default_str();
  c_sweep->add_option("--k-max", sweep.k_max)->capture_default_str();
  c_sweep->add_option("--sigma", sweep.sigmas, "noise scales, fractions allowed")->delimiter(',');
  c_sweep->add_option("--delta", sweep.delta)->capture_default_str();
  c_sweep->add_option("--from-csv", sweep.from_csv, "re-render the SVG from an existing CSV");

  PoisonArgs poison;
  auto* c_poison = app.add_subcommand("poison", "stamp a backdoor trigger");
  c_poison->add_option("--in", poison.in)->required();
  c_poison->add_option("--out", poison.out)->capture_default_str();
  c_poison->add_option("--test-in", poison.test_in, "test container to patch");
  c_poison->add_option("--test-out", poison.test_out)->capture_default_str();
  c_poison->add_option("--target", poison.spec.target_class)->capture_default_str();
  c_poison->add_option("--victim", poison.spec.victim_class)->capture_default_str();
  c_poison->add_option("--fraction", poison.spec.poison_fraction)->capture_default_str();
  c_poison->add_option("--patch", poison.patch)->capture_default_str();
  c_poison->add_option("--p", poison.spec.bernoulli_p)->capture_default_str();

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "train a classifier on a container");
  c_train->add_option("--in", tr.in)->required();
  c_train->add_option("--out", tr.out)->capture_default_str();
  c_train->add_option("--eval", tr.eval, "test container evaluated after each epoch");
  c_train->add_option("--arch", tr.arch, "smallconv or mlp")->capture_default_str();
  c_train->add_option("--hidden", tr.hidden)->delimiter(',');
  c_train->add_option("--epochs", tr.cfg.epochs)->capture_default_str();
  c_train->add_option("--batch", tr.cfg.batch)->capture_default_str();
  c_train->add_option("--lr", tr.cfg.lr)->capture_default_str();
  c_train->add_option("--momentum", tr.cfg.momentum)->capture_default_str();
  c_train->add_option("--weight-decay", tr.cfg.weight_decay)->capture_default_str();
  c_train->add_option("--augmentation", tr.augmentation)->capture_default_str();
  c_train->add_option("--mixup-k", tr.cfg.policy.mixup_k)->capture_default_str();
  c_train->add_option("--input-noise", tr.noise)->capture_default_str();
  c_train->add_flag("--dp-sgd", tr.dp);
  c_train->add_option("--clip-norm", tr.dp_cfg.clip_norm)->capture_default_str();
  c_train->add_option("--gauss-noise", tr.dp_cfg.gauss_noise)->capture_default_str();

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("evaluate", "clean accuracy and poison success");
  c_eval->add_option("--model", ev.model)->required();
  c_eval->add_option("--test", ev.test)->required();
  c_eval->add_option("--patched", ev.patched, "patched victim container");
  c_eval->add_option("--target", ev.target)->capture_default_str();

  std::string config_path;
  auto* c_run = app.add_subcommand("run", "run an experiment config");
  c_run->add_option("config", config_path)->required();

  BoundArgs bound;
  auto* c_bound = app.add_subcommand("bound", "attack cost lower bound against a DP learner");
  c_bound->add_option("--J", bound.in.j_clean, "clean attack cost")->required();
  c_bound->add_option("--B", bound.in.b_cost, "cost magnitude bound")->capture_default_str();
  c_bound->add_option("--epsilon", bound.in.epsilon)->required();
  c_bound->add_option("--delta", bound.in.dp_delta)->capture_default_str();
  c_bound->add_option("--l", bound.in.l)->required();
  c_bound->add_option("--sign", bound.sign, "nonnegative or nonpositive")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*c_ingest) cmd_ingest(g, ingest);
    if (*c_release) cmd_release(g, release);
    if (*c_acc) {
      const auto c = epsilon_mixup(acc_n, acc_T, acc_k, parse_scalar(acc_sigma), acc_delta);
      print_certificate(c);
    }
    if (*c_sweep) cmd_sweep(g, sweep);
    if (*c_poison) cmd_poison(g, poison);
    if (*c_train) cmd_train(g, tr);
    if (*c_eval) cmd_evaluate(g, ev);
    if (*c_run) cmd_run(g, config_path, seed_opt->count() > 0, threads_opt->count() > 0);
    if (*c_bound) cmd_bound(bound);
  } catch (const TrialFailed& e) {
    std::cerr << "error: " << e.what() << " (trial " << e.trial() << ")\n";
    return 3;
  } catch (const TrainingDiverged& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
