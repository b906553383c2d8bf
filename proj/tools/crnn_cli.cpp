// Command-line front end: train, certify, sweep, compare, oracle.
//
// Exit codes: 0 success, 1 other failure, 2 configuration or usage error,
// 3 precondition refusal (model not contracting), 4 numerical failure.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <sstream>

#include "crnn/config.hpp"
#include "crnn/experiment.hpp"
#include "crnn/lstm_io.hpp"
#include "crnn/simplex.hpp"

namespace {

using namespace crnn;

constexpr int kExitOther = 1;
constexpr int kExitConfig = 2;
constexpr int kExitRefused = 3;
constexpr int kExitNumerical = 4;

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<double> tau;
  std::string stability;
  bool strict = false;
  std::string out;
  std::string dataset;
  std::optional<int> epochs;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_path, "key = value configuration file");
  cmd->add_option("--seed", o.seed, "training seed");
  cmd->add_option("--tau", o.tau, "projection scaling factor (> 1)");
  cmd->add_option("--stability", o.stability, "on, off or both");
  cmd->add_flag("--strict-constraint", o.strict, "also constrain the input matrices");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--dataset", o.dataset, "synth:<seed> or mnist:<dir>");
  cmd->add_option("--epochs", o.epochs, "training epochs");
}

ExperimentConfig resolve(const CommonOptions& o) {
  ExperimentConfig c = o.config_path.empty() ? ExperimentConfig{} : load_config(o.config_path);
  try {
    if (o.seed) c.train.seed = *o.seed;
    if (o.tau) c.train.tau = *o.tau;
    if (!o.stability.empty()) c.stability = parse_stability_choice(o.stability);
    if (o.strict) {
      c.train.mode = ConstraintMode::kStrict;
      c.estimation.mode = ConstraintMode::kStrict;
    }
    if (!o.out.empty()) c.out = o.out;
    if (!o.dataset.empty()) c.dataset = parse_dataset_selector(o.dataset);
    if (o.epochs) c.train.epochs = *o.epochs;
  } catch (const std::invalid_argument& e) {
    fail(ErrorCode::kConfig, std::string("command line: ") + e.what());
  }
  c.validate();
  return c;
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(parse_double(item));
  }
  return out;
}

int cmd_train(const CommonOptions& o) {
  const ExperimentConfig config = resolve(o);
  const SequenceDataset data = build_dataset(config);
  write_text(config.out / "dataset_manifest.txt", data.manifest());
  std::vector<bool> runs;
  if (config.stability != StabilityChoice::kOff) runs.push_back(true);
  if (config.stability != StabilityChoice::kOn) runs.push_back(false);

  std::vector<TrainRun> done;
  for (bool stable : runs) {
    const std::string tag = stable ? "stable" : "unconstrained";
    TrainRun run = run_training(config, data, stable);
    write_text(config.out / ("history_" + tag + ".csv"), run.result.history.to_csv());
    save_checkpoint(make_checkpoint(run, config), config.out / (tag + ".ckpt"));
    const auto& last = run.result.history.epochs.back();
    std::cout << tag << ": epochs=" << last.epoch << " loss=" << format_double(last.loss)
              << " train_accuracy=" << format_double(last.train_accuracy)
              << " test_accuracy=" << format_double(accuracy(run.result.weights, data.test))
              << '\n';
    done.push_back(std::move(run));
  }
  if (done.size() == 2) {
    std::ostringstream cmp;
    cmp << "epoch,loss_stable,train_accuracy_stable,lambda_hat_stable,"
           "loss_unconstrained,train_accuracy_unconstrained,lambda_hat_unconstrained\n";
    const auto& s = done[0].result.history.epochs;
    const auto& u = done[1].result.history.epochs;
    for (std::size_t i = 0; i < std::min(s.size(), u.size()); ++i) {
      cmp << s[i].epoch << ',' << format_double(s[i].loss) << ','
          << format_double(s[i].train_accuracy) << ',' << format_double(s[i].lambda_hat) << ','
          << format_double(u[i].loss) << ',' << format_double(u[i].train_accuracy) << ','
          << format_double(u[i].lambda_hat) << '\n';
    }
    write_text(config.out / "stability_comparison.csv", cmp.str());
  }
  write_text(config.out / "manifest_train.txt",
             run_manifest("train", config, {{"train_sequences", std::to_string(data.train.size())},
                                            {"test_sequences", std::to_string(data.test.size())}}));
  return 0;
}

int cmd_certify(const CommonOptions& o, const std::string& checkpoint,
                std::optional<std::size_t> radius_subsample) {
  ExperimentConfig config = resolve(o);
  if (radius_subsample) config.estimation.radius_subsample = *radius_subsample;
  const SequenceDataset data = build_dataset(config);
  const Checkpoint ck = load_checkpoint(checkpoint);
  const CertifyOutput out =
      certify_model(ck.weights, data.train, config.estimation, config.inflation);
  write_text(config.out / "stability.txt", out.stability.to_text());
  write_text(config.out / "certificate.txt", out.certificate.to_text());
  write_text(config.out / "manifest_certify.txt",
             run_manifest("certify", config, {{"checkpoint", checkpoint}}));
  const RobustnessCertificate& cert = out.certificate;
  std::cout << "lambda_hat=" << format_double(cert.lambda_hat)
            << " kappa_hat=" << format_double(cert.kappa_hat)
            << " wc_norm=" << format_double(cert.wc_norm) << " eta=" << format_double(cert.eta)
            << '\n';
  std::cout << "class,nominal_count,epsilon,budget\n";
  for (const ClassCertificate& c : cert.classes) {
    std::cout << c.cls + 1 << ',' << c.nominal_count << ',';
    if (c.epsilon) {
      std::cout << format_double(*c.epsilon) << ',' << format_double(certified_budget(cert, c.cls));
    } else {
      std::cout << "undefined,undefined";
    }
    std::cout << '\n';
  }
  if (cert.radius_subsampled) {
    std::cout << "# radii computed on a subsample of the nominal sets: upper bounds\n";
  }
  std::cout << "# full certificate: " << (config.out / "certificate.txt").string() << '\n';
  if (cert.degenerate()) {
    std::cout << "# degenerate certificate: eta = 0, budgets are infinite\n";
  }
  return 0;
}

int cmd_sweep(const CommonOptions& o, const std::string& checkpoint, const std::string& cert_path,
              const std::string& grid_text) {
  ExperimentConfig config = resolve(o);
  if (!grid_text.empty()) config.sweep_grid = parse_list(grid_text);
  config.validate();
  const SequenceDataset data = build_dataset(config);
  const Checkpoint ck = load_checkpoint(checkpoint);
  const RobustnessCertificate cert = RobustnessCertificate::from_text(read_text(cert_path));
  const auto grid =
      sweep_grid(config.sweep_grid, cert, config.budget_fractions, ck.weights.input_dim());
  const SweepTable table = run_sweep(ck.weights, cert, data.train, grid);
  write_text(config.out / "sweep.csv", table.to_csv());
  write_text(config.out / "manifest_sweep.txt",
             run_manifest("sweep", config, {{"checkpoint", checkpoint}, {"certificate", cert_path}}));
  std::cout << table.to_csv();
  return 0;
}

int cmd_compare(const CommonOptions& o, const std::vector<std::string>& checkpoints) {
  const ExperimentConfig config = resolve(o);
  require(checkpoints.size() >= 2, ErrorCode::kConfig, "compare needs at least two checkpoints");
  const SequenceDataset data = build_dataset(config);
  std::vector<CompareRow> rows;
  std::optional<std::string> dataset_tag;
  for (const std::string& path : checkpoints) {
    const Checkpoint ck = load_checkpoint(path);
    const auto tag = ck.meta_value("dataset");
    if (tag && dataset_tag) {
      require(*tag == *dataset_tag, ErrorCode::kInvalidInput,
              "checkpoints were trained on different datasets: " + *dataset_tag + " vs " + *tag);
    }
    if (tag) dataset_tag = tag;
    rows.push_back(compare_model(std::filesystem::path(path).stem().string(), ck, data,
                                 config.compare_perturbation));
  }
  const std::string csv = compare_csv(rows);
  write_text(config.out / "compare.csv", csv);
  write_text(config.out / "manifest_compare.txt", run_manifest("compare", config));
  std::cout << csv;
  bool stable_smaller = true;
  bool have_both = false;
  for (const auto& s : rows) {
    if (s.stability != "on") continue;
    for (const auto& u : rows) {
      if (u.stability != "off") continue;
      have_both = true;
      stable_smaller = stable_smaller && s.loss <= u.loss;
    }
  }
  if (have_both) {
    std::cout << "# stable_models_lose_less=" << (stable_smaller ? "true" : "false") << '\n';
  }
  return 0;
}

int cmd_oracle(const std::string& p_text, int cell, double step) {
  const std::vector<double> values = parse_list(p_text);
  const Eigen::VectorXd p = Eigen::Map<const Eigen::VectorXd>(values.data(),
                                                              static_cast<Eigen::Index>(values.size()));
  require(cell >= 1 && cell <= p.size(), ErrorCode::kIndexOutOfRange,
          "cell must be in [1, " + std::to_string(p.size()) + "]");
  const double grid = grid_oracle_distance(p, cell - 1, step);
  const double exact = cell_distance(p, cell - 1);
  std::cout << "cell_distance=" << format_double(exact) << '\n'
            << "grid_oracle_distance=" << format_double(grid) << '\n'
            << "gap=" << format_double(std::abs(exact - grid)) << '\n'
            << "within_two_steps=" << (std::abs(exact - grid) <= 2 * step ? "true" : "false")
            << '\n';
  return 0;
}

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfig: return kExitConfig;
    case ErrorCode::kUnstableModel: return kExitRefused;
    case ErrorCode::kNumerical:
    case ErrorCode::kDiverged: return kExitNumerical;
    default: return kExitOther;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Certified robustness for LSTM sequence classifiers"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  CommonOptions common;
  std::string checkpoint;
  std::optional<std::size_t> radius_subsample;
  std::string certificate;
  std::string grid;
  std::vector<std::string> checkpoints;
  std::string p_text;
  int cell = 1;
  double step = 1e-3;

  auto* train = app.add_subcommand("train", "train stable and/or unconstrained models");
  add_common(train, common);
  auto* certify = app.add_subcommand("certify", "estimate constants and write a certificate");
  add_common(certify, common);
  certify->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
  certify->add_option("--radius-subsample", radius_subsample,
                      "radii over at most N nominal beliefs per class (upper bound)");
  auto* sweep = app.add_subcommand("sweep", "constant-shift accuracy sweep");
  add_common(sweep, common);
  sweep->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
  sweep->add_option("--certificate", certificate, "certificate from 'certify'")->required();
  sweep->add_option("--grid", grid, "comma-separated xi values (overrides sweep.grid)");
  auto* compare = app.add_subcommand("compare", "unperturbed vs perturbed accuracy table");
  add_common(compare, common);
  compare->add_option("--checkpoint", checkpoints, "checkpoint (repeat, at least two)")
      ->required();
  auto* oracle = app.add_subcommand("oracle", "cell distance vs brute-force grid oracle");
  oracle->add_option("--p", p_text, "belief vector, comma-separated")->required();
  oracle->add_option("--cell", cell, "cell index, 1-based")->required();
  oracle->add_option("--step", step, "grid spacing");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (*train) return cmd_train(common);
    if (*certify) return cmd_certify(common, checkpoint, radius_subsample);
    if (*sweep) return cmd_sweep(common, checkpoint, certificate, grid);
    if (*compare) return cmd_compare(common, checkpoints);
    if (*oracle) return cmd_oracle(p_text, cell, step);
  } catch (const Error& e) {
    std::cerr << "crnn: " << e.what() << '\n';
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "crnn: " << e.what() << '\n';
    return kExitOther;
  }
  return kExitOther;
}
