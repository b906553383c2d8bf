#include "crnn/experiment.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "crnn/lstm_io.hpp"
#include "crnn/parallel.hpp"

namespace crnn {

std::vector<GridImage> balanced_subset(const std::vector<GridImage>& images, int m, int per_class) {
  if (per_class == 0) return images;
  std::vector<int> taken(static_cast<std::size_t>(m), 0);
  std::vector<GridImage> out;
  for (const GridImage& img : images) {
    require(img.label >= 0 && img.label < m, ErrorCode::kInvalidInput,
            "image " + img.id + " has label outside [0, m)");
    if (taken[static_cast<std::size_t>(img.label)]++ < per_class) out.push_back(img);
  }
  return out;
}

SequenceDataset build_dataset(const ExperimentConfig& config) {
  config.validate();
  SequenceDataset data;
  if (config.dataset.kind == DatasetSelector::Kind::kSynthetic) {
    ImageSplit split = synth_maps(config.dataset.seed, config.synth_classes, config.synth_height,
                                  config.synth_width, config.synth_train_per_class,
                                  config.synth_test_per_class);
    data = build_sequences(std::move(split.train), std::move(split.test), config.synth_classes,
                           config.sequence);
  } else {
    const auto& dir = config.dataset.dir;
    auto train = load_idx(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte", "train");
    auto test = load_idx(dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte", "test");
    int m = 0;
    for (const auto* set : {&train, &test}) {
      for (const GridImage& img : *set) m = std::max(m, img.label + 1);
    }
    data = build_sequences(balanced_subset(train, m, config.mnist_train_per_class),
                           balanced_subset(test, m, config.mnist_test_per_class), m,
                           config.sequence);
  }
  const auto a = static_cast<int>(data.featurizer.feature_dim());
  if (config.expect_input_dim && *config.expect_input_dim != a) {
    fail(ErrorCode::kConfig, "field 'model.input': dataset produces a = " + std::to_string(a) +
                                 ", config says " + std::to_string(*config.expect_input_dim));
  }
  if (config.expect_classes && *config.expect_classes != data.num_classes) {
    fail(ErrorCode::kConfig, "field 'model.classes': dataset has m = " +
                                 std::to_string(data.num_classes) + ", config says " +
                                 std::to_string(*config.expect_classes));
  }
  return data;
}

TrainRun run_training(const ExperimentConfig& config, const SequenceDataset& data, bool stability,
                      const StepObserver& observer) {
  TrainRun run;
  run.stability = stability;
  run.config = config.train;
  run.config.stability_enabled = stability;
  const LstmWeights init = init_weights(data.featurizer.feature_dim(), config.hidden,
                                        data.num_classes, run.config.seed, run.config.forget_bias);
  run.result = train(init, data.train, run.config, observer);
  return run;
}

Checkpoint make_checkpoint(const TrainRun& run, const ExperimentConfig& config) {
  Checkpoint ck;
  ck.weights = run.result.weights;
  ck.adam = run.result.adam;
  ck.meta = {
      {"dataset", config.dataset.to_string()},
      {"stability", run.stability ? "on" : "off"},
      {"tau", format_double(run.config.tau)},
      {"constraint", std::string(to_string(run.config.mode))},
      {"seed", std::to_string(run.config.seed)},
      {"epochs", std::to_string(run.config.epochs)},
  };
  return ck;
}

CertifyOutput certify_model(const LstmWeights& w, const std::vector<Sequence>& train,
                            const EstimationOptions& options, double inflation) {
  CertifyOutput out;
  out.stability = stability_report(w, train, options);
  if (!(out.stability.lambda_hat < 1.0)) {
    fail(ErrorCode::kUnstableModel, "refusing to certify: estimated contraction lambda_hat = " +
                                        format_double(out.stability.lambda_hat) + " is not < 1");
  }
  const Eigen::Index m = w.num_classes();
  out.certificate = make_certificate(out.stability.kappa_hat, out.stability.lambda_hat,
                                     out.stability.wc_norm, m, inflation);
  for (int k = 0; k < m; ++k) {
    const NominalSet nominal = nominal_set(w, train, k);
    ClassCertificate cls;
    cls.cls = k;
    cls.nominal_count = nominal.members.size();
    cls.nominal_ids = nominal.ids;
    if (!nominal.empty()) {
      // Evenly spaced subsample when requested; the minimum over a subset
      // can only be larger, so the certificate is flagged.
      std::vector<std::size_t> used = nominal.members;
      const std::size_t cap = options.radius_subsample;
      if (cap > 0 && used.size() > cap) {
        std::vector<std::size_t> picked;
        for (std::size_t i = 0; i < cap; ++i) picked.push_back(used[i * used.size() / cap]);
        used = std::move(picked);
        out.certificate.radius_subsampled = true;
      }
      std::vector<Eigen::VectorXd> beliefs(used.size());
      parallel_for(beliefs.size(), [&](std::size_t i) {
        beliefs[i] = run_sequence(w, train[used[i]]).belief;
      });
      cls.epsilon = robustness_radius(beliefs, k, m);
    }
    out.certificate.classes.push_back(std::move(cls));
  }
  return out;
}

std::vector<double> sweep_grid(const std::vector<double>& base, const RobustnessCertificate& cert,
                               const std::vector<double>& fractions, Eigen::Index input_dim) {
  require(!base.empty(), ErrorCode::kInvalidInput, "sweep grid is empty");
  std::vector<double> grid = base;
  const double root_a = std::sqrt(static_cast<double>(input_dim));
  for (const ClassCertificate& c : cert.classes) {
    if (!c.epsilon || cert.degenerate()) continue;
    const double budget = *c.epsilon / cert.eta;
    for (double f : fractions) grid.push_back(f * budget / root_a);
  }
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

SweepTable run_sweep(const LstmWeights& w, const RobustnessCertificate& cert,
                     const std::vector<Sequence>& train, const std::vector<double>& grid) {
  require(!grid.empty(), ErrorCode::kInvalidInput, "sweep grid is empty");
  for (double xi : grid) {
    require(std::isfinite(xi) && xi >= 0.0, ErrorCode::kInvalidInput,
            "sweep grid entries must be finite and >= 0");
  }
  const Eigen::Index m = w.num_classes();
  require(cert.m == m, ErrorCode::kDimensionMismatch, "certificate and model disagree on m");

  struct ClassData {
    int cls;
    std::vector<std::size_t> members;
    std::optional<double> budget;
  };
  std::vector<ClassData> classes;
  for (int k = 0; k < m; ++k) {
    const NominalSet nominal = nominal_set(w, train, k);
    const ClassCertificate* cc = nullptr;
    for (const auto& c : cert.classes) {
      if (c.cls == k) cc = &c;
    }
    require(cc != nullptr, ErrorCode::kInvalidInput,
            "certificate has no entry for class " + std::to_string(k + 1));
    require(cc->nominal_count == nominal.members.size(), ErrorCode::kInvalidInput,
            "certificate lists " + std::to_string(cc->nominal_count) +
                " nominal sequences for class " + std::to_string(k + 1) + ", model and data give " +
                std::to_string(nominal.members.size()));
    ClassData cd{k, nominal.members, std::nullopt};
    if (cc->epsilon) cd.budget = certified_budget(cert, k);
    classes.push_back(std::move(cd));
  }

  const double root_a = std::sqrt(static_cast<double>(w.input_dim()));
  // (grid point, class) accuracy cells, computed in parallel and assembled
  // in grid order.
  std::vector<std::vector<SweepRow>> cells(grid.size());
  parallel_for(grid.size(), [&](std::size_t g) {
    const double xi = grid[g];
    for (const ClassData& cd : classes) {
      SweepRow row;
      row.cls = cd.cls;
      row.xi = xi;
      row.max_norm_distance = xi;
      row.budget = cd.budget.value_or(std::numeric_limits<double>::quiet_NaN());
      row.count = cd.members.size();
      std::size_t correct = 0;
      double distance = 0.0;
      for (std::size_t idx : cd.members) {
        const Sequence shifted = perturb_sequence_constant(train[idx], xi);
        distance = std::max(distance, seq_linf_distance(train[idx], shifted));
        const ArgmaxResult top = argmax_label(run_sequence(w, shifted).belief);
        if (!top.boundary && top.label == cd.cls) ++correct;
      }
      row.distance = cd.members.empty() ? xi * root_a : distance;
      row.accuracy = cd.members.empty() ? std::numeric_limits<double>::quiet_NaN()
                                        : static_cast<double>(correct) / cd.members.size();
      row.certified = cd.budget && row.distance < *cd.budget;
      cells[g].push_back(row);
    }
  });

  SweepTable table;
  table.grid = grid;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    SweepRow summary;
    summary.xi = grid[g];
    summary.max_norm_distance = grid[g];
    summary.distance = grid[g] * root_a;
    summary.budget = std::numeric_limits<double>::infinity();
    double acc_sum = 0.0;
    int acc_classes = 0;
    bool all_certified = true;
    for (const SweepRow& row : cells[g]) {
      table.rows.push_back(row);
      if (row.count == 0) continue;
      summary.count += row.count;
      summary.budget = std::min(summary.budget, row.budget);
      acc_sum += row.accuracy;
      ++acc_classes;
      all_certified = all_certified && row.certified;
    }
    summary.accuracy = acc_classes ? acc_sum / acc_classes : std::numeric_limits<double>::quiet_NaN();
    summary.certified = acc_classes > 0 && all_certified;
    table.rows.push_back(summary);
  }
  return table;
}

std::string SweepTable::to_csv() const {
  std::ostringstream out;
  out << "class,xi,seq_linf_distance,max_norm_distance,budget,nominal_count,accuracy,certified\n";
  for (const SweepRow& r : rows) {
    out << (r.cls ? std::to_string(*r.cls + 1) : "all") << ',' << format_double(r.xi) << ','
        << format_double(r.distance) << ',' << format_double(r.max_norm_distance) << ','
        << format_double(r.budget) << ',' << r.count << ',' << format_double(r.accuracy) << ','
        << (r.certified ? 1 : 0) << '\n';
  }
  return out.str();
}

const SweepRow& SweepTable::summary(std::size_t i) const {
  require(i < grid.size(), ErrorCode::kIndexOutOfRange, "grid index out of range");
  std::size_t seen = 0;
  for (const SweepRow& r : rows) {
    if (!r.cls && seen++ == i) return r;
  }
  fail(ErrorCode::kInvalidInput, "sweep table has no summary row " + std::to_string(i));
}

CompareRow compare_model(const std::string& name, const Checkpoint& ck, const SequenceDataset& data,
                         const std::optional<PerturbationSpec>& perturbation) {
  const LstmWeights& w = ck.weights;
  require(w.input_dim() == data.featurizer.feature_dim() && w.num_classes() == data.num_classes,
          ErrorCode::kDimensionMismatch,
          "checkpoint " + name + " does not match the dataset dimensions (a = " +
              std::to_string(w.input_dim()) + ", m = " + std::to_string(w.num_classes()) + ")");
  require(!data.test.empty(), ErrorCode::kInvalidInput, "compare needs test sequences");
  CompareRow row;
  row.name = name;
  row.stability = ck.meta_value("stability").value_or("unknown");
  row.tau = row.stability == "on" ? ck.meta_value("tau").value_or("-") : "-";
  row.unperturbed = 100.0 * accuracy(w, data.train);
  if (perturbation) {
    std::vector<Sequence> shifted(data.test.size());
    parallel_for(data.test.size(), [&](std::size_t i) {
      const SequenceSource& src = data.test_source[i];
      shifted[i] = make_sequence(data.test_images[src.image], data.paths[src.path], data.featurizer,
                                 *perturbation, i);
    });
    row.perturbed = 100.0 * accuracy(w, shifted);
  } else {
    row.perturbed = 100.0 * accuracy(w, data.test);
  }
  row.loss = row.unperturbed - row.perturbed;
  return row;
}

std::string compare_csv(const std::vector<CompareRow>& rows) {
  std::ostringstream out;
  out << "model,stability_constraint,tau,unperturbed_sequence,perturbed_sequence,performance_loss\n";
  for (const CompareRow& r : rows) {
    out << r.name << ',' << r.stability << ',' << r.tau << ',' << format_double(r.unperturbed)
        << ',' << format_double(r.perturbed) << ',' << format_double(r.loss) << '\n';
  }
  return out.str();
}

std::string run_manifest(const std::string& command, const ExperimentConfig& config,
                         const std::vector<std::pair<std::string, std::string>>& extra) {
  std::ostringstream out;
  out << "# run manifest\n";
  out << "command=" << command << '\n';
  out << "crnn_version=" << kVersion << '\n';
  out << "eigen_version=" << EIGEN_WORLD_VERSION << '.' << EIGEN_MAJOR_VERSION << '.'
      << EIGEN_MINOR_VERSION << '\n';
#if defined(__VERSION__)
  out << "compiler=" << __VERSION__ << '\n';
#endif
  out << "workers=" << worker_count() << '\n';
  out << "train_seed=" << config.train.seed << '\n';
  out << "estimate_seed=" << config.estimation.seed << '\n';
  out << "path_seed=" << config.sequence.path_seed << '\n';
  for (const auto& [k, v] : extra) out << k << '=' << v << '\n';
  out << "[config]\n" << config.to_text();
  return out.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + path.string());
  out << text;
  require(static_cast<bool>(out), ErrorCode::kIo, "write failed for " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace crnn
