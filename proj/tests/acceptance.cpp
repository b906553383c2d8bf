// Acceptance suite: one PASS / FAIL / SKIP line per criterion, with the
// measured quantities alongside. Exit status is nonzero if any check fails.
//
// The MNIST checks read IDX files from CRNN_MNIST_DIR (environment) and are
// skipped when it is unset.

#include <Eigen/Core>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "crnn/certification.hpp"
#include "crnn/config.hpp"
#include "crnn/data.hpp"
#include "crnn/experiment.hpp"
#include "crnn/lstm_io.hpp"
#include "crnn/parallel.hpp"
#include "crnn/random.hpp"
#include "crnn/simplex.hpp"
#include "crnn/stability.hpp"
#include "crnn/training.hpp"

namespace {

using namespace crnn;
using Clock = std::chrono::steady_clock;

int failures = 0;

std::string num(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void report(const std::string& id, const std::string& title, bool pass, const std::string& detail) {
  std::cout << (pass ? "PASS " : "FAIL ") << id << "  " << title << "  " << detail << std::endl;
  if (!pass) ++failures;
}

void skip(const std::string& id, const std::string& title, const std::string& why) {
  std::cout << "SKIP " << id << "  " << title << "  " << why << std::endl;
}

void info(const std::string& text) { std::cout << "     " << text << std::endl; }

// Runs a check body, turning an unexpected exception into a FAIL line.
void guarded(const std::string& id, const std::string& title, const std::function<void()>& body) {
  try {
    body();
  } catch (const std::exception& e) {
    report(id, title, false, std::string("threw: ") + e.what());
  }
}

ExperimentConfig synthetic_config(std::uint64_t seed, double tau) {
  ExperimentConfig c;
  c.dataset = parse_dataset_selector("synth:" + std::to_string(seed));
  c.train.seed = seed;
  c.train.tau = tau;
  return c;
}

// ---------------------------------------------------------------- C1

void c1_voronoi_oracle() {
  const std::string title = "Voronoi oracle equivalence (m in {2,3}, step 1e-3)";
  const auto start = Clock::now();
  const double step = 1e-3;
  double worst = 0.0;
  std::size_t checks = 0;
  for (int m : {2, 3}) {
    std::vector<double> gaps(100, 0.0);
    parallel_for(100, [&](std::size_t i) {
      auto rng = make_rng(101, static_cast<std::uint64_t>(m) * 1000 + i);
      const Eigen::VectorXd p = sample_simplex_uniform(m, rng);
      double g = 0.0;
      for (int j = 0; j < m; ++j) {
        g = std::max(g, std::abs(cell_distance(p, j) - grid_oracle_distance(p, j, step)));
      }
      gaps[i] = g;
    });
    for (double g : gaps) worst = std::max(worst, g);
    checks += 100 * static_cast<std::size_t>(m);
  }
  const double elapsed = seconds_since(start);
  report("C1", title, worst <= 2 * step && elapsed < 60.0,
         "pairs=" + std::to_string(checks) + " max_gap=" + num(worst) + " limit=" + num(2 * step) +
             " runtime=" + num(elapsed) + "s (limit 60s)");
}

// ---------------------------------------------------------------- C2

void c2_lemma_equivalence() {
  const std::string title = "distance criterion == argmax (m = 2..10, 1e4 points each)";
  std::size_t mismatches = 0;
  std::size_t tested = 0;
  std::size_t boundary = 0;
  for (int m = 2; m <= 10; ++m) {
    std::vector<char> bad(10000, 0);
    std::vector<char> on_boundary(10000, 0);
    parallel_for(10000, [&](std::size_t i) {
      auto rng = make_rng(202, static_cast<std::uint64_t>(m) * 100000 + i);
      const Eigen::VectorXd p = sample_simplex_uniform(m, rng);
      const ArgmaxResult top = argmax_label(p);
      if (top.boundary) {
        on_boundary[i] = 1;
        return;
      }
      try {
        bad[i] = classify_by_criterion(p) != top.label;
      } catch (const Error&) {
        bad[i] = 1;
      }
    });
    for (std::size_t i = 0; i < bad.size(); ++i) {
      mismatches += bad[i];
      boundary += on_boundary[i];
      tested += !on_boundary[i];
    }
  }
  report("C2", title, mismatches == 0,
         "tested=" + std::to_string(tested) + " mismatches=" + std::to_string(mismatches) +
             " boundary_draws_excluded=" + std::to_string(boundary));
}

// ---------------------------------------------------------------- C3

void c3_softmax_lipschitz() {
  const std::string title = "softmax Lipschitz ratio <= 1/sqrt(m) (m in {2,10}, 1e4 pairs)";
  std::size_t violations = 0;
  std::string detail;
  for (int m : {2, 10}) {
    std::vector<double> ratio(10000, 0.0);
    parallel_for(10000, [&](std::size_t i) {
      auto rng = make_rng(303, static_cast<std::uint64_t>(m) * 100000 + i);
      const Eigen::VectorXd q1 = gaussian_vector(m, 1.0, rng);
      const Eigen::VectorXd q2 = gaussian_vector(m, 1.0, rng);
      const double dq = (q1 - q2).norm();
      ratio[i] = dq > 0 ? (softmax(q1) - softmax(q2)).norm() / dq : 0.0;
    });
    const double limit = 1.0 / std::sqrt(static_cast<double>(m)) + 1e-9;
    double worst = 0.0;
    for (double r : ratio) {
      worst = std::max(worst, r);
      violations += r > limit;
    }
    detail += "m=" + std::to_string(m) + ": max_ratio=" + num(worst) + " limit=" + num(limit) + "  ";
  }
  report("C3", title, violations == 0, detail + "violations=" + std::to_string(violations));
  info("logit pairs are independent N(0,1) draws; the worst case over all pairs is 1/2, which "
       "exceeds 1/sqrt(m) for m >= 5 (see unit tests)");
}

// ---------------------------------------------------------------- shared runs

struct SyntheticRun {
  std::uint64_t seed = 0;
  double tau = 0;
  bool stable = false;
  SequenceDataset data;
  TrainRun run;
  std::size_t steps = 0;
  std::size_t steps_ok = 0;
  double worst_margin = std::numeric_limits<double>::infinity();
  double seconds = 0;
};

SyntheticRun train_synthetic(std::uint64_t seed, double tau, bool stable) {
  SyntheticRun r;
  r.seed = seed;
  r.tau = tau;
  r.stable = stable;
  const ExperimentConfig config = synthetic_config(seed, tau);
  r.data = build_dataset(config);
  const auto start = Clock::now();
  StepObserver observer;
  if (stable) {
    observer = [&r, &config](const StepEvent& e) {
      const StabilityReport check = constraint_check(e.weights, e.f_sup, config.train.mode);
      ++r.steps;
      r.steps_ok += check.satisfied;
      r.worst_margin = std::min(r.worst_margin, check.margin);
    };
  }
  r.run = run_training(config, r.data, stable, observer);
  r.seconds = seconds_since(start);
  return r;
}

double train_accuracy_of(const SyntheticRun& r) { return accuracy(r.run.result.weights, r.data.train); }
double test_accuracy_of(const SyntheticRun& r) { return accuracy(r.run.result.weights, r.data.test); }

// ---------------------------------------------------------------- C4

void c4_projection(const std::vector<const SyntheticRun*>& runs) {
  const std::string title = "constraint holds after every projected gradient step";
  bool pass = true;
  std::string detail;
  for (const SyntheticRun* r : runs) {
    const bool ok = r->steps > 0 && r->steps == r->steps_ok;
    pass = pass && ok;
    detail += "tau=" + num(r->tau) + ": " + std::to_string(r->steps_ok) + "/" +
              std::to_string(r->steps) + " steps, min_margin=" + num(r->worst_margin) + "  ";
  }
  report("C4", title, pass, detail);
  for (const SyntheticRun* r : runs) {
    // Steps project at the f_sup measured when the epoch starts; training
    // closes with a re-measure-and-project pass. Confirm independently.
    const double f_now = estimate_f_sup(r->run.result.weights, r->data.train);
    const StabilityReport fresh =
        constraint_check(r->run.result.weights, f_now, ConstraintMode::kRecurrent);
    info("tau=" + num(r->tau) + " final weights at freshly measured f_sup=" + num(f_now) +
         ": lhs=" + num(fresh.constraint_lhs) + " rhs=" + num(1 - f_now) +
         " closing_rounds=" + std::to_string(r->run.result.closing_rounds) +
         " satisfied=" + (fresh.satisfied ? "yes" : "no"));
  }
}

// ---------------------------------------------------------------- C5

struct Certified {
  CertifyOutput out;
  double seconds = 0;
};

void c5_contraction(const SyntheticRun& stable, const SyntheticRun& unconstrained,
                    const StabilityReport& stable_report) {
  const std::string title = "contraction estimate of the constrained model is < 1 with margin";
  const double lambda = stable_report.lambda_hat;
  const double margin = 1.0 - lambda;
  report("C5", title, lambda < 1.0 && margin >= 0.01,
         "lambda_hat=" + num(lambda) + " margin=" + num(margin) + " (need >= 0.01) pairs=" +
             std::to_string(stable_report.lambda_samples));
  EstimationOptions opts;
  const SamplingPool pool = build_sampling_pool(unconstrained.run.result.weights, unconstrained.data.train);
  const RatioEstimate u = estimate_lambda(unconstrained.run.result.weights, pool,
                                          opts.lambda_samples, opts.lambda_radius, opts.seed);
  info("unconstrained baseline lambda_hat=" + num(u.value) + " (reported only)");
  (void)stable;
}

// ---------------------------------------------------------------- C6 / C7

struct PairStats {
  std::size_t pairs = 0;
  std::size_t belief_violations = 0;
  std::size_t hidden_violations = 0;
  double worst_belief_ratio = 0;  // deviation / bound
  double worst_hidden_ratio = 0;
  std::map<std::string, std::size_t> kinds;
};

PerturbationSpec fresh_perturbation(std::size_t i) {
  static const PerturbationKind kinds[] = {
      PerturbationKind::kConstantShift, PerturbationKind::kAdditiveNoise,
      PerturbationKind::kTranslation,   PerturbationKind::kRotation,
      PerturbationKind::kScaling,       PerturbationKind::kBrightness};
  auto rng = make_rng(606, i);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PerturbationSpec spec;
  spec.kind = kinds[i % 6];
  spec.seed = 7000 + i;
  switch (spec.kind) {
    case PerturbationKind::kConstantShift: spec.magnitude = 0.05 * u(rng); break;
    case PerturbationKind::kAdditiveNoise: spec.magnitude = 0.2 * u(rng); break;
    case PerturbationKind::kTranslation: spec.magnitude = 1.0 + std::floor(3.0 * u(rng)); break;
    case PerturbationKind::kRotation: spec.magnitude = 0.3 * u(rng); break;
    case PerturbationKind::kScaling: spec.magnitude = 0.3 * u(rng); break;
    case PerturbationKind::kBrightness: spec.magnitude = 0.2 * u(rng); break;
  }
  return spec;
}

PairStats fresh_pairs(const SyntheticRun& model, const RobustnessCertificate& cert, std::size_t n) {
  const LstmWeights& w = model.run.result.weights;
  struct One {
    double belief_dev = 0, belief_bound = 0;
    double hidden_worst_ratio = 0;
    bool hidden_bad = false;
  };
  std::vector<One> res(n);
  parallel_for(n, [&](std::size_t i) {
    const std::size_t idx = (i * 7919) % model.data.train.size();
    const Sequence& x = model.data.train[idx];
    const Sequence xt = model.data.perturbed_train(idx, fresh_perturbation(i));
    const double d = seq_linf_distance(x, xt);
    const auto hx = run_trajectory(w, x);
    const auto ht = run_trajectory(w, xt);
    One o;
    for (int t = 1; t <= static_cast<int>(x.length()); ++t) {
      const double dev = state_distance(hx[t], ht[t]);
      const double bound = hidden_deviation_bound(cert.kappa_used, cert.lambda_used, t, d);
      if (dev > bound) o.hidden_bad = true;
      if (bound > 0) o.hidden_worst_ratio = std::max(o.hidden_worst_ratio, dev / bound);
    }
    const Eigen::VectorXd p = softmax(head_logits(w, hx.back().hidden));
    const Eigen::VectorXd pt = softmax(head_logits(w, ht.back().hidden));
    o.belief_dev = (p - pt).norm();
    o.belief_bound = cert.eta * d;
    res[i] = o;
  });
  PairStats s;
  s.pairs = n;
  for (std::size_t i = 0; i < n; ++i) {
    const One& o = res[i];
    s.belief_violations += o.belief_dev > o.belief_bound;
    s.hidden_violations += o.hidden_bad;
    if (o.belief_bound > 0) s.worst_belief_ratio = std::max(s.worst_belief_ratio, o.belief_dev / o.belief_bound);
    s.worst_hidden_ratio = std::max(s.worst_hidden_ratio, o.hidden_worst_ratio);
    ++s.kinds[std::string(to_string(fresh_perturbation(i).kind))];
  }
  return s;
}

// ---------------------------------------------------------------- C10

void c10_gradient_check() {
  const std::string title = "BPTT gradient vs central differences (a=3, b=4, m=3, T=5, 5 seeds)";
  const double h = 1e-5;
  const double floor = 1e-6;
  double worst = 0.0;
  std::string worst_at;
  std::size_t entries = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    LstmWeights w = init_weights(3, 4, 3, seed);
    // Spread the weights so gates are not all near their linear regime.
    for_each_parameter(w, [&](const std::string& name, auto& block) {
      auto rng = make_rng(seed, std::hash<std::string>{}(name));
      for (Eigen::Index i = 0; i < block.size(); ++i) block.data()[i] = gaussian_vector(1, 0.5, rng)[0];
    });
    std::vector<Sequence> batch(2);
    for (std::size_t n = 0; n < batch.size(); ++n) {
      auto rng = make_rng(seed + 100, n);
      batch[n].steps.resize(3, 5);
      for (Eigen::Index t = 0; t < 5; ++t) batch[n].steps.col(t) = gaussian_vector(3, 1.0, rng);
      batch[n].label = static_cast<int>(n % 3);
    }
    const BatchGradient g = backward(w, batch);
    auto loss_at = [&](const LstmWeights& v) {
      double total = 0.0;
      for (const Sequence& s : batch) total += lse_loss(run_sequence(v, s).logits, *s.label);
      return total / static_cast<double>(batch.size());
    };
    LstmWeights probe = w;
    std::vector<std::pair<std::string, Eigen::MatrixXd>> analytic;
    for_each_parameter(g.gradient, [&](const std::string& name, const auto& block) {
      analytic.emplace_back(name, Eigen::MatrixXd(block));
    });
    std::size_t block_index = 0;
    for_each_parameter(probe, [&](const std::string& name, auto& block) {
      const Eigen::MatrixXd& a = analytic[block_index++].second;
      for (Eigen::Index i = 0; i < block.size(); ++i) {
        const double saved = block.data()[i];
        block.data()[i] = saved + h;
        const double up = loss_at(probe);
        block.data()[i] = saved - h;
        const double down = loss_at(probe);
        block.data()[i] = saved;
        const double fd = (up - down) / (2 * h);
        const double an = a.data()[i];
        const double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), floor});
        ++entries;
        if (rel > worst) {
          worst = rel;
          worst_at = "seed " + std::to_string(seed) + " " + name + "[" + std::to_string(i) + "]";
        }
      }
    });
  }
  report("C10", title, worst <= 1e-5,
         "entries=" + std::to_string(entries) + " max_rel_error=" + num(worst) + " at " + worst_at +
             " (limit 1e-5; magnitude floor " + num(floor) + ")");
}

}  // namespace

int main() {
  std::cout << "acceptance suite (workers=" << worker_count() << ")" << std::endl;
  guarded("C1", "Voronoi oracle equivalence", c1_voronoi_oracle);
  guarded("C2", "distance criterion == argmax", c2_lemma_equivalence);
  guarded("C3", "softmax Lipschitz", c3_softmax_lipschitz);
  guarded("C10", "gradient check", c10_gradient_check);

  // Synthetic 4-class task: seeds 1..3, constrained at tau 1.05 and 2 and
  // unconstrained.
  std::map<std::pair<std::uint64_t, std::string>, SyntheticRun> runs;
  const auto train_start = Clock::now();
  try {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      runs[{seed, "1.05"}] = train_synthetic(seed, 1.05, true);
      runs[{seed, "2"}] = train_synthetic(seed, 2.0, true);
      runs[{seed, "off"}] = train_synthetic(seed, 1.05, false);
    }
  } catch (const std::exception& e) {
    report("TRAIN", "synthetic training runs", false, std::string("threw: ") + e.what());
    return 1;
  }
  info("trained 9 synthetic models in " + num(seconds_since(train_start)) + "s");

  const SyntheticRun& stable = runs[{1, "1.05"}];
  const SyntheticRun& stable2 = runs[{1, "2"}];
  const SyntheticRun& free_run = runs[{1, "off"}];

  guarded("C4", "projection soundness", [&] { c4_projection({&stable, &stable2}); });

  // Certification of the constrained tau = 1.05 model (criteria 5-9).
  std::optional<CertifyOutput> cert;
  double estimate_seconds = 0;
  guarded("C5", "contraction", [&] {
    const auto start = Clock::now();
    cert = certify_model(stable.run.result.weights, stable.data.train, EstimationOptions{}, 1.05);
    estimate_seconds = seconds_since(start);
    c5_contraction(stable, free_run, cert->stability);
  });

  if (cert) {
    const RobustnessCertificate& c = cert->certificate;
    info("certificate: kappa_hat=" + num(c.kappa_hat) + " lambda_hat=" + num(c.lambda_hat) +
         " kappa_used=" + num(c.kappa_used) + " lambda_used=" + num(c.lambda_used) +
         " ||W_c||=" + num(c.wc_norm) + " eta=" + num(c.eta));
    PairStats pairs;
    double pair_seconds = 0;
    guarded("C6", "belief deviation bound", [&] {
      const auto start = Clock::now();
      pairs = fresh_pairs(stable, c, 1000);
      pair_seconds = seconds_since(start);
      const double total = estimate_seconds + pair_seconds;
      std::string kinds;
      for (const auto& [k, n] : pairs.kinds) kinds += k + ":" + std::to_string(n) + " ";
      report("C6", "belief deviation <= eta * sequence distance on 1e3 fresh pairs",
             pairs.belief_violations == 0 && total < 300.0,
             "violations=" + std::to_string(pairs.belief_violations) + " worst_ratio=" +
                 num(pairs.worst_belief_ratio) + " runtime=" + num(total) + "s (limit 300s)");
      info("pair kinds: " + kinds);
    });
    guarded("C7", "telescoping hidden bound", [&] {
      report("C7", "per-step state deviation <= telescoping bound on the same pairs",
             pairs.pairs == 1000 && pairs.hidden_violations == 0,
             "violations=" + std::to_string(pairs.hidden_violations) +
                 " worst_ratio=" + num(pairs.worst_hidden_ratio));
    });

    std::optional<SweepTable> sweep;
    guarded("C8", "certified region", [&] {
      const ExperimentConfig config = synthetic_config(1, 1.05);
      const auto grid = sweep_grid(config.sweep_grid, c, config.budget_fractions,
                                   stable.run.result.weights.input_dim());
      sweep = run_sweep(stable.run.result.weights, c, stable.data.train, grid);
      std::size_t certified_rows = 0;
      std::size_t bad = 0;
      for (const SweepRow& row : sweep->rows) {
        if (!row.cls || row.count == 0) continue;
        if (row.distance < row.budget) {
          ++certified_rows;
          bad += row.accuracy != 1.0;
        }
      }
      std::string budgets;
      for (const ClassCertificate& cc : c.classes) {
        budgets += num(cc.epsilon ? *cc.epsilon / c.eta : std::nan("")) + " ";
      }
      report("C8", "every certified sweep row has accuracy exactly 1.0",
             certified_rows > 0 && bad == 0,
             "certified_rows=" + std::to_string(certified_rows) + " rows_below_1=" +
                 std::to_string(bad) + " budgets=" + budgets);
    });
    guarded("C9", "sweep asymptote", [&] {
      if (!sweep) throw std::runtime_error("no sweep table");
      const SweepRow& last = sweep->summary(sweep->grid.size() - 1);
      const double target = 1.0 / 4.0;
      report("C9", "accuracy at the largest xi is within 0.05 of 1/m (synthetic, m = 4)",
             std::abs(last.accuracy - target) <= 0.05,
             "xi=" + num(last.xi) + " class_balanced_accuracy=" + num(last.accuracy) +
                 " target=" + num(target));
    });
  }

  guarded("C11", "synthetic learnability", [&] {
    const double acc_stable = train_accuracy_of(stable);
    const double acc_free = train_accuracy_of(free_run);
    report("C11a", "synthetic 4-class train accuracy >= 0.9 within 30 epochs, both modes",
           acc_stable >= 0.9 && acc_free >= 0.9,
           "constrained(tau=1.05)=" + num(acc_stable) + " unconstrained=" + num(acc_free) +
               " epochs=" + std::to_string(stable.run.config.epochs));
  });

  guarded("C12", "Table II ordering", [&] {
    std::map<std::string, double> mean_gap;
    for (const char* key : {"1.05", "2", "off"}) {
      std::string per_seed;
      for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const SyntheticRun& r = runs[{seed, key}];
        const double gap = train_accuracy_of(r) - test_accuracy_of(r);
        mean_gap[key] += gap / 3.0;
        per_seed += num(gap) + " ";
      }
      info(std::string(key == std::string("off") ? "unconstrained" : "tau=" + std::string(key)) +
           " train-test gap per seed: " + per_seed);
    }
    const bool ordered = mean_gap["1.05"] <= mean_gap["off"] && mean_gap["2"] <= mean_gap["off"];
    report("C12", "stable models' mean train-test gap <= unconstrained (3 seeds)", ordered,
           "gap tau=1.05: " + num(mean_gap["1.05"]) + "  tau=2: " + num(mean_gap["2"]) +
               "  unconstrained: " + num(mean_gap["off"]));
    info("qualitative ordering only; the published deltas are specific to their model and data");
  });

  // MNIST subset.
  const char* mnist_dir = std::getenv("CRNN_MNIST_DIR");
  if (mnist_dir == nullptr || std::string(mnist_dir).empty()) {
    skip("C11b", "MNIST subset test accuracy >= 0.8", "CRNN_MNIST_DIR not set");
    skip("C9b", "MNIST sweep asymptote (m = 10)", "CRNN_MNIST_DIR not set");
  } else {
    ExperimentConfig config;
    config.dataset = parse_dataset_selector(std::string("mnist:") + mnist_dir);
    config.sequence.window = 14;
    config.sequence.factor = 2;
    std::optional<SequenceDataset> data;
    std::optional<TrainRun> stable_mnist;
    guarded("C11b", "MNIST subset", [&] {
      data = build_dataset(config);
      const auto start = Clock::now();
      const TrainRun free_mnist = run_training(config, *data, false);
      stable_mnist = run_training(config, *data, true);
      const double acc = accuracy(free_mnist.result.weights, data->test);
      report("C11b", "MNIST 2000-image subset test accuracy >= 0.8 (unconstrained)", acc >= 0.8,
             "test_accuracy=" + num(acc) + " train_images=" +
                 std::to_string(data->train_images.size()) + " test_images=" +
                 std::to_string(data->test_images.size()) +
                 " a=" + std::to_string(data->featurizer.feature_dim()));
      info("constrained (tau=1.05) MNIST test accuracy=" +
           num(accuracy(stable_mnist->result.weights, data->test)) + "; both trained in " +
           num(seconds_since(start)) + "s");
    });
    guarded("C9b", "MNIST sweep asymptote", [&] {
      if (!stable_mnist) throw std::runtime_error("MNIST training did not complete");
      const LstmWeights& w = stable_mnist->result.weights;
      const CertifyOutput mc = certify_model(w, data->train, EstimationOptions{}, 1.05);
      const auto grid =
          sweep_grid(config.sweep_grid, mc.certificate, config.budget_fractions, w.input_dim());
      const SweepTable table = run_sweep(w, mc.certificate, data->train, grid);
      const SweepRow& last = table.summary(table.grid.size() - 1);
      std::size_t bad = 0;
      for (const SweepRow& row : table.rows) {
        if (row.cls && row.count > 0 && row.distance < row.budget) bad += row.accuracy != 1.0;
      }
      report("C9b", "MNIST accuracy at the largest xi within 0.05 of 1/m (m = 10)",
             std::abs(last.accuracy - 0.1) <= 0.05,
             "xi=" + num(last.xi) + " class_balanced_accuracy=" + num(last.accuracy) +
                 " lambda_hat=" + num(mc.certificate.lambda_hat) +
                 " certified_rows_below_1=" + std::to_string(bad));
    });
  }

  std::cout << (failures == 0 ? "ALL CRITERIA PASS" : std::to_string(failures) + " CRITERIA FAIL")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
