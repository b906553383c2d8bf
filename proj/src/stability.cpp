#include "crnn/stability.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "crnn/lstm_io.hpp"
#include "crnn/parallel.hpp"

namespace crnn {

std::string_view to_string(ConstraintMode mode) {
  return mode == ConstraintMode::kStrict ? "strict" : "recurrent";
}

ConstraintMode parse_constraint_mode(std::string_view text) {
  if (text == "strict") return ConstraintMode::kStrict;
  if (text == "recurrent") return ConstraintMode::kRecurrent;
  fail(ErrorCode::kInvalidInput, "unknown constraint mode '" + std::string(text) + "'");
}

ConstraintTerms recurrent_terms(const LstmWeights& w) {
  return {inf_norm(w.update.recurrent), inf_norm(w.output.recurrent),
          4.0 * inf_norm(w.candidate.recurrent), std::sqrt(inf_norm(w.forget.recurrent))};
}

ConstraintTerms input_terms(const LstmWeights& w) {
  return {inf_norm(w.update.input), inf_norm(w.output.input), 4.0 * inf_norm(w.candidate.input),
          std::sqrt(inf_norm(w.forget.input))};
}

double constraint_lhs(const LstmWeights& w, ConstraintMode mode) {
  const double rec = recurrent_terms(w).max();
  return mode == ConstraintMode::kStrict ? std::max(rec, input_terms(w).max()) : rec;
}

StabilityReport constraint_check(const LstmWeights& w, double f_sup, ConstraintMode mode) {
  require(std::isfinite(f_sup) && f_sup >= 0.0, ErrorCode::kInvalidInput,
          "f_sup must be finite and nonnegative");
  require(f_sup < 1.0, ErrorCode::kInfeasibleConstraint,
          "f_sup = " + format_double(f_sup) + " leaves no room: 1 - f_sup <= 0");
  StabilityReport r;
  r.mode = mode;
  r.f_sup = f_sup;
  r.recurrent = recurrent_terms(w);
  r.constraint_lhs = r.recurrent.max();
  if (mode == ConstraintMode::kStrict) {
    r.input = input_terms(w);
    r.constraint_lhs = std::max(r.constraint_lhs, r.input->max());
  }
  r.margin = (1.0 - f_sup) - r.constraint_lhs;
  r.satisfied = r.constraint_lhs < 1.0 - f_sup;
  return r;
}

int project_weights_in_place(LstmWeights& w, double tau, double f_sup, ConstraintMode mode) {
  require(tau > 1.0 && std::isfinite(tau), ErrorCode::kInvalidInput, "tau must exceed 1");
  int rounds = 0;
  while (!constraint_check(w, f_sup, mode).satisfied) {
    for (Gate* g : {&w.update, &w.output, &w.forget, &w.candidate}) {
      g->recurrent /= tau;
      if (mode == ConstraintMode::kStrict) g->input /= tau;
    }
    ++rounds;
  }
  return rounds;
}

ProjectionResult project_weights(const LstmWeights& w, double tau, double f_sup,
                                 ConstraintMode mode) {
  ProjectionResult out{w, 0};
  out.rounds = project_weights_in_place(out.weights, tau, f_sup, mode);
  return out;
}

double estimate_f_sup(const LstmWeights& w, const std::vector<Sequence>& data) {
  require(!data.empty(), ErrorCode::kInvalidInput, "f_sup estimate needs data");
  std::vector<double> per_sequence(data.size(), 0.0);
  parallel_for(data.size(), [&](std::size_t i) {
    check_sequence_fits(w, data[i]);
    HiddenState s = HiddenState::zeros(w.hidden_dim());
    double best = 0.0;
    for (Eigen::Index t = 0; t < data[i].length(); ++t) {
      const auto x = data[i].steps.col(t);
      best = std::max(best, forget_gate(w, s, x).cwiseAbs().maxCoeff());
      s = lstm_step(w, s, x);
    }
    per_sequence[i] = best;
  });
  return *std::max_element(per_sequence.begin(), per_sequence.end());
}

SamplingPool build_sampling_pool(const LstmWeights& w, const std::vector<Sequence>& data) {
  SamplingPool pool;
  for (const Sequence& seq : data) {
    const auto states = run_trajectory(w, seq);
    for (Eigen::Index t = 0; t < seq.length(); ++t) {
      pool.states.push_back(states[static_cast<std::size_t>(t)]);
      pool.inputs.emplace_back(seq.steps.col(t));
    }
  }
  if (pool.states.empty()) return trivial_pool(w);
  return pool;
}

SamplingPool trivial_pool(const LstmWeights& w) {
  SamplingPool pool;
  pool.states.push_back(HiddenState::zeros(w.hidden_dim()));
  pool.inputs.push_back(Eigen::VectorXd::Zero(w.input_dim()));
  return pool;
}

namespace {

HiddenState jitter_state(const HiddenState& base, double radius, std::mt19937_64& rng) {
  const Eigen::Index b = base.cell.size();
  const double sd = radius / std::sqrt(static_cast<double>(b));
  return {base.cell + gaussian_vector(b, sd, rng), base.hidden + gaussian_vector(b, sd, rng)};
}

template <typename SampleFn>
RatioEstimate max_ratio(std::size_t n_samples, SampleFn&& sample) {
  require(n_samples >= 1, ErrorCode::kInvalidInput, "need at least one sample");
  std::vector<double> ratios(n_samples, -1.0);
  parallel_for(n_samples, [&](std::size_t i) { ratios[i] = sample(i); });
  RatioEstimate out;
  for (double r : ratios) {
    if (r < 0.0) {
      ++out.skipped;
    } else {
      ++out.used;
      out.value = std::max(out.value, r);
    }
  }
  return out;
}

}  // namespace

RatioEstimate estimate_lambda(const LstmWeights& w, const SamplingPool& pool,
                              std::size_t n_samples, double radius, std::uint64_t seed) {
  require(radius > 0.0, ErrorCode::kInvalidInput, "radius must be positive");
  require(!pool.states.empty() && !pool.inputs.empty(), ErrorCode::kInvalidInput, "empty pool");
  const Eigen::Index b = w.hidden_dim();
  return max_ratio(n_samples, [&](std::size_t i) -> double {
    auto rng = make_rng(seed, i);
    std::uniform_int_distribution<std::size_t> pick_state(0, pool.states.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_input(0, pool.inputs.size() - 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const HiddenState s = jitter_state(pool.states[pick_state(rng)], radius, rng);
    const Eigen::VectorXd& x = pool.inputs[pick_input(rng)];
    // Even samples give both blocks the same length (the extreme points of
    // the block-max ball); odd samples draw the two lengths independently.
    const double cell_len = radius * unit(rng);
    const double hidden_len = i % 2 == 0 ? cell_len : radius * unit(rng);
    const HiddenState s2{s.cell + random_direction(b, cell_len, rng),
                         s.hidden + random_direction(b, hidden_len, rng)};
    const double denom = state_distance(s, s2);
    if (denom == 0.0) return -1.0;
    return state_distance(lstm_step(w, s, x), lstm_step(w, s2, x)) / denom;
  });
}

RatioEstimate estimate_kappa(const LstmWeights& w, const SamplingPool& pool,
                             std::size_t n_samples, double radius, std::uint64_t seed) {
  require(radius > 0.0, ErrorCode::kInvalidInput, "radius must be positive");
  require(!pool.states.empty() && !pool.inputs.empty(), ErrorCode::kInvalidInput, "empty pool");
  const Eigen::Index a = w.input_dim();
  return max_ratio(n_samples, [&](std::size_t i) -> double {
    auto rng = make_rng(seed, i);
    std::uniform_int_distribution<std::size_t> pick_state(0, pool.states.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_input(0, pool.inputs.size() - 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const HiddenState s = jitter_state(pool.states[pick_state(rng)], radius, rng);
    const Eigen::VectorXd x = pool.inputs[pick_input(rng)] +
                              gaussian_vector(a, radius / std::sqrt(static_cast<double>(a)), rng);
    const Eigen::VectorXd x2 = x + random_direction(a, radius * unit(rng), rng);
    const double denom = (x - x2).norm();
    if (denom == 0.0) return -1.0;
    return state_distance(lstm_step(w, s, x), lstm_step(w, s, x2)) / denom;
  });
}

StabilityReport stability_report(const LstmWeights& w, const std::vector<Sequence>& data,
                                 const EstimationOptions& options) {
  const double f_sup = estimate_f_sup(w, data);
  StabilityReport r = constraint_check(w, f_sup, options.mode);
  r.f_sup_sequences = data.size();
  const SamplingPool pool = build_sampling_pool(w, data);
  const RatioEstimate lambda =
      estimate_lambda(w, pool, options.lambda_samples, options.lambda_radius, options.seed);
  const RatioEstimate kappa = estimate_kappa(w, pool, options.kappa_samples, options.kappa_radius,
                                             splitmix64(options.seed + 1));
  r.lambda_hat = lambda.value;
  r.lambda_samples = lambda.used;
  r.kappa_hat = kappa.value;
  r.kappa_samples = kappa.used;
  r.wc_norm = spectral_norm(w.head);
  return r;
}

std::string StabilityReport::to_text() const {
  std::ostringstream out;
  auto put = [&](const std::string& key, double v) { out << key << '=' << format_double(v) << '\n'; };
  auto put_terms = [&](const std::string& prefix, const ConstraintTerms& t) {
    put(prefix + ".update", t.update);
    put(prefix + ".output", t.output);
    put(prefix + ".candidate_x4", t.candidate);
    put(prefix + ".forget_sqrt", t.forget);
  };
  out << "mode=" << to_string(mode) << '\n';
  put("f_sup", f_sup);
  put("constraint_lhs", constraint_lhs);
  put("constraint_rhs", 1.0 - f_sup);
  put("margin", margin);
  out << "satisfied=" << (satisfied ? 1 : 0) << '\n';
  put_terms("recurrent", recurrent);
  if (input) put_terms("input", *input);
  put("lambda_hat", lambda_hat);
  put("kappa_hat", kappa_hat);
  put("wc_norm", wc_norm);
  out << "lambda_samples=" << lambda_samples << '\n';
  out << "kappa_samples=" << kappa_samples << '\n';
  out << "f_sup_sequences=" << f_sup_sequences << '\n';
  return out.str();
}

StabilityReport StabilityReport::from_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, ErrorCode::kFormat, "stability report line without '='");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto num = [&](const std::string& key) {
    const auto it = kv.find(key);
    require(it != kv.end(), ErrorCode::kFormat, "stability report missing " + key);
    return parse_double(it->second);
  };
  auto terms = [&](const std::string& prefix) {
    return ConstraintTerms{num(prefix + ".update"), num(prefix + ".output"),
                           num(prefix + ".candidate_x4"), num(prefix + ".forget_sqrt")};
  };
  StabilityReport r;
  r.mode = parse_constraint_mode(kv.count("mode") ? kv["mode"] : "recurrent");
  r.f_sup = num("f_sup");
  r.constraint_lhs = num("constraint_lhs");
  r.margin = num("margin");
  r.satisfied = num("satisfied") != 0.0;
  r.recurrent = terms("recurrent");
  if (kv.count("input.update")) r.input = terms("input");
  r.lambda_hat = num("lambda_hat");
  r.kappa_hat = num("kappa_hat");
  r.wc_norm = num("wc_norm");
  r.lambda_samples = static_cast<std::size_t>(num("lambda_samples"));
  r.kappa_samples = static_cast<std::size_t>(num("kappa_samples"));
  r.f_sup_sequences = static_cast<std::size_t>(num("f_sup_sequences"));
  return r;
}

}  // namespace crnn
