#pragma once

// Stability constraint on the LSTM gates, the row-scaling projection that
// enforces it, and sampling estimates of the contraction constant (lambda),
// the input-Lipschitz constant (kappa) and the head's spectral norm.
//
// Constraint, with ||.||_inf the max-row-sum norm and f_sup = sup |f_t|:
//   max{ ||A_u||, ||A_o||, 4 ||A_z||, sqrt(||A_f||) } < 1 - f_sup
// where A_g is the recurrent matrix of gate g (kRecurrent) or both the
// recurrent and the input matrix (kStrict).

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "crnn/errors.hpp"
#include "crnn/lstm.hpp"
#include "crnn/random.hpp"

namespace crnn {

enum class ConstraintMode { kRecurrent, kStrict };

std::string_view to_string(ConstraintMode mode);
ConstraintMode parse_constraint_mode(std::string_view text);

/// Max-row-sum (induced infinity) norm.
template <typename Derived>
double inf_norm(const Eigen::MatrixBase<Derived>& a) {
  if (a.size() == 0) return 0.0;
  return static_cast<double>(a.cwiseAbs().rowwise().sum().maxCoeff());
}

/// The four terms of the constraint for one family of matrices.
struct ConstraintTerms {
  double update = 0;     // ||A_u||
  double output = 0;     // ||A_o||
  double candidate = 0;  // 4 ||A_z||
  double forget = 0;     // sqrt(||A_f||)

  double max() const { return std::max({update, output, candidate, forget}); }
};

ConstraintTerms recurrent_terms(const LstmWeights& w);
ConstraintTerms input_terms(const LstmWeights& w);

/// Left side of the constraint under `mode`.
double constraint_lhs(const LstmWeights& w, ConstraintMode mode);

struct StabilityReport {
  ConstraintMode mode = ConstraintMode::kRecurrent;
  double f_sup = 0;
  double constraint_lhs = 0;
  /// (1 - f_sup) - constraint_lhs; positive iff satisfied.
  double margin = 0;
  bool satisfied = false;
  ConstraintTerms recurrent;
  std::optional<ConstraintTerms> input;

  double lambda_hat = std::numeric_limits<double>::quiet_NaN();
  double kappa_hat = std::numeric_limits<double>::quiet_NaN();
  double wc_norm = std::numeric_limits<double>::quiet_NaN();
  std::size_t lambda_samples = 0;
  std::size_t kappa_samples = 0;
  std::size_t f_sup_sequences = 0;

  /// One "key=value" metric per line.
  std::string to_text() const;
  static StabilityReport from_text(const std::string& text);
};

/// Throws kInfeasibleConstraint when f_sup >= 1 (the right side is <= 0).
StabilityReport constraint_check(const LstmWeights& w, double f_sup,
                                 ConstraintMode mode = ConstraintMode::kRecurrent);

struct ProjectionResult {
  LstmWeights weights;
  int rounds = 0;
};

/// Divides every row of the constrained matrices by tau until the constraint
/// holds. Head and biases are untouched.
ProjectionResult project_weights(const LstmWeights& w, double tau, double f_sup,
                                 ConstraintMode mode = ConstraintMode::kRecurrent);

/// In-place form used by the training loop; returns the number of rounds.
int project_weights_in_place(LstmWeights& w, double tau, double f_sup,
                             ConstraintMode mode = ConstraintMode::kRecurrent);

/// Largest forget-gate activation over every step and unit of every sequence.
double estimate_f_sup(const LstmWeights& w, const std::vector<Sequence>& data);

/// States visited and inputs consumed while running sequences; the base
/// points around which lambda and kappa are sampled.
struct SamplingPool {
  std::vector<HiddenState> states;
  std::vector<Eigen::VectorXd> inputs;
};

SamplingPool build_sampling_pool(const LstmWeights& w, const std::vector<Sequence>& data);

/// Zero state and zero input; for models without data.
SamplingPool trivial_pool(const LstmWeights& w);

struct RatioEstimate {
  /// Largest observed ratio: a statistical lower bound on the true constant.
  double value = 0;
  std::size_t used = 0;
  std::size_t skipped = 0;
};

/// max ||step(s, x) - step(s~, x)|| / ||s - s~|| over pairs with
/// ||s - s~|| <= radius around jittered pool states; sample i draws from
/// stream i of `seed`.
RatioEstimate estimate_lambda(const LstmWeights& w, const SamplingPool& pool,
                              std::size_t n_samples, double radius, std::uint64_t seed);

/// max ||step(s, x) - step(s, x~)|| / ||x - x~|| over ||x - x~|| <= radius.
RatioEstimate estimate_kappa(const LstmWeights& w, const SamplingPool& pool,
                             std::size_t n_samples, double radius, std::uint64_t seed);

/// Largest singular value by power iteration on A^T A.
template <typename Derived>
double spectral_norm(const Eigen::MatrixBase<Derived>& a, double rel_tol = 1e-10,
                     int max_iterations = 10000) {
  require(a.rows() > 0 && a.cols() > 0, ErrorCode::kInvalidInput, "spectral norm of empty matrix");
  require(a.allFinite(), ErrorCode::kInvalidInput, "spectral norm of non-finite matrix");
  const Eigen::MatrixXd gram = a.template cast<double>().transpose() * a.template cast<double>();
  if (gram.isZero(0.0)) return 0.0;

  auto rng = make_rng(0x5EC7A1ULL);
  Eigen::VectorXd v = gaussian_vector(gram.cols(), 1.0, rng).normalized();
  double rho = v.dot(gram * v);
  for (int it = 0; it < max_iterations; ++it) {
    Eigen::VectorXd next = gram * v;
    const double len = next.norm();
    if (len == 0.0) {
      // Start vector in the null space; restart from a fresh direction.
      v = gaussian_vector(gram.cols(), 1.0, rng).normalized();
      continue;
    }
    v = next / len;
    const double updated = v.dot(gram * v);
    if (std::abs(updated - rho) <= rel_tol * std::abs(updated)) return std::sqrt(updated);
    rho = updated;
  }
  const double residual = (gram * v - rho * v).norm();
  fail(ErrorCode::kNumerical, "power iteration did not converge in " +
                                  std::to_string(max_iterations) +
                                  " iterations; residual " + std::to_string(residual));
}

struct EstimationOptions {
  std::size_t lambda_samples = 10000;
  std::size_t kappa_samples = 10000;
  double lambda_radius = 0.1;
  double kappa_radius = 0.5;
  std::uint64_t seed = 1;
  ConstraintMode mode = ConstraintMode::kRecurrent;
  /// Robustness radii over at most this many nominal beliefs per class
  /// (0 = all). A subsampled radius is an upper bound and is flagged.
  std::size_t radius_subsample = 0;
};

/// Constraint check at the data's f_sup plus lambda, kappa and ||W_c||.
StabilityReport stability_report(const LstmWeights& w, const std::vector<Sequence>& data,
                                 const EstimationOptions& options);

}  // namespace crnn
