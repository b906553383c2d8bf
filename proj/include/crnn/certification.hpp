#pragma once

// Belief-deviation bound, robustness radii over the argmax partition and the
// certified input-perturbation budget.
//
//   eta = kappa ||W_c|| / ((1 - lambda) sqrt(m))
//   ||p(x) - p(x~)|| <= eta ||x - x~||_linf
//   eps_k = min over nominal class-k beliefs p and rivals j != k of d(p, V_j)
//   x~ is classified as k whenever ||x - x~||_linf < eps_k / eta for some
//   nominal x of class k.

#include <Eigen/Core>

#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "crnn/lstm.hpp"

namespace crnn {

/// Throws kUnstableModel for lambda >= 1.
double eta_bound(double kappa, double lambda, double wc_norm, Eigen::Index m);

/// ((1 - lambda^t) / (1 - lambda)) kappa d_inf: the bound on the state
/// deviation after t steps.
double hidden_deviation_bound(double kappa, double lambda, int t, double d_inf);

struct NominalSet {
  int cls = 0;
  /// Positions in the dataset, ascending.
  std::vector<std::size_t> members;
  std::vector<std::string> ids;

  bool empty() const { return members.empty(); }
};

/// Class-k sequences the model classifies as k with a strict argmax.
NominalSet nominal_set(const LstmWeights& w, const std::vector<Sequence>& dataset, int k);

/// Minimum over beliefs and rival classes of cell_distance. Every belief must
/// have p_k maximal; a tie makes it a boundary belief with radius 0.
/// Throws kUndefinedRadius on an empty set.
double robustness_radius(const std::vector<Eigen::VectorXd>& beliefs, int k, Eigen::Index m);

enum class ConstantsSource { kEmpirical, kAssumed };

struct ClassCertificate {
  int cls = 0;
  std::size_t nominal_count = 0;
  /// Empty when the nominal set is empty (radius undefined).
  std::optional<double> epsilon;
  std::vector<std::string> nominal_ids;
};

struct RobustnessCertificate {
  Eigen::Index m = 0;
  ConstantsSource source = ConstantsSource::kEmpirical;
  double inflation = 1.0;
  double kappa_hat = 0;
  double lambda_hat = 0;
  double kappa_used = 0;
  double lambda_used = 0;
  double wc_norm = 0;
  double eta = 0;
  /// Radii computed on a subsample of the nominal set (upper bounds).
  bool radius_subsampled = false;
  std::vector<ClassCertificate> classes;

  /// Recomputes eta from kappa_used, lambda_used, wc_norm and m.
  double recomputed_eta() const;
  /// Certified budget eps_k / eta. +inf when eta == 0 (degenerate).
  bool degenerate() const { return eta == 0.0; }

  std::string to_text() const;
  static RobustnessCertificate from_text(const std::string& text);
};

/// Inflates the estimates: kappa_used = inflation * kappa_hat and
/// 1 / (1 - lambda_used) = inflation / (1 - lambda_hat).
RobustnessCertificate make_certificate(double kappa_hat, double lambda_hat, double wc_norm,
                                       Eigen::Index m, double inflation,
                                       ConstantsSource source = ConstantsSource::kEmpirical);

/// eps_k / eta. Throws kUndefinedRadius when class k has no radius.
double certified_budget(const RobustnessCertificate& cert, int k);

struct CertifiedCheck {
  bool certified = false;
  std::size_t witness = 0;
  double distance = std::numeric_limits<double>::infinity();
};

/// Nearest nominal sequence in the linf sequence distance; certified iff that
/// distance is below the budget.
CertifiedCheck check_certified(const Sequence& perturbed, const std::vector<Sequence>& nominal,
                               double budget);

}  // namespace crnn
