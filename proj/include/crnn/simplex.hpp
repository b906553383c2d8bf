#pragma once

// Geometry of the probability simplex and its argmax (Voronoi) partition.
//
// The cell of class j is V_j = {p in P_m : p_j > p_i for all i != j}. All
// distances are Euclidean and are measured to the closure of a cell, which
// is the convex polytope {q in P_m : q_j >= q_i for all i}.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <vector>

#include "crnn/errors.hpp"

namespace crnn {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Absolute tolerance for "distance equals zero" and for the simplex sum.
inline constexpr double kZeroDistanceTol = 1e-9;
inline constexpr double kSimplexSumTol = 1e-9;

/// Throws kInvalidInput unless p is a belief vector: m >= 2, finite,
/// nonnegative, summing to one within kSimplexSumTol.
template <typename Derived>
void check_belief(const Eigen::MatrixBase<Derived>& p) {
  using Scalar = typename Derived::Scalar;
  require(p.cols() == 1 && p.size() >= 2, ErrorCode::kInvalidInput,
          "belief vector needs at least two entries");
  require(p.allFinite(), ErrorCode::kInvalidInput, "belief vector has non-finite entries");
  require((p.array() >= Scalar(0)).all(), ErrorCode::kInvalidInput,
          "belief vector has negative entries");
  const double sum = static_cast<double>(p.sum());
  if (std::abs(sum - 1.0) > kSimplexSumTol) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "belief vector sums to " << sum;
    fail(ErrorCode::kInvalidInput, msg.str());
  }
}

template <typename Derived>
Vector<typename Derived::Scalar> softmax(const Eigen::MatrixBase<Derived>& q) {
  require(q.cols() == 1 && q.size() >= 2, ErrorCode::kInvalidInput,
          "softmax needs at least two logits");
  require(q.allFinite(), ErrorCode::kInvalidInput, "softmax input has non-finite entries");
  Vector<typename Derived::Scalar> e = (q.array() - q.maxCoeff()).exp().matrix();
  return e / e.sum();
}

/// log(sum(exp(q))) without overflow.
template <typename Derived>
typename Derived::Scalar log_sum_exp(const Eigen::MatrixBase<Derived>& q) {
  const auto top = q.maxCoeff();
  return top + std::log((q.array() - top).exp().sum());
}

struct ArgmaxResult {
  Eigen::Index label = 0;
  /// True when the maximum is attained by more than one entry.
  bool boundary = false;
};

/// Largest entry; exact ties resolve to the smallest index and set the
/// boundary flag.
template <typename Derived>
ArgmaxResult argmax_label(const Eigen::MatrixBase<Derived>& p) {
  require(p.size() >= 1, ErrorCode::kInvalidInput, "argmax of empty vector");
  ArgmaxResult out;
  for (Eigen::Index i = 1; i < p.size(); ++i) {
    if (p[i] > p[out.label]) out.label = i;
  }
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (i != out.label && p[i] == p[out.label]) out.boundary = true;
  }
  return out;
}

/// Euclidean projection of p onto the closed cell {q in P_m : q_j >= q_i}.
///
/// KKT structure of the projection: the coordinates tied with q_j are the
/// largest p_i, the coordinates clipped to zero are the smallest, and the
/// rest are shifted by a common multiplier. Enumerating (tied count, zero
/// count) over the sorted coordinates visits every candidate active set;
/// each candidate is an equality-constrained least-squares solve in closed
/// form, and the first one satisfying all KKT conditions is the unique
/// minimizer.
template <typename Derived>
Vector<typename Derived::Scalar> project_to_cell(const Eigen::MatrixBase<Derived>& p,
                                                 Eigen::Index j) {
  using Scalar = typename Derived::Scalar;
  check_belief(p);
  const Eigen::Index m = p.size();
  require(j >= 0 && j < m, ErrorCode::kIndexOutOfRange,
          "cell index " + std::to_string(j) + " outside [0, " + std::to_string(m) + ")");

  std::vector<Eigen::Index> others;
  others.reserve(static_cast<std::size_t>(m - 1));
  for (Eigen::Index i = 0; i < m; ++i) {
    if (i != j) others.push_back(i);
  }
  std::stable_sort(others.begin(), others.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return p[a] > p[b]; });
  const auto n_other = static_cast<Eigen::Index>(others.size());

  // prefix[k] = sum of the k largest "other" coordinates.
  std::vector<Scalar> prefix(static_cast<std::size_t>(n_other) + 1, Scalar(0));
  for (Eigen::Index k = 0; k < n_other; ++k) {
    prefix[static_cast<std::size_t>(k) + 1] = prefix[static_cast<std::size_t>(k)] + p[others[k]];
  }

  const Scalar eps = std::numeric_limits<Scalar>::epsilon();
  const Scalar accept_tol = Scalar(1e3) * eps;
  const Scalar fail_tol = std::max(Scalar(1e-9), Scalar(1e4) * eps);

  Scalar best_violation = std::numeric_limits<Scalar>::infinity();
  Eigen::Index best_tied = 0;
  Eigen::Index best_zero = 0;
  Scalar best_mu = 0;
  Scalar best_level = 0;

  for (Eigen::Index tied = 0; tied <= n_other; ++tied) {
    const Scalar group_sum = p[j] + prefix[static_cast<std::size_t>(tied)];
    const Scalar group_mean = group_sum / Scalar(tied + 1);
    for (Eigen::Index zero = 0; zero <= n_other - tied; ++zero) {
      const Eigen::Index free_end = n_other - zero;
      const Scalar free_sum =
          prefix[static_cast<std::size_t>(free_end)] - prefix[static_cast<std::size_t>(tied)];
      const Scalar active = Scalar(tied + 1 + (free_end - tied));
      const Scalar mu = (group_sum + free_sum - Scalar(1)) / active;
      const Scalar level = group_mean - mu;

      Scalar violation = std::max(Scalar(0), -level);
      for (Eigen::Index k = 0; k < tied; ++k) {
        violation = std::max(violation, group_mean - p[others[k]]);
      }
      for (Eigen::Index k = tied; k < free_end; ++k) {
        const Scalar v = p[others[k]] - mu;
        violation = std::max({violation, -v, v - level});
      }
      for (Eigen::Index k = free_end; k < n_other; ++k) {
        violation = std::max(violation, p[others[k]] - mu);
      }
      if (violation < best_violation) {
        best_violation = violation;
        best_tied = tied;
        best_zero = zero;
        best_mu = mu;
        best_level = level;
      }
      if (best_violation <= accept_tol) break;
    }
    if (best_violation <= accept_tol) break;
  }

  if (best_violation > fail_tol) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "cell projection found no KKT point after " << (n_other + 1) * (n_other + 2) / 2
        << " candidate active sets; smallest violation " << best_violation;
    fail(ErrorCode::kNumerical, msg.str());
  }

  Vector<Scalar> q(m);
  q[j] = std::max(Scalar(0), best_level);
  const Eigen::Index free_end = n_other - best_zero;
  for (Eigen::Index k = 0; k < n_other; ++k) {
    const Eigen::Index i = others[k];
    if (k < best_tied) {
      q[i] = best_level;
    } else if (k < free_end) {
      q[i] = std::max(Scalar(0), p[i] - best_mu);
    } else {
      q[i] = Scalar(0);
    }
  }
  return q;
}

/// Distance from p to the closure of V_j (equal to the infimum over V_j).
template <typename Derived>
typename Derived::Scalar cell_distance(const Eigen::MatrixBase<Derived>& p, Eigen::Index j) {
  return (p - project_to_cell(p, j)).norm();
}

/// Class index from the distance criterion: the unique k whose cell is at
/// distance zero while every rival cell is at positive distance. Throws
/// kBoundary when p sits on (or within tolerance of) a cell boundary.
template <typename Derived>
Eigen::Index classify_by_criterion(const Eigen::MatrixBase<Derived>& p) {
  check_belief(p);
  const ArgmaxResult top = argmax_label(p);
  require(!top.boundary, ErrorCode::kBoundary, "belief vector lies on a cell boundary");
  Eigen::Index found = -1;
  int zero_count = 0;
  for (Eigen::Index k = 0; k < p.size(); ++k) {
    if (static_cast<double>(cell_distance(p, k)) <= kZeroDistanceTol) {
      found = k;
      ++zero_count;
    }
  }
  require(zero_count == 1, ErrorCode::kBoundary,
          std::to_string(zero_count) + " cells at zero distance");
  return found;
}

/// Brute-force distance from p to the lattice points of the simplex with
/// spacing `step` that lie in the closed cell of class j. Membership is an
/// exact integer test; used as an independent check of cell_distance.
double grid_oracle_distance(const Eigen::Ref<const Eigen::VectorXd>& p, Eigen::Index j,
                            double step);

}  // namespace crnn
