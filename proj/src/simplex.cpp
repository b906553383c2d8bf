#include "crnn/simplex.hpp"

namespace crnn {
namespace {

struct GridWalk {
  const Eigen::Ref<const Eigen::VectorXd>& p;
  std::vector<Eigen::Index> others;
  double n;  // lattice points are v / n
  long cap;
  double best;

  // Assigns lattice values to others[pos..], which must sum to `remaining`
  // with each value <= cap.
  void walk(std::size_t pos, long remaining, double partial) {
    if (partial >= best) return;
    const Eigen::Index i = others[pos];
    if (pos + 1 == others.size()) {
      if (remaining > cap) return;
      const double d = static_cast<double>(remaining) / n - p[i];
      best = std::min(best, partial + d * d);
      return;
    }
    const long hi = std::min(cap, remaining);
    for (long v = 0; v <= hi; ++v) {
      const double d = static_cast<double>(v) / n - p[i];
      walk(pos + 1, remaining - v, partial + d * d);
    }
  }
};

}  // namespace

double grid_oracle_distance(const Eigen::Ref<const Eigen::VectorXd>& p, Eigen::Index j,
                            double step) {
  const Eigen::Index m = p.size();
  require(m >= 2, ErrorCode::kInvalidInput, "need m >= 2");
  require(m <= 4, ErrorCode::kUnsupportedDimension,
          "grid oracle enumerates m <= 4 only, got m = " + std::to_string(m));
  require(j >= 0 && j < m, ErrorCode::kIndexOutOfRange, "cell index out of range");
  require(step > 0.0 && step <= 1.0, ErrorCode::kInvalidInput, "step must lie in (0, 1]");
  const long n = std::lround(1.0 / step);
  require(std::abs(static_cast<double>(n) * step - 1.0) <= 1e-9, ErrorCode::kInvalidInput,
          "1/step must be an integer");

  GridWalk g{p, {}, static_cast<double>(n), 0, std::numeric_limits<double>::infinity()};
  for (Eigen::Index i = 0; i < m; ++i) {
    if (i != j) g.others.push_back(i);
  }
  // Coordinate j takes the value cap; every other coordinate is <= cap.
  for (long cap = (n + m - 1) / m; cap <= n; ++cap) {
    g.cap = cap;
    const double d = static_cast<double>(cap) / g.n - p[j];
    g.walk(0, n - cap, d * d);
  }
  return std::sqrt(g.best);
}

}  // namespace crnn
