#include "caplab/feasibility.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "caplab/errors.hpp"

namespace caplab {

namespace {

constexpr double kBinaryTol = 1e-12;  // entries this close to {0,1} count as exact

double top_norm(const Eigen::MatrixXd& u, int budget, Eigen::Index col) {
  return u.col(col).head(budget).squaredNorm();
}

// Rotation of the last two columns by theta; keeps the matrix orthogonal.
void rotate_last_pair(Eigen::MatrixXd& u, double theta) {
  const Eigen::Index n = u.cols();
  const Eigen::VectorXd a = u.col(n - 2), b = u.col(n - 1);
  const double c = std::cos(theta), s = std::sin(theta);
  u.col(n - 2) = c * a + s * b;
  u.col(n - 1) = -s * a + c * b;
}

// Solve for theta in [0, pi/2] so that after rotation the second-to-last
// column's top norm equals `target`. With a fresh last column the norm is
// cos^2(theta) * C, which sweeps [C, 0] monotonically. Targets that land a
// float ulp outside the sweep clamp to the matching endpoint.
double solve_theta(const Eigen::MatrixXd& u, int budget, double target) {
  const Eigen::Index n = u.cols();
  const auto norm_at = [&](double theta) {
    const double c = std::cos(theta), s = std::sin(theta);
    return (c * u.col(n - 2).head(budget) + s * u.col(n - 1).head(budget)).squaredNorm();
  };
  double lo = 0.0, hi = std::numbers::pi / 2.0;
  if (target >= norm_at(lo)) return lo;
  if (target <= norm_at(hi)) return hi;
  while (hi - lo > 1e-15) {
    const double mid = 0.5 * (lo + hi);
    if (norm_at(mid) >= target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

bool near_binary(double c) {
  return c <= kBinaryTol || c >= 1.0 - kBinaryTol;
}

// Core construction: N x N orthogonal U whose column top-`budget` squared
// norms equal c. Maintains sum(c) == budget and c_i in [0,1].
Eigen::MatrixXd realize_orthogonal(const std::vector<double>& c, int budget) {
  const int n = static_cast<int>(c.size());

  if (std::all_of(c.begin(), c.end(), near_binary)) {
    // Base case: a permuted identity; ones on the first `budget` rows.
    Eigen::MatrixXd u = Eigen::MatrixXd::Zero(n, n);
    int top = 0, bottom = budget;
    for (int i = 0; i < n; i++) {
      if (c[i] >= 1.0 - kBinaryTol) {
        u(top++, i) = 1.0;
      } else {
        u(bottom++, i) = 1.0;
      }
    }
    return u;
  }

  // Merge the two smallest capacities when they fit inside one column; the
  // two smallest have the minimal pairwise sum, so this tests all pairs.
  int i0 = 0, i1 = 1;
  if (c[i1] < c[i0]) std::swap(i0, i1);
  for (int i = 2; i < n; i++) {
    if (c[i] < c[i0]) {
      i1 = i0;
      i0 = i;
    } else if (c[i] < c[i1]) {
      i1 = i;
    }
  }
  const int lo_idx = std::min(i0, i1), hi_idx = std::max(i0, i1);

  if (c[i0] + c[i1] <= 1.0 + kBinaryTol) {
    // Recurse on the merged tuple with the merged entry last.
    std::vector<double> merged;
    merged.reserve(n - 1);
    for (int i = 0; i < n; i++) {
      if (i != lo_idx && i != hi_idx) merged.push_back(c[i]);
    }
    merged.push_back(std::min(c[i0] + c[i1], 1.0));
    Eigen::MatrixXd inner = realize_orthogonal(merged, budget);

    // Extend with a fresh coordinate (the new last row/column) and split the
    // merged column into the requested pair.
    Eigen::MatrixXd u = Eigen::MatrixXd::Zero(n, n);
    u.topLeftCorner(n - 1, n - 1) = inner;
    u(n - 1, n - 1) = 1.0;
    const double theta = solve_theta(u, budget, c[lo_idx]);
    rotate_last_pair(u, theta);

    // Undo the reordering: the split pair goes back to lo_idx and hi_idx.
    Eigen::MatrixXd out(n, n);
    int cur = 0;
    for (int i = 0; i < n; i++) {
      if (i == lo_idx) {
        out.col(i) = u.col(n - 2);
      } else if (i == hi_idx) {
        out.col(i) = u.col(n - 1);
      } else {
        out.col(i) = u.col(cur++);
      }
    }
    return out;
  }

  // No pair fits: every pairwise sum exceeds 1, so all complement pairs sum
  // below 1. Realize the complement against the remaining rows and swap the
  // row blocks.
  std::vector<double> comp(n);
  for (int i = 0; i < n; i++) comp[i] = std::clamp(1.0 - c[i], 0.0, 1.0);
  const Eigen::MatrixXd uc = realize_orthogonal(comp, n - budget);
  Eigen::MatrixXd u(n, n);
  u.topRows(budget) = uc.bottomRows(budget);
  u.bottomRows(n - budget) = uc.topRows(n - budget);
  return u;
}

}  // namespace

ExtensionState split_pair(const ExtensionState& state, double target_first,
                          double target_second) {
  const Eigen::Index n = state.u.cols();
  if (n < 2 || state.u.rows() != n) {
    throw DomainError("split_pair: state must be a square matrix with >= 2 columns");
  }
  if (state.budget < 1 || state.budget > n) {
    throw DomainError("split_pair: budget out of range");
  }
  if (target_first < -1e-12 || target_second < -1e-12) {
    throw DomainError("split_pair: targets must be non-negative");
  }
  if ((state.u.transpose() * state.u - Eigen::MatrixXd::Identity(n, n))
          .cwiseAbs()
          .maxCoeff() > 1e-8) {
    throw DomainError("split_pair: state columns must be orthonormal");
  }
  // The last column has to be a fresh direction: no mass in the top rows.
  if (top_norm(state.u, state.budget, n - 1) > 1e-10) {
    throw DomainError("split_pair: last column must be a fresh coordinate direction");
  }
  const double available = top_norm(state.u, state.budget, n - 2);
  if (std::abs(target_first + target_second - available) > 1e-10) {
    throw DomainError("split_pair: targets must sum to the column's top norm");
  }
  ExtensionState out = state;
  const double theta = solve_theta(out.u, out.budget, std::clamp(target_first, 0.0, available));
  rotate_last_pair(out.u, theta);
  return out;
}

EmbeddingMatrix realize_capacities(const CapacityVector& c) {
  const int n = c.size();
  const int d = c.dimension_budget();
  if (n < d) {
    throw DomainError("realize_capacities: need at least D features (N >= D)");
  }
  if (std::abs(c.sum() - d) > 1e-9) {
    throw DomainError("realize_capacities: capacities must sum to the dimension budget");
  }
  // Rescale the tiny residual so the recursion sees an exactly consistent sum.
  std::vector<double> values = c.values();
  const double total = c.sum();
  if (total > 0.0 && total != d) {
    const double scale = d / total;
    for (double& v : values) v = std::clamp(v * scale, 0.0, 1.0);
  }
  const Eigen::MatrixXd u = realize_orthogonal(values, d);
  return EmbeddingMatrix(u.topRows(d));
}

EmbeddingMatrix realize_allocation(const CapacityVector& c,
                                   const std::vector<double>& norms) {
  const int n = c.size();
  const int d = c.dimension_budget();
  if (static_cast<int>(norms.size()) != n) {
    throw DomainError("realize_allocation: capacities and norms must have equal length");
  }
  if (n < d) {
    throw DomainError("realize_allocation: need at least D features (N >= D)");
  }
  if (std::abs(c.sum() - d) > 1e-8) {
    throw DomainError("realize_allocation: capacities must sum to the dimension budget");
  }

  std::vector<int> fractional, full;
  double lambda = -1.0;
  for (int i = 0; i < n; i++) {
    const double ci = c[i], ni = norms[i];
    if (!std::isfinite(ni) || ni < 0.0) {
      throw DomainError("realize_allocation: norms must be finite and >= 0");
    }
    if (ci <= 0.0) {
      if (ni > 0.0) {
        throw DomainError("realize_allocation: positive norm on a zero-capacity feature");
      }
      continue;
    }
    if (ni <= 0.0) {
      throw DomainError("realize_allocation: represented features need a positive norm");
    }
    if (ci >= 1.0) {
      full.push_back(i);
      continue;
    }
    const double ratio = ni / ci;
    if (lambda < 0.0) {
      lambda = ratio;
    } else if (std::abs(ratio - lambda) > 1e-6 * std::max(1.0, lambda)) {
      throw DomainError(
          "realize_allocation: fractional features must share one n_i/C_i ratio");
    }
    fractional.push_back(i);
  }

  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(d, n);
  int row = 0;
  if (!fractional.empty()) {
    // One scaled semiorthogonal block covering all fractional features.
    const int df = d - static_cast<int>(full.size());
    if (df < 1) {
      throw DomainError("realize_allocation: fractional capacities exceed the remaining budget");
    }
    std::vector<double> cf;
    cf.reserve(fractional.size());
    double cf_sum = 0.0;
    for (int i : fractional) {
      cf.push_back(c[i]);
      cf_sum += c[i];
    }
    if (std::abs(cf_sum - df) > 1e-7) {
      throw DomainError("realize_allocation: fractional capacities must sum to an integer budget");
    }
    // Absorb the float residual so the inner construction sees an exact sum.
    for (double& v : cf) v = std::clamp(v * (df / cf_sum), 0.0, 1.0);
    const EmbeddingMatrix block = realize_capacities(CapacityVector(cf, df));
    const double scale = std::sqrt(lambda);
    for (size_t j = 0; j < fractional.size(); j++) {
      w.col(fractional[j]).head(df) = scale * block.mat().col(static_cast<int>(j));
    }
    row = df;
  }
  for (int i : full) {
    w(row++, i) = std::sqrt(norms[i]);
  }
  return EmbeddingMatrix(std::move(w));
}

}  // namespace caplab
