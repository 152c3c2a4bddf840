#include "caplab/quadratic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "caplab/errors.hpp"

namespace caplab {

ImportanceVector::ImportanceVector(std::vector<double> values)
    : values_(std::move(values)) {
  if (values_.empty()) throw DomainError("importance vector: need at least one feature");
  bool any_positive = false;
  for (double v : values_) {
    if (!std::isfinite(v) || v < 0.0) {
      throw DomainError("importance vector: entries must be finite and >= 0");
    }
    any_positive = any_positive || v > 0.0;
  }
  if (!any_positive) {
    throw DomainError("importance vector: at least one importance must be positive");
  }
}

double ImportanceVector::max() const {
  return *std::max_element(values_.begin(), values_.end());
}

const char* to_string(FeaturePhase phase) {
  switch (phase) {
    case FeaturePhase::kIgnored: return "ignored";
    case FeaturePhase::kPolysemantic: return "polysemantic";
    case FeaturePhase::kMonosemantic: return "monosemantic";
  }
  return "?";
}

double expected_loss_closed_form(const EmbeddingMatrix& w,
                                 const ImportanceVector& v, double k) {
  if (v.size() != w.features()) {
    throw DomainError("expected loss: importance size must match feature count");
  }
  if (!(k >= 1.0) || !std::isfinite(k)) {
    throw DomainError("expected loss: kurtosis must be finite and >= 1");
  }
  const Eigen::MatrixXd g = w.gram();
  double fit = 0.0;
  for (int i = 0; i < v.size(); i++) {
    const double d = g(i, i) - v[i];
    fit += d * d;
  }
  // sum over i != j of G_ij^2
  const double interference = g.squaredNorm() - g.diagonal().squaredNorm();
  return (k - 1.0) * fit + 2.0 * interference;
}

double expected_loss_capacity_form(const CapacityVector& c,
                                   const std::vector<double>& norms,
                                   const ImportanceVector& v, double k) {
  if (c.size() != static_cast<int>(norms.size()) || c.size() != v.size()) {
    throw DomainError("capacity-form loss: C, n and v must have equal length");
  }
  if (!(k >= 1.0) || !std::isfinite(k)) {
    throw DomainError("capacity-form loss: kurtosis must be finite and >= 1");
  }
  double loss = 0.0;
  for (int i = 0; i < c.size(); i++) {
    const double n = norms[i];
    if (!std::isfinite(n) || n < 0.0) {
      throw DomainError("capacity-form loss: norms must be finite and >= 0");
    }
    const double d = n - v[i];
    loss += (k - 1.0) * d * d - 2.0 * n * n;
    if (c[i] > 0.0) {
      loss += 2.0 * n * n / c[i];
    } else if (n > 0.0) {
      throw DomainError("capacity-form loss: n_i > 0 requires C_i > 0");
    }
  }
  return loss;
}

double marginal_loss(double c_i, double n_i) {
  if (!(c_i >= 0.0) || !(c_i <= 1.0)) {
    throw DomainError("marginal loss: capacity must lie in [0, 1]");
  }
  if (!std::isfinite(n_i) || n_i < 0.0) {
    throw DomainError("marginal loss: norm must be finite and >= 0");
  }
  if (c_i == 0.0) {
    if (n_i > 0.0) throw DomainError("marginal loss: n_i > 0 requires C_i > 0");
    return 0.0;
  }
  return -2.0 * n_i * n_i / (c_i * c_i);
}

double optimal_embedding_norm(double c_i, double v_i, double k) {
  if (!(c_i >= 0.0) || !(c_i <= 1.0)) {
    throw DomainError("optimal norm: capacity must lie in [0, 1]");
  }
  if (!std::isfinite(v_i) || v_i < 0.0) {
    throw DomainError("optimal norm: importance must be finite and >= 0");
  }
  if (!(k > 1.0) || !std::isfinite(k)) {
    throw DomainError("optimal norm: kurtosis must be finite and > 1");
  }
  if (c_i == 0.0) return 0.0;
  const double denom = (k - 3.0) + 2.0 / c_i;
  // Unreachable for 0 < C <= 1 and k > 1 since denom > k - 1 > 0; kept as a
  // guard against out-of-contract callers.
  if (!(denom > 0.0)) throw DomainError("optimal norm: (k-3) + 2/C_i must be positive");
  return (k - 1.0) * v_i / denom;
}

namespace {

constexpr double kSnapTol = 1e-10;  // capacities this close to {0,1} are snapped

// Pre-clip capacity at multiplier lam: ((k-1) v / lam - 2) / (k-3), k > 3.
double raw_capacity(double v, double lam, double k) {
  return ((k - 1.0) * v / lam - 2.0) / (k - 3.0);
}

AllocationSolution finish_solution(const ImportanceVector& v, int budget,
                                   double k, std::vector<double> c,
                                   std::vector<double> norms, double lambda,
                                   bool degenerate) {
  std::vector<FeaturePhase> phases(c.size());
  for (size_t i = 0; i < c.size(); i++) {
    if (c[i] < kSnapTol) {
      c[i] = 0.0;
      norms[i] = 0.0;
      phases[i] = FeaturePhase::kIgnored;
    } else if (c[i] > 1.0 - kSnapTol) {
      c[i] = 1.0;
      norms[i] = v[static_cast<int>(i)];
      phases[i] = FeaturePhase::kMonosemantic;
    } else {
      phases[i] = FeaturePhase::kPolysemantic;
    }
  }
  return AllocationSolution{CapacityVector(std::move(c), budget),
                            std::move(norms), lambda, std::move(phases), k,
                            degenerate};
}

// k <= 3: the per-feature loss is concave (k < 3) or linear (k = 3) in C_i,
// so the optimum sits at a corner: fully represent the D most important
// features, ties broken toward the lower index. At k = 3 every saturating
// allocation attains the same loss; flag the non-uniqueness.
AllocationSolution solve_concave(const ImportanceVector& v, int budget, double k) {
  const int n = v.size();
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return v[a] > v[b]; });
  std::vector<double> c(n, 0.0), norms(n, 0.0);
  double v_last = 0.0;
  for (int r = 0; r < budget; r++) {
    const int i = order[r];
    c[i] = 1.0;
    norms[i] = v[i];
    v_last = v[i];
  }
  // Any multiplier between the ignored and selected thresholds is valid here;
  // report the importance of the last selected feature.
  return finish_solution(v, budget, k, std::move(c), std::move(norms), v_last,
                         k == 3.0);
}

}  // namespace

AllocationSolution solve_allocation(const ImportanceVector& v, int budget,
                                    double k) {
  const int n = v.size();
  if (budget < 1) throw DomainError("solve_allocation: dimension budget must be >= 1");
  if (n < budget) throw DomainError("solve_allocation: need at least D features (N >= D)");
  if (!(k > 1.0) || !std::isfinite(k)) {
    throw DomainError("solve_allocation: kurtosis must be finite and > 1");
  }
  int positive = 0;
  for (double vi : v.values()) positive += vi > 0.0;
  if (positive < budget) {
    throw DomainError(
        "solve_allocation: fewer than D features with positive importance; "
        "the capacity budget cannot bind");
  }
  if (k <= 3.0) return solve_concave(v, budget, k);

  // Equal importances: the symmetric solution C_i = D/N is exact, so skip
  // the bisection and keep the result free of float noise.
  const bool all_equal = std::all_of(v.values().begin(), v.values().end(),
                                     [&](double x) { return x == v[0]; });
  if (all_equal && n > budget) {
    const double lambda = (k - 1.0) * n * v[0] / ((k - 3.0) * budget + 2.0 * n);
    const double c_eq = static_cast<double>(budget) / n;
    std::vector<double> c(n, c_eq), norms(n, lambda * c_eq);
    return finish_solution(v, budget, k, std::move(c), std::move(norms), lambda,
                           false);
  }

  const auto sum_c = [&](double lam) {
    double s = 0.0;
    for (double vi : v.values()) s += std::clamp(raw_capacity(vi, lam, k), 0.0, 1.0);
    return s;
  };

  // sum_c is continuous and non-increasing in lam; it equals #positive >= D
  // near zero and 0 at (k-1) max v / 2, so the budget level is bracketed.
  double hi = (k - 1.0) * v.max() / 2.0;
  double lo = hi * 1e-18;
  const double tol = std::min(1e-12, hi * 1e-15);
  for (int it = 0; it < 300 && hi - lo > tol; it++) {
    const double mid = 0.5 * (lo + hi);
    if (sum_c(mid) >= budget) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  double lambda = 0.5 * (lo + hi);

  // Re-solve the multiplier in closed form on the active set the bisection
  // identified and keep it when it reproduces the same set; this pins
  // sum C_i = D to machine precision.
  const auto classify = [&](double lam, std::vector<int>& full,
                            std::vector<int>& frac) {
    full.clear();
    frac.clear();
    for (int i = 0; i < n; i++) {
      const double r = raw_capacity(v[i], lam, k);
      if (r >= 1.0 - 1e-9) {
        full.push_back(i);
      } else if (r > 1e-9) {
        frac.push_back(i);
      }
    }
  };
  std::vector<int> full, frac;
  classify(lambda, full, frac);
  if (!frac.empty()) {
    double sv = 0.0;
    for (int i : frac) sv += v[i];
    const double denom =
        (k - 3.0) * (budget - static_cast<double>(full.size())) + 2.0 * frac.size();
    if (denom > 0.0) {
      const double refined = (k - 1.0) * sv / denom;
      std::vector<int> full2, frac2;
      classify(refined, full2, frac2);
      if (refined > 0.0 && full2 == full && frac2 == frac) lambda = refined;
    }
  }

  std::vector<double> c(n), norms(n);
  for (int i = 0; i < n; i++) {
    c[i] = std::clamp(raw_capacity(v[i], lambda, k), 0.0, 1.0);
    if (c[i] >= 1.0) {
      norms[i] = v[i];
    } else if (c[i] <= 0.0) {
      norms[i] = 0.0;
    } else {
      norms[i] = ((k - 1.0) * v[i] - 2.0 * lambda) / (k - 3.0);  // = lambda * C_i
    }
  }
  return finish_solution(v, budget, k, std::move(c), std::move(norms), lambda,
                         false);
}

double equal_importance_lambda(int n_features, double v1, int budget, double k) {
  if (budget < 1 || n_features < budget) {
    throw DomainError("equal_importance_lambda: need N >= D >= 1");
  }
  if (!(v1 > 0.0) || !std::isfinite(v1)) {
    throw DomainError("equal_importance_lambda: V must be positive");
  }
  if (!(k > 3.0) || !std::isfinite(k)) {
    throw DomainError("equal_importance_lambda: requires k > 3");
  }
  return (k - 1.0) * (n_features - 1.0 + v1) / ((k - 3.0) * budget + 2.0 * n_features);
}

PhaseBoundaries phase_boundaries(int n_features, int budget, double k) {
  if (budget < 1 || n_features <= budget) {
    throw DomainError("phase_boundaries: need N > D >= 1");
  }
  if (!(k > 1.0) || !std::isfinite(k)) {
    throw DomainError("phase_boundaries: kurtosis must be finite and > 1");
  }
  if (k <= 3.0) {
    // No partial band: feature 1 flips straight from ignored to fully
    // represented as V crosses the other features' importance.
    return {1.0, 1.0, true};
  }
  const double nm1 = n_features - 1.0;
  const double v_full = (k - 1.0) * nm1 / ((k - 3.0) * (budget - 1.0) + 2.0 * nm1);
  const double v_ignore = 2.0 * nm1 / ((k - 3.0) * budget + 2.0 * nm1);
  return {v_ignore, v_full, false};
}

CovarianceDiagnostics covariance_diagnostics(const EmbeddingMatrix& w,
                                             const ImportanceVector& v,
                                             double k) {
  if (v.size() != w.features()) {
    throw DomainError("covariance diagnostics: importance size must match feature count");
  }
  if (!(k >= 1.0) || !std::isfinite(k)) {
    throw DomainError("covariance diagnostics: kurtosis must be finite and >= 1");
  }
  const int n = w.features();
  const Eigen::MatrixXd g = w.gram();
  CovarianceDiagnostics out;
  out.target_feature_cov.resize(n);
  out.model_feature_cov.resize(n);
  for (int i = 0; i < n; i++) {
    out.target_feature_cov(i) = (k - 1.0) * v[i];
    out.model_feature_cov(i) = (k - 1.0) * g(i, i);
  }
  out.model_cross_cov = 2.0 * g;
  out.model_cross_cov.diagonal().setZero();
  out.target_cross_cov = Eigen::MatrixXd::Zero(n, n);
  return out;
}

}  // namespace caplab
