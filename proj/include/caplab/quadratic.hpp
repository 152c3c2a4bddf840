#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "caplab/capacity.hpp"
#include "caplab/matrix.hpp"

namespace caplab {

// Non-negative feature importances with at least one positive entry.
class ImportanceVector {
 public:
  explicit ImportanceVector(std::vector<double> values);

  const std::vector<double>& values() const { return values_; }
  int size() const { return static_cast<int>(values_.size()); }
  double operator[](int i) const { return values_[i]; }
  double max() const;

 private:
  std::vector<double> values_;
};

enum class FeaturePhase { kIgnored, kPolysemantic, kMonosemantic };
const char* to_string(FeaturePhase phase);

// Optimal capacity allocation for the quadratic model.
struct AllocationSolution {
  CapacityVector capacities;
  std::vector<double> norms;        // n_i = |W_i|^2 at the optimum
  double lagrange = 0.0;            // shadow price of the budget constraint
  std::vector<FeaturePhase> phases;
  double kurtosis = 0.0;
  bool degenerate = false;          // k == 3: any saturating allocation is optimal
};

// Expected loss of the quadratic model in Gram form:
//   E[L] = (k-1) sum_i (|W_i|^2 - v_i)^2 + 2 sum_{i != j} (W_i . W_j)^2
// (bias at its optimum b = -sum_i [W^T W - diag(v)]_ii).
double expected_loss_closed_form(const EmbeddingMatrix& w,
                                 const ImportanceVector& v, double k);

// Same loss re-parameterized by capacities and embedding norms:
//   L = (k-1) sum (n_i - v_i)^2 - 2 sum n_i^2 + 2 sum n_i^2 / C_i
// with n_i^2/C_i = 0 when n_i = C_i = 0.
double expected_loss_capacity_form(const CapacityVector& c,
                                   const std::vector<double>& norms,
                                   const ImportanceVector& v, double k);

// dL/dC_i = -2 n_i^2 / C_i^2 (0 when n_i = C_i = 0).
double marginal_loss(double c_i, double n_i);

// n_i* = (k-1) v_i / ((k-3) + 2/C_i); 0 as C_i -> 0.
double optimal_embedding_norm(double c_i, double v_i, double k);

// Water-filling solution of min L s.t. sum C_i = D, 0 <= C_i <= 1.
// Requires k > 1 and at least D features with positive importance.
// k > 3: interior solution via bisection on the multiplier.
// k <= 3: concave regime; the D most important features are fully
// represented (ties to the lower index), k == 3 flags non-uniqueness.
AllocationSolution solve_allocation(const ImportanceVector& v, int budget,
                                    double k);

// Multiplier for v = (V, 1, ..., 1) with all features partially represented:
//   lambda = (k-1)(N-1+V) / ((k-3)D + 2N). Requires k > 3.
double equal_importance_lambda(int n_features, double v1, int budget, double k);

struct PhaseBoundaries {
  double v_ignore = 0.0;  // below: feature 1 ignored
  double v_full = 0.0;    // above: feature 1 fully represented
  bool degenerate = false;  // k <= 3: no partial band, both collapse to 1
};

// First-feature phase boundaries for v = (V, 1, ..., 1):
//   V_full   = (k-1)(N-1) / ((k-3)(D-1) + 2(N-1))
//   V_ignore = 2(N-1) / ((k-3)D + 2(N-1))
PhaseBoundaries phase_boundaries(int n_features, int budget, double k);

// Second-moment diagnostics of the quadratic model against the target.
struct CovarianceDiagnostics {
  Eigen::VectorXd target_feature_cov;  // Cov[y,  x_i^2] = v_i (k-1)
  Eigen::VectorXd model_feature_cov;   // Cov[y~, x_i^2] = |W_i|^2 (k-1)
  Eigen::MatrixXd model_cross_cov;     // Cov[y~, x_i x_j] = 2 W_i . W_j, i != j
  Eigen::MatrixXd target_cross_cov;    // Cov[y,  x_i x_j] = 0
};
CovarianceDiagnostics covariance_diagnostics(const EmbeddingMatrix& w,
                                             const ImportanceVector& v,
                                             double k);

}  // namespace caplab
