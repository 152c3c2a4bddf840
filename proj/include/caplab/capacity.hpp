#pragma once

#include <cstdint>
#include <vector>

#include "caplab/distribution.hpp"
#include "caplab/matrix.hpp"

namespace caplab {

// Per-feature capacities together with the dimension budget D they are
// measured against. Values are in [0, 1] and sum to at most D (+ slack).
class CapacityVector {
 public:
  CapacityVector(std::vector<double> values, int dimension_budget);

  const std::vector<double>& values() const { return values_; }
  int dimension_budget() const { return budget_; }
  int size() const { return static_cast<int>(values_.size()); }
  double operator[](int i) const { return values_[i]; }
  double sum() const;

 private:
  std::vector<double> values_;
  int budget_;
};

// Fraction of an embedding dimension used by feature i:
//   C_i = (W_i . W_i)^2 / sum_j (W_i . W_j)^2,
// computed through the Gram matrix as G_ii^2 / [G^2]_ii. Columns whose
// squared norm is below 1e-12 times the largest get capacity 0.
double feature_capacity(const EmbeddingMatrix& w, int i);
CapacityVector capacity_vector(const EmbeddingMatrix& w);

// sum_i C_i. Requires N >= D, the regime where the bound sum <= D holds.
double total_capacity(const EmbeddingMatrix& w);

// SVD-based alternative definition: for the compact SVD W = Q S R,
// C~_i = [R^T R]_ii. Sums exactly to rank(W) and coincides with the
// correlation capacity on efficient matrices.
CapacityVector alt_capacity_vector(const EmbeddingMatrix& w);

struct McCapacity {
  double value = 0.0;
  bool degenerate = false;  // zero output variance (absent feature)
};

// Sample squared correlation between x_i and y_i = (W^T W x)_i under `dist`.
// Converges to feature_capacity(w, i) for unit-variance independent inputs.
McCapacity mc_correlation_capacity(const EmbeddingMatrix& w, int i,
                                   const InputDistribution& dist, long samples,
                                   std::uint64_t seed);

}  // namespace caplab
