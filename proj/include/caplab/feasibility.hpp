#pragma once

#include <Eigen/Dense>
#include <vector>

#include "caplab/capacity.hpp"
#include "caplab/matrix.hpp"

namespace caplab {

// N x N orthogonal extension state used by the constructive realization;
// the first `budget` rows are the embedding under construction, so column i
// contributes its top-`budget` squared norm as capacity.
struct ExtensionState {
  Eigen::MatrixXd u;
  int budget = 0;
};

// Rotate the final two columns of `state` in their plane so that their
// top-`budget` squared norms become (target_first, target_second). The last
// column must be a fresh coordinate direction (zero top part) and the targets
// must sum to the second-to-last column's current top norm (within 1e-10).
// The rotation angle is solved by bisection on [0, pi/2].
ExtensionState split_pair(const ExtensionState& state, double target_first,
                          double target_second);

// Constructs a semiorthogonal embedding (W W^T = I_D) whose feature
// capacities equal the requested vector. Requires sum C_i = D (within 1e-9)
// and N >= D. Recursive merge of the two smallest capacities, with the
// complement trick (realize 1 - C with budget N - D) when no pair fits.
EmbeddingMatrix realize_capacities(const CapacityVector& c);

// Realizes a capacity/norm pair from an allocation solution: features with
// 0 < C_i < 1 must share one ratio n_i / C_i = lambda (to 1e-6 relative) and
// are emitted as a single scaled semiorthogonal block; C_i = 1 features
// become singleton blocks with arbitrary positive norm; C_i = 0 features are
// zero columns.
EmbeddingMatrix realize_allocation(const CapacityVector& c,
                                   const std::vector<double>& norms);

}  // namespace caplab
