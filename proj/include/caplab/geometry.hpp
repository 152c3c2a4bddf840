#pragma once

#include <Eigen/Dense>
#include <vector>

#include "caplab/matrix.hpp"

namespace caplab {

// Compact SVD W = Q diag(S) R with Q (D x r) orthonormal columns, S positive
// descending, R (r x N) orthonormal rows; r is the numerical rank at a
// relative cutoff of 1e-10.
struct CompactSvd {
  Eigen::MatrixXd q;
  Eigen::VectorXd s;
  Eigen::MatrixXd r;
};
CompactSvd singular_value_decomposition(const EmbeddingMatrix& w);

// A matrix is efficient when it attains the capacity bound:
// D - sum_i C_i <= tol. Requires N >= D.
bool is_efficient(const EmbeddingMatrix& w, double tol = 1e-6);

// One semiorthogonal block of an efficient matrix: the features it owns, the
// dimension of its subspace, and its scale (squared singular value).
struct Block {
  std::vector<int> features;
  int subspace_dim = 0;
  double scale = 0.0;
};

struct BlockDecomposition {
  std::vector<Block> blocks;       // ordered by descending scale
  std::vector<int> ignored;        // zero columns
  std::vector<int> ambiguous;      // features touching several clusters
  double residual_efficiency_gap = 0.0;  // D - sum_i C_i
  bool is_efficient = false;
};

// Recovers the block-semiorthogonal structure W = Q B P of an efficient
// matrix: clusters singular values by relative gap (> tol starts a new
// cluster) and assigns feature j to the cluster whose rows of R carry its
// column support (entries above 1e-8 * max|R|). Inefficient matrices come
// back with diagnostics instead of errors.
BlockDecomposition block_decomposition(const EmbeddingMatrix& w,
                                       double tol = 1e-6);

// Checks a claimed decomposition directly: cross-block Gram entries vanish
// and each block is lambda_k-semiorthogonal on its subspace, all within tol.
bool verify_block_form(const EmbeddingMatrix& w, const BlockDecomposition& dec,
                       double tol = 1e-6);

}  // namespace caplab
