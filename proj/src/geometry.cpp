#include "caplab/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "caplab/capacity.hpp"
#include "caplab/errors.hpp"

namespace caplab {

namespace {

constexpr double kRankRel = 1e-10;        // numerical rank cutoff
constexpr double kSupportRel = 1e-8;      // feature-to-cluster support threshold
constexpr double kZeroColumnRel = 1e-12;  // same convention as capacity_vector

}  // namespace

CompactSvd singular_value_decomposition(const EmbeddingMatrix& w) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(w.mat(),
                                        Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd s = svd.singularValues();
  const double cutoff = s.size() > 0 ? kRankRel * s(0) : 0.0;
  int rank = 0;
  while (rank < s.size() && s(rank) > cutoff && s(rank) > 0.0) rank++;

  CompactSvd out;
  out.q = svd.matrixU().leftCols(rank);
  out.s = s.head(rank);
  out.r = svd.matrixV().leftCols(rank).transpose();

  // Jacobi SVD has no failure flag; vouch for the factorization directly.
  const double scale = std::max(1.0, w.mat().cwiseAbs().maxCoeff());
  const double residual =
      (w.mat() - out.q * out.s.asDiagonal() * out.r).cwiseAbs().maxCoeff();
  if (residual > 1e-8 * scale) {
    throw DomainError("svd: factorization residual " + format_g12(residual) +
                      " exceeds tolerance (did not converge)");
  }
  return out;
}

bool is_efficient(const EmbeddingMatrix& w, double tol) {
  return w.dim() - total_capacity(w) <= tol;
}

BlockDecomposition block_decomposition(const EmbeddingMatrix& w, double tol) {
  if (w.features() < w.dim()) {
    throw DomainError("block_decomposition: requires N >= D");
  }
  BlockDecomposition out;
  out.residual_efficiency_gap = w.dim() - total_capacity(w);

  // Set aside absent features; the decomposition works on the rest.
  const Eigen::VectorXd sq_norms = w.gram().diagonal();
  const double max_norm = sq_norms.maxCoeff();
  std::vector<int> live;
  for (int i = 0; i < w.features(); i++) {
    if (max_norm <= 0.0 || sq_norms(i) < kZeroColumnRel * max_norm) {
      out.ignored.push_back(i);
    } else {
      live.push_back(i);
    }
  }
  if (live.empty()) {
    out.is_efficient = false;
    return out;
  }

  Eigen::MatrixXd live_mat(w.dim(), live.size());
  for (size_t j = 0; j < live.size(); j++) live_mat.col(j) = w.mat().col(live[j]);
  const CompactSvd svd = singular_value_decomposition(EmbeddingMatrix(live_mat));
  const int rank = static_cast<int>(svd.s.size());

  // Cluster singular values by relative gap.
  std::vector<int> cluster_of(rank, 0);
  int n_clusters = rank > 0 ? 1 : 0;
  for (int a = 1; a < rank; a++) {
    if ((svd.s(a - 1) - svd.s(a)) / svd.s(0) > tol) n_clusters++;
    cluster_of[a] = n_clusters - 1;
  }

  out.blocks.assign(n_clusters, Block{});
  for (int a = 0; a < rank; a++) {
    Block& blk = out.blocks[cluster_of[a]];
    blk.subspace_dim++;
    blk.scale += svd.s(a) * svd.s(a);
  }
  for (Block& blk : out.blocks) blk.scale /= blk.subspace_dim;

  // A feature belongs to the cluster whose rows of R cover its column.
  const double support = kSupportRel * svd.r.cwiseAbs().maxCoeff();
  for (size_t j = 0; j < live.size(); j++) {
    int owner = -1;
    bool multiple = false;
    for (int a = 0; a < rank; a++) {
      if (std::abs(svd.r(a, static_cast<int>(j))) <= support) continue;
      if (owner == -1) {
        owner = cluster_of[a];
      } else if (owner != cluster_of[a]) {
        multiple = true;
      }
    }
    if (owner == -1 || multiple) {
      out.ambiguous.push_back(live[j]);
    } else {
      out.blocks[owner].features.push_back(live[j]);
    }
  }

  out.is_efficient = out.residual_efficiency_gap <= tol && out.ambiguous.empty();
  return out;
}

bool verify_block_form(const EmbeddingMatrix& w, const BlockDecomposition& dec,
                       double tol) {
  if (!dec.ambiguous.empty()) return false;

  // Every feature must be accounted for exactly once.
  std::vector<int> owner(w.features(), -2);
  for (int i : dec.ignored) {
    if (i < 0 || i >= w.features() || owner[i] != -2) return false;
    owner[i] = -1;
  }
  for (size_t b = 0; b < dec.blocks.size(); b++) {
    for (int i : dec.blocks[b].features) {
      if (i < 0 || i >= w.features() || owner[i] != -2) return false;
      owner[i] = static_cast<int>(b);
    }
  }
  for (int o : owner) {
    if (o == -2) return false;
  }

  // Cross-block interference: Gram entries across different owners vanish.
  const Eigen::MatrixXd g = w.gram();
  const double g_scale = std::max(1.0, g.cwiseAbs().maxCoeff());
  for (int i = 0; i < w.features(); i++) {
    for (int j = i + 1; j < w.features(); j++) {
      if (owner[i] != owner[j] && std::abs(g(i, j)) > tol * g_scale) return false;
    }
  }

  // Each block alone is sqrt(lambda_k)-semiorthogonal on its subspace: its
  // nonzero singular values all equal sqrt(lambda_k) with multiplicity D_k.
  for (const Block& blk : dec.blocks) {
    if (blk.features.empty() || blk.subspace_dim < 1) return false;
    Eigen::MatrixXd sub(w.dim(), blk.features.size());
    for (size_t j = 0; j < blk.features.size(); j++) {
      sub.col(j) = w.mat().col(blk.features[j]);
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(sub);
    const Eigen::VectorXd s = svd.singularValues();
    if (s.size() < blk.subspace_dim) return false;
    const double band = tol * std::max(1.0, blk.scale);
    for (int a = 0; a < s.size(); a++) {
      const double sq = s(a) * s(a);
      if (a < blk.subspace_dim) {
        if (std::abs(sq - blk.scale) > band) return false;
      } else if (sq > band) {
        return false;
      }
    }
  }

  // Ignored columns must actually be (near) zero.
  const double w_scale = std::max(1.0, w.mat().cwiseAbs().maxCoeff());
  for (int i : dec.ignored) {
    if (w.mat().col(i).cwiseAbs().maxCoeff() > tol * w_scale) return false;
  }
  return true;
}

}  // namespace caplab
