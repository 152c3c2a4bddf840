#include "caplab/capacity.hpp"

#include <algorithm>
#include <cmath>

#include "caplab/errors.hpp"

namespace caplab {

namespace {

// Columns this much smaller (in squared norm) than the largest are treated
// as absent features.
constexpr double kZeroColumnRel = 1e-12;

// Numerical rank cutoff for the compact SVD, relative to the top value.
constexpr double kRankRel = 1e-10;

}  // namespace

CapacityVector::CapacityVector(std::vector<double> values, int dimension_budget)
    : values_(std::move(values)), budget_(dimension_budget) {
  if (budget_ < 1) throw DomainError("capacity vector: dimension budget must be >= 1");
  if (values_.empty()) throw DomainError("capacity vector: need at least one feature");
  double total = 0.0;
  for (double& v : values_) {
    if (!std::isfinite(v) || v < -1e-9 || v > 1.0 + 1e-9) {
      throw DomainError("capacity vector: entries must lie in [0, 1]");
    }
    v = std::clamp(v, 0.0, 1.0);
    total += v;
  }
  if (total > budget_ + 1e-6) {
    throw DomainError("capacity vector: sum exceeds the dimension budget");
  }
}

double CapacityVector::sum() const {
  double s = 0.0;
  for (double v : values_) s += v;
  return s;
}

namespace {

Eigen::VectorXd capacity_values(const Eigen::MatrixXd& m) {
  const Eigen::MatrixXd g = m.transpose() * m;
  const Eigen::VectorXd sq_norms = g.diagonal();
  const double max_norm = sq_norms.maxCoeff();
  Eigen::VectorXd c = Eigen::VectorXd::Zero(g.rows());
  if (max_norm <= 0.0) return c;
  for (Eigen::Index i = 0; i < g.rows(); i++) {
    if (sq_norms(i) < kZeroColumnRel * max_norm) continue;
    // [G^2]_ii = sum_j G_ij^2 because G is symmetric.
    const double denom = g.row(i).squaredNorm();
    c(i) = std::clamp(sq_norms(i) * sq_norms(i) / denom, 0.0, 1.0);
  }
  return c;
}

}  // namespace

double feature_capacity(const EmbeddingMatrix& w, int i) {
  if (i < 0 || i >= w.features()) {
    throw DomainError("feature_capacity: feature index out of range");
  }
  return capacity_values(w.mat())(i);
}

CapacityVector capacity_vector(const EmbeddingMatrix& w) {
  const Eigen::VectorXd c = capacity_values(w.mat());
  return CapacityVector(std::vector<double>(c.data(), c.data() + c.size()), w.dim());
}

double total_capacity(const EmbeddingMatrix& w) {
  if (w.features() < w.dim()) {
    throw DomainError("total_capacity: requires at least as many features as dimensions (N >= D)");
  }
  return capacity_values(w.mat()).sum();
}

CapacityVector alt_capacity_vector(const EmbeddingMatrix& w) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(w.mat(), Eigen::ComputeThinV);
  const Eigen::VectorXd s = svd.singularValues();
  const double cutoff = s.size() > 0 ? kRankRel * s(0) : 0.0;
  int rank = 0;
  while (rank < s.size() && s(rank) > cutoff && s(rank) > 0.0) rank++;
  std::vector<double> c(w.features(), 0.0);
  // Rows of R are the leading right-singular vectors; C~_i is the squared
  // norm of column i of R, i.e. of row i of V restricted to the rank.
  const Eigen::MatrixXd& v = svd.matrixV();
  for (int i = 0; i < w.features(); i++) {
    c[i] = std::clamp(v.row(i).head(rank).squaredNorm(), 0.0, 1.0);
  }
  return CapacityVector(std::move(c), w.dim());
}

McCapacity mc_correlation_capacity(const EmbeddingMatrix& w, int i,
                                   const InputDistribution& dist, long samples,
                                   std::uint64_t seed) {
  if (i < 0 || i >= w.features()) {
    throw DomainError("mc_correlation_capacity: feature index out of range");
  }
  if (samples < 10000) {
    throw DomainError("mc_correlation_capacity: need at least 1e4 samples");
  }
  const Eigen::MatrixXd g = w.gram();
  const Eigen::VectorXd gi = g.row(i).transpose();

  Rng rng(seed);
  const long chunk = 8192;
  Eigen::MatrixXd x;
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  long done = 0;
  while (done < samples) {
    const long b = std::min(chunk, samples - done);
    x.resize(b, w.features());
    sample_inputs_into(rng, dist, x);
    const Eigen::VectorXd xi = x.col(i);
    const Eigen::VectorXd yi = x * gi;
    sx += xi.sum();
    sy += yi.sum();
    sxx += xi.squaredNorm();
    syy += yi.squaredNorm();
    sxy += xi.dot(yi);
    done += b;
  }
  const double n = static_cast<double>(samples);
  const double mx = sx / n, my = sy / n;
  const double var_x = sxx / n - mx * mx;
  const double var_y = syy / n - my * my;
  const double cov = sxy / n - mx * my;
  if (!(var_y > 0.0) || !(var_x > 0.0)) return {0.0, true};
  return {std::clamp(cov * cov / (var_x * var_y), 0.0, 1.0), false};
}

}  // namespace caplab
