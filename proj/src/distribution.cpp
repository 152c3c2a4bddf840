#include "caplab/distribution.hpp"

#include <cmath>

#include "caplab/errors.hpp"

namespace caplab {

InputDistribution::InputDistribution(double p) : p_(p) {
  if (!(p > 0.0) || !(p <= 1.0)) {
    throw DomainError("input distribution: sparsity p must be in (0, 1]");
  }
}

double InputDistribution::half_width() const { return std::sqrt(3.0 / p_); }

double InputDistribution::kurtosis() const { return 9.0 / (5.0 * p_); }

double InputDistribution::sample(Rng& rng) const {
  // Two raw draws per entry regardless of the gate outcome, so the stream
  // position depends only on how many entries were generated.
  const double gate = rng.uniform01();
  const double u = rng.uniform01();
  if (gate >= p_) return 0.0;
  const double a = half_width();
  return a * (2.0 * u - 1.0);
}

double kurtosis_of(double p) {
  if (!(p > 0.0) || !(p <= 1.0)) {
    throw DomainError("kurtosis_of: sparsity p must be in (0, 1]");
  }
  return 9.0 / (5.0 * p);
}

void sample_inputs_into(Rng& rng, const InputDistribution& dist,
                        Eigen::Ref<Eigen::MatrixXd> block) {
  for (Eigen::Index s = 0; s < block.rows(); s++) {
    for (Eigen::Index j = 0; j < block.cols(); j++) {
      block(s, j) = dist.sample(rng);
    }
  }
}

Eigen::MatrixXd sample_inputs(const InputDistribution& dist, int n_features,
                              long batch, std::uint64_t seed) {
  if (n_features < 1) throw DomainError("sample_inputs: need at least one feature");
  if (batch < 1) throw DomainError("sample_inputs: batch must be positive");
  Eigen::MatrixXd x(batch, n_features);
  Rng rng(seed);
  sample_inputs_into(rng, dist, x);
  return x;
}

}  // namespace caplab
