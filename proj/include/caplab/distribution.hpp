#pragma once

#include <Eigen/Dense>
#include <cstdint>

#include "caplab/rng.hpp"

namespace caplab {

// Sparse symmetric-uniform input family: x_i = s_i * z_i with
// s_i ~ Bernoulli(p) and z_i ~ Uniform(-a, a), a = sqrt(3/p), so that
// E[x_i] = 0 and Var[x_i] = 1 for every sparsity p. The normalized fourth
// moment (kurtosis) is k = E[x^4] = 9/(5p).
class InputDistribution {
 public:
  explicit InputDistribution(double p);

  double p() const { return p_; }
  double half_width() const;  // a = sqrt(3/p)
  double kurtosis() const;    // 9/(5p)

  double sample(Rng& rng) const;

 private:
  double p_;
};

// k(p) = 9/(5p); validates 0 < p <= 1.
double kurtosis_of(double p);

// batch x N matrix of i.i.d. draws. Entries are generated sample-major
// (row by row), two raw draws per entry, so the stream layout is fixed.
Eigen::MatrixXd sample_inputs(const InputDistribution& dist, int n_features,
                              long batch, std::uint64_t seed);

// Same layout, continuing an existing stream; used for chunked generation.
void sample_inputs_into(Rng& rng, const InputDistribution& dist,
                        Eigen::Ref<Eigen::MatrixXd> block);

}  // namespace caplab
