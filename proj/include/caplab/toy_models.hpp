#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "caplab/capacity.hpp"
#include "caplab/distribution.hpp"
#include "caplab/quadratic.hpp"

namespace caplab {

enum class ModelFamily { kRegression, kAutoencoder };
enum class Nonlinearity { kQuadratic, kRelu, kGelu };

const char* to_string(ModelFamily family);
const char* to_string(Nonlinearity nl);
ModelFamily parse_family(const std::string& name);
Nonlinearity parse_nonlinearity(const std::string& name);

// Small scalar-target / reconstruction toy models sharing one embedding
// matrix W (D x N):
//   regression:  y~(x) = sum_a sigma((W x)_a) + b,        scalar bias
//   autoencoder: x^(x) = sigma(W^T W x + b),               N-vector bias
// trained against y(x) = sum_i v_i sigma(x_i) (regression) or the
// importance-weighted reconstruction of x (autoencoder).
struct ModelSpec {
  ModelFamily family;
  Nonlinearity nonlinearity;
  int n_features;
  int embedding_dim;
  ImportanceVector importances;

  void validate() const;
  int bias_size() const {
    return family == ModelFamily::kRegression ? 1 : n_features;
  }
};

// Elementwise nonlinearity and its derivative. GeLU uses the exact
// Gaussian-CDF form t * Phi(t).
double activate(Nonlinearity nl, double t);
double activate_grad(Nonlinearity nl, double t);
Eigen::MatrixXd activate(Nonlinearity nl, const Eigen::MatrixXd& t);

// Model outputs for a batch (batch x N). Regression returns batch x 1,
// autoencoder batch x N.
Eigen::MatrixXd forward(const ModelSpec& spec, const Eigen::MatrixXd& w,
                        const Eigen::VectorXd& b, const Eigen::MatrixXd& x);

struct LossGrads {
  double loss = 0.0;
  Eigen::MatrixXd grad_w;
  Eigen::VectorXd grad_b;
};

// Batch MSE (importance-weighted for the autoencoder) and exact gradients.
LossGrads loss_and_grads(const ModelSpec& spec, const Eigen::MatrixXd& w,
                         const Eigen::VectorXd& b, const Eigen::MatrixXd& x);

struct TrainConfig {
  long steps = 50000;
  int batch = 1024;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_init_std = 0.3;
  int restarts = 3;
  std::uint64_t seed = 0;
};

struct TrainResult {
  EmbeddingMatrix final_weights;
  Eigen::VectorXd bias;
  double final_loss = 0.0;        // mean over the last 1% of steps
  CapacityVector capacity;        // measured from final_weights
  long steps_run = 0;
  std::uint64_t seed = 0;         // seed of the winning restart
  std::vector<double> loss_history;
};

// One Adam run with the config's seed (restarts field ignored).
TrainResult train_once(const ModelSpec& spec, const InputDistribution& dist,
                       const TrainConfig& config);

// Best of config.restarts runs seeded seed, seed+1, ... by final loss.
// Rethrows divergence only if every restart diverges.
TrainResult train(const ModelSpec& spec, const InputDistribution& dist,
                  const TrainConfig& config);

}  // namespace caplab
