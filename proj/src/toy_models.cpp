#include "caplab/toy_models.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>

#include "caplab/errors.hpp"
#include "caplab/rng.hpp"

namespace caplab {

const char* to_string(ModelFamily family) {
  return family == ModelFamily::kRegression ? "regression" : "autoencoder";
}

const char* to_string(Nonlinearity nl) {
  switch (nl) {
    case Nonlinearity::kQuadratic: return "quadratic";
    case Nonlinearity::kRelu: return "relu";
    case Nonlinearity::kGelu: return "gelu";
  }
  return "?";
}

ModelFamily parse_family(const std::string& name) {
  if (name == "regression") return ModelFamily::kRegression;
  if (name == "autoencoder") return ModelFamily::kAutoencoder;
  throw DomainError("unknown model family '" + name + "' (regression|autoencoder)");
}

Nonlinearity parse_nonlinearity(const std::string& name) {
  if (name == "quadratic") return Nonlinearity::kQuadratic;
  if (name == "relu") return Nonlinearity::kRelu;
  if (name == "gelu") return Nonlinearity::kGelu;
  throw DomainError("unknown nonlinearity '" + name + "' (quadratic|relu|gelu)");
}

void ModelSpec::validate() const {
  if (embedding_dim < 1 || n_features < embedding_dim) {
    throw DomainError("model spec: need N >= D >= 1");
  }
  if (importances.size() != n_features) {
    throw DomainError("model spec: importance size must match feature count");
  }
}

double activate(Nonlinearity nl, double t) {
  switch (nl) {
    case Nonlinearity::kQuadratic:
      return t * t;
    case Nonlinearity::kRelu:
      return t > 0.0 ? t : 0.0;
    case Nonlinearity::kGelu: {
      const double phi = 0.5 * std::erfc(-t / std::numbers::sqrt2);
      return t * phi;
    }
  }
  return 0.0;
}

double activate_grad(Nonlinearity nl, double t) {
  switch (nl) {
    case Nonlinearity::kQuadratic:
      return 2.0 * t;
    case Nonlinearity::kRelu:
      return t > 0.0 ? 1.0 : 0.0;
    case Nonlinearity::kGelu: {
      const double phi = 0.5 * std::erfc(-t / std::numbers::sqrt2);
      const double density =
          std::exp(-0.5 * t * t) / std::sqrt(2.0 * std::numbers::pi);
      return phi + t * density;
    }
  }
  return 0.0;
}

Eigen::MatrixXd activate(Nonlinearity nl, const Eigen::MatrixXd& t) {
  return t.unaryExpr([nl](double x) { return activate(nl, x); });
}

namespace {

Eigen::MatrixXd activate_grad_mat(Nonlinearity nl, const Eigen::MatrixXd& t) {
  return t.unaryExpr([nl](double x) { return activate_grad(nl, x); });
}

void check_shapes(const ModelSpec& spec, const Eigen::MatrixXd& w,
                  const Eigen::VectorXd& b, const Eigen::MatrixXd& x) {
  spec.validate();
  if (w.rows() != spec.embedding_dim || w.cols() != spec.n_features) {
    throw DomainError("model: weight matrix must be D x N");
  }
  if (b.size() != spec.bias_size()) {
    throw DomainError("model: bias size must be 1 (regression) or N (autoencoder)");
  }
  if (x.cols() != spec.n_features) {
    throw DomainError("model: input batch must be batch x N");
  }
  if (x.rows() < 1) throw DomainError("model: empty batch");
}

}  // namespace

Eigen::MatrixXd forward(const ModelSpec& spec, const Eigen::MatrixXd& w,
                        const Eigen::VectorXd& b, const Eigen::MatrixXd& x) {
  check_shapes(spec, w, b, x);
  if (spec.family == ModelFamily::kRegression) {
    const Eigen::MatrixXd e = x * w.transpose();  // batch x D preactivations
    Eigen::MatrixXd out = activate(spec.nonlinearity, e).rowwise().sum();
    out.array() += b(0);
    return out;
  }
  const Eigen::MatrixXd z =
      (x * (w.transpose() * w)).rowwise() + b.transpose();
  return activate(spec.nonlinearity, z);
}

LossGrads loss_and_grads(const ModelSpec& spec, const Eigen::MatrixXd& w,
                         const Eigen::VectorXd& b, const Eigen::MatrixXd& x) {
  check_shapes(spec, w, b, x);
  const double batch = static_cast<double>(x.rows());
  const Eigen::Map<const Eigen::VectorXd> v(spec.importances.values().data(),
                                            spec.n_features);
  LossGrads out;

  if (spec.family == ModelFamily::kRegression) {
    const Eigen::MatrixXd e = x * w.transpose();
    const Eigen::VectorXd pred =
        activate(spec.nonlinearity, e).rowwise().sum().array() + b(0);
    const Eigen::VectorXd target = activate(spec.nonlinearity, x) * v;
    const Eigen::VectorXd r = pred - target;
    out.loss = r.squaredNorm() / batch;
    const Eigen::MatrixXd weighted =
        activate_grad_mat(spec.nonlinearity, e).array().colwise() * r.array();
    out.grad_w = (2.0 / batch) * weighted.transpose() * x;
    out.grad_b = Eigen::VectorXd::Constant(1, (2.0 / batch) * r.sum());
    return out;
  }

  const Eigen::MatrixXd z = (x * (w.transpose() * w)).rowwise() + b.transpose();
  const Eigen::MatrixXd recon = activate(spec.nonlinearity, z);
  const Eigen::MatrixXd r = recon - x;
  out.loss = (r.array().square().matrix() * v).sum() / batch;
  // dL/dz, importance-weighted
  const Eigen::MatrixXd gz =
      (2.0 / batch) *
      (r.array() * activate_grad_mat(spec.nonlinearity, z).array()).matrix() *
      v.asDiagonal();
  out.grad_b = gz.colwise().sum().transpose();
  // z = W^T W x: the product rule gives W (x g^T + g x^T) summed over the batch.
  out.grad_w = w * (x.transpose() * gz + gz.transpose() * x);
  return out;
}

namespace {

struct AdamState {
  Eigen::MatrixXd m_w, v_w;
  Eigen::VectorXd m_b, v_b;
  long t = 0;
};

void adam_step(const TrainConfig& cfg, AdamState& st, Eigen::MatrixXd& w,
               Eigen::VectorXd& b, const LossGrads& g) {
  st.t++;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.t));
  st.m_w = cfg.beta1 * st.m_w + (1.0 - cfg.beta1) * g.grad_w;
  st.v_w = cfg.beta2 * st.v_w.array().matrix() +
           (1.0 - cfg.beta2) * g.grad_w.array().square().matrix();
  st.m_b = cfg.beta1 * st.m_b + (1.0 - cfg.beta1) * g.grad_b;
  st.v_b = cfg.beta2 * st.v_b.array().matrix() +
           (1.0 - cfg.beta2) * g.grad_b.array().square().matrix();
  w.array() -= cfg.learning_rate * (st.m_w.array() / bc1) /
               ((st.v_w.array() / bc2).sqrt() + cfg.adam_eps);
  b.array() -= cfg.learning_rate * (st.m_b.array() / bc1) /
               ((st.v_b.array() / bc2).sqrt() + cfg.adam_eps);
}

void check_config(const TrainConfig& cfg) {
  if (cfg.steps < 1) throw DomainError("train: steps must be positive");
  if (cfg.batch < 1) throw DomainError("train: batch must be positive");
  if (!(cfg.learning_rate > 0.0)) throw DomainError("train: learning rate must be positive");
  if (cfg.restarts < 1) throw DomainError("train: restarts must be >= 1");
}

}  // namespace

TrainResult train_once(const ModelSpec& spec, const InputDistribution& dist,
                       const TrainConfig& config) {
  spec.validate();
  check_config(config);
  Rng rng(config.seed);

  Eigen::MatrixXd w(spec.embedding_dim, spec.n_features);
  for (Eigen::Index r = 0; r < w.rows(); r++) {
    for (Eigen::Index c = 0; c < w.cols(); c++) {
      w(r, c) = config.weight_init_std * rng.normal();
    }
  }
  Eigen::VectorXd b = Eigen::VectorXd::Zero(spec.bias_size());

  AdamState adam;
  adam.m_w = Eigen::MatrixXd::Zero(w.rows(), w.cols());
  adam.v_w = adam.m_w;
  adam.m_b = Eigen::VectorXd::Zero(b.size());
  adam.v_b = adam.m_b;

  std::vector<double> history;
  history.reserve(config.steps);
  Eigen::MatrixXd x(config.batch, spec.n_features);
  for (long step = 0; step < config.steps; step++) {
    sample_inputs_into(rng, dist, x);
    const LossGrads g = loss_and_grads(spec, w, b, x);
    if (!std::isfinite(g.loss)) {
      throw DivergenceError("train: loss became non-finite at step " +
                                std::to_string(step),
                            step);
    }
    history.push_back(g.loss);
    adam_step(config, adam, w, b, g);
  }

  const long tail = std::max<long>(1, config.steps / 100);
  double final_loss = 0.0;
  for (long i = config.steps - tail; i < config.steps; i++) final_loss += history[i];
  final_loss /= static_cast<double>(tail);

  EmbeddingMatrix weights(std::move(w));
  CapacityVector cap = capacity_vector(weights);
  return TrainResult{std::move(weights), std::move(b),     final_loss,
                     std::move(cap),     config.steps,     config.seed,
                     std::move(history)};
}

TrainResult train(const ModelSpec& spec, const InputDistribution& dist,
                  const TrainConfig& config) {
  check_config(config);
  std::optional<TrainResult> best;
  std::optional<DivergenceError> first_divergence;
  for (int r = 0; r < config.restarts; r++) {
    TrainConfig run = config;
    run.seed = config.seed + static_cast<std::uint64_t>(r);
    try {
      TrainResult result = train_once(spec, dist, run);
      if (!best || result.final_loss < best->final_loss) best = std::move(result);
    } catch (const DivergenceError& e) {
      if (!first_divergence) first_divergence = e;
    }
  }
  if (!best) throw *first_divergence;
  return std::move(*best);
}

}  // namespace caplab
