#include "diffprior/analysis.hpp"

#include <cmath>

#include "diffprior/errors.hpp"

namespace diffprior {

namespace {

struct GammaSums {
  double g = 0.0;         // Σγ
  double g_root = 0.0;    // Σγ√(1−ᾱ)
  double g_noise = 0.0;   // Σγ(1−ᾱ)
  double g_signal = 0.0;  // Σγᾱ
};

GammaSums gamma_sums(const NoiseSchedule& s) {
  GammaSums sums;
  for (int t = 1; t <= s.steps(); ++t) {
    const double g = gamma(s, t);
    const double ab = s.alpha_bar(t);
    sums.g += g;
    sums.g_root += g * std::sqrt(1.0 - ab);
    sums.g_noise += g * (1.0 - ab);
    sums.g_signal += g * ab;
  }
  return sums;
}

void check_sigmas(const Eigen::Ref<const Eigen::VectorXd>& sigmas) {
  require(sigmas.size() >= 1, ErrorKind::InvalidArgument, "need at least one data variance");
  require((sigmas.array() > 0.0).all() && sigmas.allFinite(), ErrorKind::InvalidArgument,
          "data variances must be positive and finite");
}

// Curvature of the per-coordinate objective is 2·(this).
Eigen::ArrayXd quadratic_weights(const GammaSums& g, const Eigen::Ref<const Eigen::VectorXd>& sigmas, LinearPrior prior) {
  if (prior == LinearPrior::Data) return Eigen::ArrayXd::Constant(sigmas.size(), g.g);
  return g.g_noise + g.g_signal * sigmas.array();
}

}  // namespace

double optimal_linear_theta(const NoiseSchedule& schedule) {
  const GammaSums g = gamma_sums(schedule);
  return g.g_root / g.g;
}

double min_loss_data_prior(const NoiseSchedule& schedule, Eigen::Index dimension) {
  require(dimension >= 1, ErrorKind::InvalidArgument, "dimension must be positive");
  const GammaSums g = gamma_sums(schedule);
  return static_cast<double>(dimension) * (g.g - g.g_root * g.g_root / g.g);
}

double min_loss_identity_prior(const NoiseSchedule& schedule, const Eigen::Ref<const Eigen::VectorXd>& sigmas) {
  check_sigmas(sigmas);
  const GammaSums g = gamma_sums(schedule);
  double total = 0.0;
  for (Eigen::Index j = 0; j < sigmas.size(); ++j) {
    total += g.g - g.g_root * g.g_root / (g.g_noise + g.g_signal * sigmas[j]);
  }
  return total;
}

HessianConditioning hessian_condition_numbers(const NoiseSchedule& schedule,
                                              const Eigen::Ref<const Eigen::VectorXd>& sigmas) {
  check_sigmas(sigmas);
  const GammaSums g = gamma_sums(schedule);
  HessianConditioning h;
  h.c1 = g.g_noise;
  h.c2 = g.g_signal;
  h.cond_data = 1.0;
  h.cond_identity = (h.c1 + h.c2 * sigmas.maxCoeff()) / (h.c1 + h.c2 * sigmas.minCoeff());
  return h;
}

LinearLossReport linear_loss_report(const NoiseSchedule& schedule, const Eigen::Ref<const Eigen::VectorXd>& sigmas) {
  const HessianConditioning h = hessian_condition_numbers(schedule, sigmas);
  return {optimal_linear_theta(schedule),
          min_loss_data_prior(schedule, sigmas.size()),
          min_loss_identity_prior(schedule, sigmas),
          h.cond_data,
          h.cond_identity,
          h.c1,
          h.c2};
}

double linear_objective(const NoiseSchedule& schedule, const Eigen::Ref<const Eigen::VectorXd>& theta,
                        const Eigen::Ref<const Eigen::VectorXd>& sigmas, LinearPrior prior) {
  check_sigmas(sigmas);
  require(theta.size() == sigmas.size(), ErrorKind::Shape, "theta and sigmas differ in length");
  const GammaSums g = gamma_sums(schedule);
  const Eigen::ArrayXd q = quadratic_weights(g, sigmas, prior);
  return (g.g - 2.0 * g.g_root * theta.array() + q * theta.array().square()).sum();
}

Eigen::VectorXd linear_objective_gradient(const NoiseSchedule& schedule, const Eigen::Ref<const Eigen::VectorXd>& theta,
                                          const Eigen::Ref<const Eigen::VectorXd>& sigmas, LinearPrior prior) {
  check_sigmas(sigmas);
  require(theta.size() == sigmas.size(), ErrorKind::Shape, "theta and sigmas differ in length");
  const GammaSums g = gamma_sums(schedule);
  const Eigen::ArrayXd q = quadratic_weights(g, sigmas, prior);
  return (2.0 * q * theta.array() - 2.0 * g.g_root).matrix();
}

int gradient_descent_iterations(const NoiseSchedule& schedule, const Eigen::Ref<const Eigen::VectorXd>& sigmas,
                                LinearPrior prior, double step_size, double tolerance, int max_iterations) {
  require(step_size > 0.0 && tolerance > 0.0, ErrorKind::InvalidArgument, "step size and tolerance must be positive");
  const double target = prior == LinearPrior::Data ? min_loss_data_prior(schedule, sigmas.size())
                                                   : min_loss_identity_prior(schedule, sigmas);
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(sigmas.size());
  for (int k = 0; k <= max_iterations; ++k) {
    if (linear_objective(schedule, theta, sigmas, prior) - target <= tolerance) return k;
    theta -= step_size * linear_objective_gradient(schedule, theta, sigmas, prior);
  }
  return -1;
}

Eigen::VectorXd unit_det_variances(Eigen::Index dimension, double log_spread, Rng& rng) {
  require(dimension >= 1 && log_spread >= 0.0, ErrorKind::InvalidArgument, "invalid variance draw request");
  Eigen::VectorXd logs(dimension);
  for (Eigen::Index j = 0; j < dimension; ++j) logs[j] = log_spread * rng.normal();
  return (logs.array() - logs.mean()).exp().matrix();
}

}  // namespace diffprior
