#pragma once

#include <Eigen/Core>

#include "diffprior/random.hpp"
#include "diffprior/schedule.hpp"

namespace diffprior {

/// Which prior the linear denoiser ε_θ(x) = θ ⊙ x is trained against.
/// Data covariance is diag(sigmas); the data prior matches it exactly.
enum class LinearPrior { Data, Identity };

/// Σγ_t√(1−ᾱ_t) / Σγ_t: the minimizing diagonal entry under the data prior.
double optimal_linear_theta(const NoiseSchedule& schedule);

/// d · (Σγ − (Σγ√(1−ᾱ))² / Σγ).
double min_loss_data_prior(const NoiseSchedule& schedule, Eigen::Index dimension);

/// Σ_j (Σγ − (Σγ√(1−ᾱ))² / Σγ(1−ᾱ+ᾱσ_j)). Each σ_j must be positive.
double min_loss_identity_prior(const NoiseSchedule& schedule, const Eigen::Ref<const Eigen::VectorXd>& sigmas);

struct HessianConditioning {
  double cond_data = 1.0;
  double cond_identity = 1.0;
  double c1 = 0.0;  ///< Σγ_t(1−ᾱ_t)
  double c2 = 0.0;  ///< Σγ_tᾱ_t
};

HessianConditioning hessian_condition_numbers(const NoiseSchedule& schedule,
                                              const Eigen::Ref<const Eigen::VectorXd>& sigmas);

struct LinearLossReport {
  double theta_star = 0.0;
  double min_loss_data_prior = 0.0;
  double min_loss_identity_prior = 0.0;
  double cond_data = 1.0;
  double cond_identity = 1.0;
  double c1 = 0.0;
  double c2 = 0.0;
};

LinearLossReport linear_loss_report(const NoiseSchedule& schedule, const Eigen::Ref<const Eigen::VectorXd>& sigmas);

/// Expected γ-weighted training loss of θ ⊙ x under the chosen prior, summed
/// over steps, and its gradient in θ. Both are exact quadratics in θ.
double linear_objective(const NoiseSchedule& schedule, const Eigen::Ref<const Eigen::VectorXd>& theta,
                        const Eigen::Ref<const Eigen::VectorXd>& sigmas, LinearPrior prior);
Eigen::VectorXd linear_objective_gradient(const NoiseSchedule& schedule, const Eigen::Ref<const Eigen::VectorXd>& theta,
                                          const Eigen::Ref<const Eigen::VectorXd>& sigmas, LinearPrior prior);

/// Full-batch gradient descent from θ = 0 with the given step size; returns
/// the iteration count at which the objective first comes within `tolerance`
/// of its closed-form minimum, or -1 if `max_iterations` pass first.
int gradient_descent_iterations(const NoiseSchedule& schedule, const Eigen::Ref<const Eigen::VectorXd>& sigmas,
                                LinearPrior prior, double step_size, double tolerance, int max_iterations);

/// Log-normal variances rescaled to unit geometric mean, so det = 1.
Eigen::VectorXd unit_det_variances(Eigen::Index dimension, double log_spread, Rng& rng);

}  // namespace diffprior
