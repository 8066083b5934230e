#pragma once

#include <Eigen/Core>

#include "diffprior/denoiser.hpp"
#include "diffprior/random.hpp"
#include "diffprior/schedule.hpp"

/// Plain DDPM with an N(0, I) endpoint, written without any of the
/// diffusion module's helpers. Only used to cross-check that module.
namespace diffprior::reference {

/// √ᾱ_t x0 + √(1−ᾱ_t) ε with ε standard normal.
Eigen::VectorXd ddpm_forward(const Eigen::VectorXd& x0, const NoiseSchedule& schedule, int t, const Eigen::VectorXd& eps);

/// Ancestral sampling from x_T ~ N(0, I); one standard-normal vector is drawn
/// per step, none at t = 1.
Eigen::VectorXd ddpm_sample(const Denoiser& model, const Eigen::VectorXd& condition, const NoiseSchedule& schedule,
                            Rng& rng);

/// ‖ε − ε̂‖².
double ddpm_simple_loss(const Eigen::VectorXd& eps, const Eigen::VectorXd& eps_hat);

}  // namespace diffprior::reference
