#pragma once

#include <optional>
#include <span>

#include <Eigen/Core>

#include "diffprior/denoiser.hpp"
#include "diffprior/prior.hpp"
#include "diffprior/random.hpp"
#include "diffprior/schedule.hpp"

namespace diffprior {

/// A schedule paired with the prior the chain diffuses towards.
struct DiffusionState {
  NoiseSchedule schedule;
  DiagonalGaussian prior;

  Eigen::Index dimension() const { return prior.dimension(); }
};

/// Per-column priors for a batch: column b of `mean`/`std` belongs to sample b.
struct PriorBatch {
  Eigen::MatrixXd mean;
  Eigen::MatrixXd std;

  Eigen::Index dimension() const { return mean.rows(); }
  Eigen::Index size() const { return mean.cols(); }
};

PriorBatch stack_priors(std::span<const DiagonalGaussian> priors);
PriorBatch repeat_prior(const DiagonalGaussian& prior, Eigen::Index batch);

/// x_t = √ᾱ_t (x0 − μ) + √(1 − ᾱ_t) ε, where ε is already a draw from N(0, Σ).
Eigen::VectorXd forward_sample(const Eigen::Ref<const Eigen::VectorXd>& x0, const DiffusionState& state, int t,
                               const Eigen::Ref<const Eigen::VectorXd>& eps);

struct WeightedLoss {
  double value = 0.0;
  Eigen::VectorXd gradient;  ///< d value / d eps_hat
};

/// ‖ε − ε̂‖² weighted by Σ⁻¹, with its gradient with respect to ε̂.
WeightedLoss weighted_loss(const Eigen::Ref<const Eigen::VectorXd>& eps, const Eigen::Ref<const Eigen::VectorXd>& eps_hat,
                           const DiagonalGaussian& prior);

struct TrainingStep {
  double loss = 0.0;  ///< mean of the per-sample weighted losses
  Eigen::VectorXi steps;
};

/// One minibatch of the training objective: per column, draw t uniformly from
/// 1..T and then z ~ N(0, I), set ε = std ⊙ z, corrupt, and regress. Gradients
/// of the batch-mean loss are accumulated into `model` (not applied). Throws
/// numerical-divergence carrying t when some per-sample loss is not finite.
TrainingStep training_step(Denoiser& model, const Eigen::Ref<const Eigen::MatrixXd>& x0,
                           const Eigen::Ref<const Eigen::MatrixXd>& condition, const NoiseSchedule& schedule,
                           const PriorBatch& priors, Rng& rng);

/// Single-sample form.
double training_step(Denoiser& model, const Eigen::Ref<const Eigen::VectorXd>& x0,
                     const Eigen::Ref<const Eigen::VectorXd>& condition, const DiffusionState& state, Rng& rng);

/// How a sampling schedule other than the training one picks the noise level
/// fed to the denoiser.
enum class LevelMapping {
  Nearest,      ///< training step whose √ᾱ is closest
  Interpolate,  ///< fractional step, linear in √ᾱ between neighbours
};

/// Noise-level index for every step of `sampling`, expressed on the grid of
/// training-time √ᾱ values. Identical schedules map to 1..T exactly.
Eigen::VectorXd conditioning_levels(const NoiseSchedule& training, const NoiseSchedule& sampling,
                                    LevelMapping mapping = LevelMapping::Nearest);

struct SampleOptions {
  std::optional<NoiseSchedule> fast_schedule;
  LevelMapping mapping = LevelMapping::Nearest;
};

/// Reverse chain from x_T ~ N(0, Σ) down to x_0, returning x_0 + μ.
/// Noise is drawn column-major per step; t = 1 adds none. Throws
/// numerical-divergence with the step index on a non-finite state.
Eigen::MatrixXd sample(const Denoiser& model, const Eigen::Ref<const Eigen::MatrixXd>& condition,
                       const NoiseSchedule& schedule, const PriorBatch& priors, Rng& rng,
                       const SampleOptions& options = {});

Eigen::VectorXd sample(const Denoiser& model, const Eigen::Ref<const Eigen::VectorXd>& condition,
                       const DiffusionState& state, Rng& rng, const SampleOptions& options = {});

struct PosteriorParams {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
  double mean_coef_x0 = 0.0;
  double mean_coef_xt = 0.0;
};

/// q(x_{t−1} | x_t, x0) in the μ-shifted coordinates: covariance β̃_t Σ.
PosteriorParams posterior_params(const Eigen::Ref<const Eigen::VectorXd>& x_t,
                                 const Eigen::Ref<const Eigen::VectorXd>& x0, const DiffusionState& state, int t);

struct LossBreakdown {
  double prior_term = 0.0;
  /// Entry k holds step t = k + 2; the t = 1 term lives in the reconstruction.
  Eigen::VectorXd step_terms;
  Eigen::VectorXd step_stderr;
  double reconstruction_term = 0.0;
  double reconstruction_stderr = 0.0;
  double total = 0.0;
  double total_stderr = 0.0;
};

/// ELBO loss decomposed into prior KL, γ-weighted per-step KLs and the
/// reconstruction log-likelihood, each expectation estimated from `n_mc`
/// draws. total = prior + Σ steps − reconstruction.
LossBreakdown elbo_breakdown(const Denoiser& model, const Eigen::Ref<const Eigen::VectorXd>& x0,
                             const Eigen::Ref<const Eigen::VectorXd>& condition, const DiffusionState& state, int n_mc,
                             Rng& rng);

}  // namespace diffprior
