#include "diffprior/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "diffprior/errors.hpp"

namespace diffprior {

namespace {

void check_step(const NoiseSchedule& schedule, int t) {
  require(t >= 1 && t <= schedule.steps(), ErrorKind::InvalidArgument,
          "step " + std::to_string(t) + " outside 1.." + std::to_string(schedule.steps()));
}

void check_dimension(Eigen::Index expected, Eigen::Index got, const char* what) {
  require(expected == got, ErrorKind::Shape,
          std::string(what) + ": expected dimension " + std::to_string(expected) + ", got " + std::to_string(got));
}

// Shared by the single and batched paths so both round identically.
template <typename X0, typename Mean, typename Eps>
Eigen::VectorXd corrupt(const X0& x0, const Mean& mean, double alpha_bar, const Eps& eps) {
  return std::sqrt(alpha_bar) * (x0 - mean) + std::sqrt(1.0 - alpha_bar) * eps;
}

// Sequential sum keeps the reduction order independent of vectorization.
template <typename Residual, typename Std>
double weighted_square_sum(const Residual& r, const Std& std) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i) total += r[i] * r[i] / (std[i] * std[i]);
  return total;
}

Eigen::MatrixXd batch_condition(const Denoiser& model, const Eigen::Ref<const Eigen::MatrixXd>& condition,
                                Eigen::Index batch) {
  if (model.condition_dimension() == 0) return Eigen::MatrixXd(0, batch);
  if (condition.cols() == batch) return condition;
  require(condition.cols() == 1, ErrorKind::Shape, "condition must have one column or one per sample");
  return condition.replicate(1, batch);
}

}  // namespace

PriorBatch stack_priors(std::span<const DiagonalGaussian> priors) {
  require(!priors.empty(), ErrorKind::InvalidArgument, "empty prior batch");
  const Eigen::Index d = priors.front().dimension();
  PriorBatch batch{Eigen::MatrixXd(d, static_cast<Eigen::Index>(priors.size())),
                   Eigen::MatrixXd(d, static_cast<Eigen::Index>(priors.size()))};
  for (std::size_t b = 0; b < priors.size(); ++b) {
    priors[b].validate();
    check_dimension(d, priors[b].dimension(), "prior batch");
    batch.mean.col(static_cast<Eigen::Index>(b)) = priors[b].mean;
    batch.std.col(static_cast<Eigen::Index>(b)) = priors[b].std;
  }
  return batch;
}

PriorBatch repeat_prior(const DiagonalGaussian& prior, Eigen::Index batch) {
  prior.validate();
  return {prior.mean.replicate(1, batch), prior.std.replicate(1, batch)};
}

Eigen::VectorXd forward_sample(const Eigen::Ref<const Eigen::VectorXd>& x0, const DiffusionState& state, int t,
                               const Eigen::Ref<const Eigen::VectorXd>& eps) {
  check_step(state.schedule, t);
  check_dimension(state.dimension(), x0.size(), "forward_sample x0");
  check_dimension(state.dimension(), eps.size(), "forward_sample eps");
  return corrupt(x0, state.prior.mean, state.schedule.alpha_bar(t), eps);
}

WeightedLoss weighted_loss(const Eigen::Ref<const Eigen::VectorXd>& eps, const Eigen::Ref<const Eigen::VectorXd>& eps_hat,
                           const DiagonalGaussian& prior) {
  check_dimension(prior.dimension(), eps.size(), "weighted_loss eps");
  check_dimension(prior.dimension(), eps_hat.size(), "weighted_loss eps_hat");
  const Eigen::VectorXd residual = eps - eps_hat;
  return {weighted_square_sum(residual, prior.std),
          (-2.0 * residual.array() / prior.std.array().square()).matrix()};
}

TrainingStep training_step(Denoiser& model, const Eigen::Ref<const Eigen::MatrixXd>& x0,
                           const Eigen::Ref<const Eigen::MatrixXd>& condition, const NoiseSchedule& schedule,
                           const PriorBatch& priors, Rng& rng) {
  const Eigen::Index d = model.dimension();
  const Eigen::Index batch = x0.cols();
  require(batch >= 1, ErrorKind::InvalidArgument, "empty training batch");
  check_dimension(d, x0.rows(), "training_step x0");
  check_dimension(d, priors.dimension(), "training_step prior");
  require(priors.size() == batch, ErrorKind::Shape, "one prior per batch column");

  TrainingStep out;
  out.steps.resize(batch);
  Eigen::MatrixXd eps(d, batch);
  Eigen::MatrixXd x_t(d, batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    const int t = rng.uniform_int(1, schedule.steps());
    out.steps[b] = t;
    eps.col(b) = priors.std.col(b).cwiseProduct(rng.normal_vector(d));
    x_t.col(b) = corrupt(x0.col(b), priors.mean.col(b), schedule.alpha_bar(t), eps.col(b));
  }

  const Eigen::MatrixXd cond = batch_condition(model, condition, batch);
  const Eigen::MatrixXd eps_hat = model.forward(x_t, cond, out.steps.cast<double>());
  const Eigen::MatrixXd residual = eps - eps_hat;

  double total = 0.0;
  for (Eigen::Index b = 0; b < batch; ++b) {
    const double loss = weighted_square_sum(residual.col(b), priors.std.col(b));
    if (!std::isfinite(loss)) {
      throw DivergenceError(out.steps[b], "non-finite training loss at diffusion step " + std::to_string(out.steps[b]));
    }
    total += loss;
  }
  out.loss = total / static_cast<double>(batch);

  const Eigen::MatrixXd upstream =
      (-2.0 / static_cast<double>(batch)) * (residual.array() / priors.std.array().square()).matrix();
  model.backward(upstream);
  return out;
}

double training_step(Denoiser& model, const Eigen::Ref<const Eigen::VectorXd>& x0,
                     const Eigen::Ref<const Eigen::VectorXd>& condition, const DiffusionState& state, Rng& rng) {
  return training_step(model, x0, condition, state.schedule, repeat_prior(state.prior, 1), rng).loss;
}

Eigen::VectorXd conditioning_levels(const NoiseSchedule& training, const NoiseSchedule& sampling,
                                    LevelMapping mapping) {
  const Eigen::VectorXd grid = training.alpha_bars().cwiseSqrt();
  const Eigen::Index T = grid.size();
  Eigen::VectorXd levels(sampling.steps());
  for (int s = 1; s <= sampling.steps(); ++s) {
    const double v = std::sqrt(sampling.alpha_bar(s));
    if (mapping == LevelMapping::Nearest) {
      Eigen::Index best = 0;
      (grid.array() - v).abs().minCoeff(&best);
      levels[s - 1] = static_cast<double>(best + 1);
      continue;
    }
    if (v >= grid[0]) {
      levels[s - 1] = 1.0;
    } else if (v <= grid[T - 1]) {
      levels[s - 1] = static_cast<double>(T);
    } else {
      Eigen::Index t = 0;
      while (grid[t + 1] >= v) ++t;
      // grid[t] >= v > grid[t+1]
      levels[s - 1] = static_cast<double>(t + 1) + (grid[t] - v) / (grid[t] - grid[t + 1]);
    }
  }
  return levels;
}

Eigen::MatrixXd sample(const Denoiser& model, const Eigen::Ref<const Eigen::MatrixXd>& condition,
                       const NoiseSchedule& schedule, const PriorBatch& priors, Rng& rng,
                       const SampleOptions& options) {
  const Eigen::Index d = model.dimension();
  const Eigen::Index batch = priors.size();
  check_dimension(d, priors.dimension(), "sample prior");
  require(batch >= 1, ErrorKind::InvalidArgument, "empty sampling batch");

  const NoiseSchedule& chain = options.fast_schedule ? *options.fast_schedule : schedule;
  Eigen::VectorXd levels;
  if (options.fast_schedule) {
    levels = conditioning_levels(schedule, chain, options.mapping);
  } else {
    levels = Eigen::VectorXd::LinSpaced(chain.steps(), 1.0, static_cast<double>(chain.steps()));
  }
  const Eigen::MatrixXd cond = batch_condition(model, condition, batch);

  Eigen::MatrixXd x = priors.std.cwiseProduct(rng.normal_matrix(d, batch));
  for (int t = chain.steps(); t >= 1; --t) {
    const Eigen::MatrixXd eps_hat = model.predict(x, cond, Eigen::VectorXd::Constant(batch, levels[t - 1]));
    const double coef = chain.beta(t) / std::sqrt(1.0 - chain.alpha_bar(t));
    x = (x - coef * eps_hat) / std::sqrt(chain.alpha(t));
    if (t > 1) x += chain.sigma(t) * priors.std.cwiseProduct(rng.normal_matrix(d, batch));
    if (!x.allFinite()) throw DivergenceError(t, "non-finite sample at diffusion step " + std::to_string(t));
  }
  return x + priors.mean;
}

Eigen::VectorXd sample(const Denoiser& model, const Eigen::Ref<const Eigen::VectorXd>& condition,
                       const DiffusionState& state, Rng& rng, const SampleOptions& options) {
  return sample(model, condition, state.schedule, repeat_prior(state.prior, 1), rng, options).col(0);
}

PosteriorParams posterior_params(const Eigen::Ref<const Eigen::VectorXd>& x_t,
                                 const Eigen::Ref<const Eigen::VectorXd>& x0, const DiffusionState& state, int t) {
  const NoiseSchedule& s = state.schedule;
  check_step(s, t);
  check_dimension(state.dimension(), x_t.size(), "posterior_params x_t");
  check_dimension(state.dimension(), x0.size(), "posterior_params x0");
  PosteriorParams p;
  if (t == 1) {
    p.mean_coef_x0 = 1.0;
    p.mean_coef_xt = 0.0;
  } else {
    const double one_minus_ab = 1.0 - s.alpha_bar(t);
    p.mean_coef_x0 = std::sqrt(s.alpha_bar(t - 1)) * s.beta(t) / one_minus_ab;
    p.mean_coef_xt = std::sqrt(s.alpha(t)) * (1.0 - s.alpha_bar(t - 1)) / one_minus_ab;
  }
  p.mean = p.mean_coef_x0 * (x0 - state.prior.mean) + p.mean_coef_xt * x_t;
  p.variance = s.beta_tilde(t) * state.prior.std.array().square().matrix();
  return p;
}

namespace {

struct MomentEstimate {
  double mean = 0.0;
  double stderr_ = 0.0;
};

// E‖ε − ε̂(x_t, t)‖²_{Σ⁻¹} over ε ~ N(0, Σ).
MomentEstimate expected_weighted_error(const Denoiser& model, const Eigen::VectorXd& x0_shifted,
                                       const Eigen::Ref<const Eigen::MatrixXd>& condition, const DiffusionState& state,
                                       int t, int n_mc, Rng& rng) {
  constexpr Eigen::Index kChunk = 4096;
  const Eigen::Index d = state.dimension();
  const double ab = state.schedule.alpha_bar(t);
  Eigen::VectorXd values(n_mc);
  for (Eigen::Index start = 0; start < n_mc; start += kChunk) {
    const Eigen::Index n = std::min<Eigen::Index>(kChunk, n_mc - start);
    const Eigen::MatrixXd eps = state.prior.std.asDiagonal() * rng.normal_matrix(d, n);
    const Eigen::MatrixXd x_t = (std::sqrt(ab) * x0_shifted).replicate(1, n) + std::sqrt(1.0 - ab) * eps;
    const Eigen::MatrixXd eps_hat =
        model.predict(x_t, batch_condition(model, condition, n), Eigen::VectorXd::Constant(n, t));
    values.segment(start, n) =
        ((eps - eps_hat).array().square().colwise() / state.prior.std.array().square()).colwise().sum().transpose();
  }
  MomentEstimate m;
  m.mean = values.mean();
  if (n_mc > 1) {
    const double var = (values.array() - m.mean).square().sum() / static_cast<double>(n_mc - 1);
    m.stderr_ = std::sqrt(var / static_cast<double>(n_mc));
  }
  return m;
}

}  // namespace

LossBreakdown elbo_breakdown(const Denoiser& model, const Eigen::Ref<const Eigen::VectorXd>& x0,
                             const Eigen::Ref<const Eigen::VectorXd>& condition, const DiffusionState& state, int n_mc,
                             Rng& rng) {
  require(n_mc >= 1, ErrorKind::InvalidArgument, "n_mc must be at least 1");
  const Eigen::Index d = state.dimension();
  check_dimension(d, x0.size(), "elbo_breakdown x0");
  check_dimension(d, model.dimension(), "elbo_breakdown model");
  state.prior.validate();
  const NoiseSchedule& s = state.schedule;
  const int T = s.steps();
  const Eigen::VectorXd x0_shifted = x0 - state.prior.mean;
  const Eigen::Ref<const Eigen::MatrixXd> cond(condition);

  LossBreakdown out;
  const double ab_T = s.alpha_bar(T);
  const double dd = static_cast<double>(d);
  out.prior_term = 0.5 * ab_T * weighted_square_sum(x0_shifted, state.prior.std) -
                   0.5 * dd * (ab_T + std::log(1.0 - ab_T));

  out.step_terms = Eigen::VectorXd::Zero(std::max(T - 1, 0));
  out.step_stderr = Eigen::VectorXd::Zero(std::max(T - 1, 0));
  double variance_sum = 0.0;
  for (int t = 2; t <= T; ++t) {
    const MomentEstimate m = expected_weighted_error(model, x0_shifted, cond, state, t, n_mc, rng);
    const double g = gamma(s, t);
    out.step_terms[t - 2] = g * m.mean;
    out.step_stderr[t - 2] = g * m.stderr_;
    variance_sum += out.step_stderr[t - 2] * out.step_stderr[t - 2];
  }

  const MomentEstimate m1 = expected_weighted_error(model, x0_shifted, cond, state, 1, n_mc, rng);
  const double log_det = 2.0 * state.prior.std.array().log().sum();
  out.reconstruction_term =
      -0.5 * (dd * std::log(2.0 * std::numbers::pi * s.beta(1)) + log_det) - gamma(s, 1) * m1.mean;
  out.reconstruction_stderr = gamma(s, 1) * m1.stderr_;
  variance_sum += out.reconstruction_stderr * out.reconstruction_stderr;

  out.total = out.prior_term + out.step_terms.sum() - out.reconstruction_term;
  out.total_stderr = std::sqrt(variance_sum);
  return out;
}

}  // namespace diffprior
