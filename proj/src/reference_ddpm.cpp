#include "diffprior/reference_ddpm.hpp"

#include <cmath>
#include <vector>

#include "diffprior/errors.hpp"

namespace diffprior::reference {

namespace {

struct Tables {
  std::vector<double> beta, alpha, alpha_bar, posterior_variance;
};

Tables tables(const NoiseSchedule& schedule) {
  Tables tb;
  double prod = 1.0;
  for (int t = 1; t <= schedule.steps(); ++t) {
    const double b = schedule.betas()[t - 1];
    const double a = 1.0 - b;
    const double prev = prod;
    prod *= a;
    tb.beta.push_back(b);
    tb.alpha.push_back(a);
    tb.alpha_bar.push_back(prod);
    tb.posterior_variance.push_back((1.0 - prev) / (1.0 - prod) * b);
  }
  return tb;
}

}  // namespace

Eigen::VectorXd ddpm_forward(const Eigen::VectorXd& x0, const NoiseSchedule& schedule, int t, const Eigen::VectorXd& eps) {
  require(t >= 1 && t <= schedule.steps(), ErrorKind::InvalidArgument, "step out of range");
  require(x0.size() == eps.size(), ErrorKind::Shape, "x0 and eps differ in length");
  const Tables tb = tables(schedule);
  const double signal = std::sqrt(tb.alpha_bar[t - 1]);
  const double noise = std::sqrt(1.0 - tb.alpha_bar[t - 1]);
  Eigen::VectorXd x(x0.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = signal * x0[i] + noise * eps[i];
  return x;
}

Eigen::VectorXd ddpm_sample(const Denoiser& model, const Eigen::VectorXd& condition, const NoiseSchedule& schedule,
                            Rng& rng) {
  const Tables tb = tables(schedule);
  const Eigen::Index d = model.dimension();
  Eigen::VectorXd x(d);
  for (Eigen::Index i = 0; i < d; ++i) x[i] = rng.normal();
  for (int t = schedule.steps(); t >= 1; --t) {
    const Eigen::VectorXd eps_hat = model.predict(x, condition, static_cast<double>(t));
    const double c = tb.beta[t - 1] / std::sqrt(1.0 - tb.alpha_bar[t - 1]);
    const double root_alpha = std::sqrt(tb.alpha[t - 1]);
    for (Eigen::Index i = 0; i < d; ++i) x[i] = (x[i] - c * eps_hat[i]) / root_alpha;
    if (t > 1) {
      const double sd = std::sqrt(tb.posterior_variance[t - 1]);
      for (Eigen::Index i = 0; i < d; ++i) x[i] += sd * rng.normal();
    }
  }
  return x;
}

double ddpm_simple_loss(const Eigen::VectorXd& eps, const Eigen::VectorXd& eps_hat) {
  require(eps.size() == eps_hat.size(), ErrorKind::Shape, "eps and eps_hat differ in length");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < eps.size(); ++i) {
    const double r = eps[i] - eps_hat[i];
    sum += r * r;
  }
  return sum;
}

}  // namespace diffprior::reference
