#include "diffprior/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <vector>

#include <Eigen/QR>

#include "diffprior/errors.hpp"

namespace diffprior {

namespace {

std::pair<Eigen::VectorXd, Eigen::VectorXd> pad_to_common(const Eigen::Ref<const Eigen::VectorXd>& a,
                                                          const Eigen::Ref<const Eigen::VectorXd>& b) {
  require(a.size() > 0 && b.size() > 0, ErrorKind::InvalidArgument, "metric of an empty waveform");
  const Eigen::Index n = std::max(a.size(), b.size());
  Eigen::VectorXd pa = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd pb = Eigen::VectorXd::Zero(n);
  pa.head(a.size()) = a;
  pb.head(b.size()) = b;
  return {std::move(pa), std::move(pb)};
}

}  // namespace

LsMae ls_mae(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b,
             const DspConfig& cfg) {
  auto [pa, pb] = pad_to_common(a, b);
  const MelSpectrogram ma = log_mel_spectrogram(pa, cfg);
  const MelSpectrogram mb = log_mel_spectrogram(pb, cfg);
  return {(ma.frames - mb.frames).cwiseAbs().mean(), std::abs(a.size() - b.size())};
}

std::vector<StftResolution> default_stft_resolutions() { return {{1024, 120, 600}, {2048, 240, 1200}, {512, 50, 240}}; }

double mr_stft(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b,
               const std::vector<StftResolution>& resolutions) {
  require(!resolutions.empty(), ErrorKind::InvalidArgument, "mr_stft needs at least one resolution");
  auto [pa, pb] = pad_to_common(a, b);
  constexpr double kFloor = 1e-7;
  double total = 0.0;
  for (const StftResolution& r : resolutions) {
    const Eigen::MatrixXd ma = stft(pa, r.fft_size, r.hop, r.win_length).cwiseAbs();
    const Eigen::MatrixXd mb = stft(pb, r.fft_size, r.hop, r.win_length).cwiseAbs();
    const double diff = (ma - mb).norm();
    const double ref = ma.norm();
    double convergence = 0.0;
    if (diff > 0.0) convergence = ref > 0.0 ? diff / ref : std::numeric_limits<double>::infinity();
    const double log_l1 = (ma.array().max(kFloor).log() - mb.array().max(kFloor).log()).abs().mean();
    total += convergence + log_l1;
  }
  return total / static_cast<double>(resolutions.size());
}

Eigen::MatrixXd dct_ii_matrix(Eigen::Index n) {
  require(n >= 1, ErrorKind::InvalidArgument, "DCT size must be positive");
  Eigen::MatrixXd d(n, n);
  const double nn = static_cast<double>(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double scale = k == 0 ? std::sqrt(1.0 / nn) : std::sqrt(2.0 / nn);
    for (Eigen::Index i = 0; i < n; ++i) {
      d(k, i) = scale * std::cos(std::numbers::pi * (static_cast<double>(i) + 0.5) * static_cast<double>(k) / nn);
    }
  }
  return d;
}

double mcd(const MelSpectrogram& a, const MelSpectrogram& b, int n_cep) {
  require(a.n_frames() > 0 && b.n_frames() > 0, ErrorKind::InvalidArgument, "mcd of an empty spectrogram");
  if (a.n_frames() != b.n_frames()) {
    throw Error(ErrorKind::Alignment, "mcd needs equal frame counts (" + std::to_string(a.n_frames()) + " vs " +
                                          std::to_string(b.n_frames()) + ")");
  }
  require(a.n_mels() == b.n_mels(), ErrorKind::Shape, "mcd inputs differ in band count");
  require(n_cep >= 1 && n_cep < a.n_mels(), ErrorKind::InvalidArgument, "mcd needs 1 <= n_cep < n_mels");
  const Eigen::MatrixXd basis = dct_ii_matrix(a.n_mels()).middleRows(1, n_cep);
  const Eigen::MatrixXd delta = (a.frames - b.frames) * basis.transpose();
  const Eigen::VectorXd per_frame = (2.0 * delta.rowwise().squaredNorm()).cwiseSqrt();
  return 10.0 / std::numbers::ln10 * per_frame.mean();
}

namespace {

// Entry (j, i) = ‖x_i − y_j‖²; computed pairwise so that swapping the clouds
// transposes the matrix exactly.
Eigen::MatrixXd cost_matrix(const Eigen::Ref<const Eigen::MatrixXd>& y, const Eigen::Ref<const Eigen::MatrixXd>& x) {
  Eigen::MatrixXd c(y.rows(), x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < y.rows(); ++j) c(j, i) = (x.row(i) - y.row(j)).squaredNorm();
  }
  return c;
}

// out_i = −ε log Σ_j w_j exp((h_j − K(j, i)) / ε); column i of K is output i.
Eigen::VectorXd softmin(double eps, const Eigen::MatrixXd& k, double log_weight, const Eigen::VectorXd& h) {
  Eigen::VectorXd out(k.cols());
  for (Eigen::Index i = 0; i < k.cols(); ++i) {
    const Eigen::ArrayXd v = (h - k.col(i)).array() / eps;
    const double m = v.maxCoeff();
    out[i] = -eps * (log_weight + m + std::log((v - m).exp().sum()));
  }
  return out;
}

struct Potentials {
  Eigen::VectorXd f;  // on x
  Eigen::VectorXd g;  // on y
};

constexpr int kAndersonDepth = 5;

// Alternating log-domain Sinkhorn with ε-annealing. At the final ε the sweep
// g -> T(T(g)) is Anderson-accelerated; the residual is always the change
// produced by one plain sweep.
Potentials solve(const Eigen::Ref<const Eigen::MatrixXd>& x, const Eigen::Ref<const Eigen::MatrixXd>& y,
                 const std::vector<double>& eps_list, const SinkhornOptions& opt) {
  const Eigen::MatrixXd c_yx = cost_matrix(y, x);  // (j, i)
  const Eigen::MatrixXd c_xy = c_yx.transpose();   // (i, j)
  const double log_a = -std::log(static_cast<double>(x.rows()));
  const double log_b = -std::log(static_cast<double>(y.rows()));

  Potentials p;
  p.g = Eigen::VectorXd::Zero(y.rows());
  int iterations = 0;
  for (double eps : eps_list) {
    p.f = softmin(eps, c_yx, log_b, p.g);
    p.g = softmin(eps, c_xy, log_a, p.f);
    ++iterations;
  }
  const double eps = eps_list.back();
  std::vector<Eigen::VectorXd> images, residuals;
  Eigen::VectorXd g = p.g;
  double residual = std::numeric_limits<double>::infinity();
  while (iterations < opt.max_iterations) {
    Potentials next;
    next.f = softmin(eps, c_yx, log_b, g);
    next.g = softmin(eps, c_xy, log_a, next.f);
    ++iterations;
    Eigen::VectorXd r = next.g - g;
    residual = r.cwiseAbs().maxCoeff();
    if (residual < opt.tolerance) return next;

    images.push_back(next.g);
    residuals.push_back(std::move(r));
    if (images.size() > kAndersonDepth + 1) {
      images.erase(images.begin());
      residuals.erase(residuals.begin());
    }
    g = next.g;
    const auto k = static_cast<Eigen::Index>(images.size()) - 1;
    if (k > 0) {
      Eigen::MatrixXd d_res(g.size(), k), d_img(g.size(), k);
      for (Eigen::Index i = 0; i < k; ++i) {
        d_res.col(i) = residuals[i + 1] - residuals[i];
        d_img.col(i) = images[i + 1] - images[i];
      }
      const Eigen::VectorXd coef = d_res.colPivHouseholderQr().solve(residuals.back());
      const Eigen::VectorXd mixed = next.g - d_img * coef;
      if (mixed.allFinite()) g = mixed;
    }
  }
  throw ConvergenceError(residual, iterations);
}

// Symmetric problem OT(x, x): f <- (f + T(f)) / 2, and g = f at convergence.
Potentials solve_symmetric(const Eigen::Ref<const Eigen::MatrixXd>& x, const std::vector<double>& eps_list,
                           const SinkhornOptions& opt) {
  const Eigen::MatrixXd c = cost_matrix(x, x);
  const double log_a = -std::log(static_cast<double>(x.rows()));
  Eigen::VectorXd f = softmin(eps_list.front(), c, log_a, Eigen::VectorXd::Zero(x.rows()));
  int iterations = 0;
  for (double eps : eps_list) {
    f = 0.5 * (f + softmin(eps, c, log_a, f));
    ++iterations;
  }
  const double eps = eps_list.back();
  double residual = std::numeric_limits<double>::infinity();
  while (iterations < opt.max_iterations) {
    Eigen::VectorXd next = 0.5 * (f + softmin(eps, c, log_a, f));
    residual = (next - f).cwiseAbs().maxCoeff();
    f = std::move(next);
    ++iterations;
    if (residual < opt.tolerance) return {f, f};
  }
  throw ConvergenceError(residual, iterations);
}

// Dual value of the converged problem: ⟨a, f⟩ + ⟨b, g⟩.
double dual_value(const Potentials& p) { return p.f.mean() + p.g.mean(); }

bool lexicographically_less(const Eigen::Ref<const Eigen::MatrixXd>& a, const Eigen::Ref<const Eigen::MatrixXd>& b) {
  if (a.rows() != b.rows()) return a.rows() < b.rows();
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index k = 0; k < a.cols(); ++k) {
      if (a(i, k) != b(i, k)) return a(i, k) < b(i, k);
    }
  }
  return false;
}

}  // namespace

double sinkhorn_divergence(const Eigen::Ref<const Eigen::MatrixXd>& a, const Eigen::Ref<const Eigen::MatrixXd>& b,
                           const SinkhornOptions& options) {
  require(a.rows() > 0 && b.rows() > 0, ErrorKind::InvalidArgument, "sinkhorn needs non-empty point sets");
  require(a.cols() == b.cols(), ErrorKind::Shape, "point sets differ in dimension");
  require(options.blur > 0.0, ErrorKind::InvalidArgument, "blur must be positive");
  require(options.scaling > 0.0 && options.scaling < 1.0, ErrorKind::InvalidArgument, "scaling must lie in (0, 1)");
  require(a.allFinite() && b.allFinite(), ErrorKind::InvalidArgument, "non-finite point coordinates");

  const Eigen::RowVectorXd lo = a.colwise().minCoeff().cwiseMin(b.colwise().minCoeff());
  const Eigen::RowVectorXd hi = a.colwise().maxCoeff().cwiseMax(b.colwise().maxCoeff());
  const double diameter = std::max((hi - lo).norm(), options.blur);

  std::vector<double> eps_list{diameter * diameter};
  const double step = 2.0 * std::log(options.scaling);
  for (double e = 2.0 * std::log(diameter); e > 2.0 * std::log(options.blur); e += step) eps_list.push_back(std::exp(e));
  eps_list.push_back(options.blur * options.blur);

  // Solving in a canonical order makes S(A, B) and S(B, A) the same computation.
  const bool swap = lexicographically_less(b, a);
  const Eigen::Ref<const Eigen::MatrixXd> x = swap ? b : a;
  const Eigen::Ref<const Eigen::MatrixXd> y = swap ? a : b;
  const double self_x = dual_value(solve_symmetric(x, eps_list, options));
  const double self_y = dual_value(solve_symmetric(y, eps_list, options));
  const bool same = x.rows() == y.rows() && x == y;
  const double cross = same ? self_x : dual_value(solve(x, y, eps_list, options));
  const double self = self_x + self_y;
  return cross - 0.5 * self;
}

Eigen::MatrixXd waveform_windows(const Eigen::Ref<const Eigen::VectorXd>& signal, Eigen::Index length,
                                 Eigen::Index count) {
  require(length >= 1 && count >= 1, ErrorKind::InvalidArgument, "window length and count must be positive");
  require(signal.size() >= length, ErrorKind::InvalidArgument, "signal shorter than the window length");
  Eigen::MatrixXd points(count, length);
  const Eigen::Index span = signal.size() - length;
  const double scale = 1.0 / std::sqrt(static_cast<double>(length));
  for (Eigen::Index k = 0; k < count; ++k) {
    const Eigen::Index offset = count == 1 ? 0 : (k * span + (count - 1) / 2) / (count - 1);
    points.row(k) = scale * signal.segment(offset, length).transpose();
  }
  return points;
}

std::string metrics_csv(const std::vector<MetricRow>& rows) {
  std::string out = "sample_id,ls_mae,mr_stft,mcd,sinkhorn_prior,sinkhorn_generated\n";
  char buf[256];
  for (const MetricRow& r : rows) {
    std::snprintf(buf, sizeof buf, ",%.6f,%.6f,%.6f,%.6f,%.6f\n", r.ls_mae, r.mr_stft, r.mcd, r.sinkhorn_prior,
                  r.sinkhorn_generated);
    out += r.sample_id;
    out += buf;
  }
  return out;
}

}  // namespace diffprior
