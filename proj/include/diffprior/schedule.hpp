#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace diffprior {

/// Diffusion noise schedule β_1..β_T and the per-step scalars derived from it.
///
/// Steps are 1-based throughout, matching the usual diffusion notation. The
/// cumulative product is anchored at alpha_bar(0) = 1, so beta_tilde(1) = 0
/// and the terminal posterior is deterministic.
class NoiseSchedule {
 public:
  /// Throws invalid-argument unless every beta lies strictly inside (0, 1).
  explicit NoiseSchedule(Eigen::VectorXd betas);

  int steps() const { return static_cast<int>(betas_.size()); }

  double beta(int t) const { return betas_[index(t)]; }
  double alpha(int t) const { return alphas_[index(t)]; }
  /// Valid for t in [0, T]; alpha_bar(0) is exactly 1.
  double alpha_bar(int t) const;
  double beta_tilde(int t) const { return beta_tildes_[index(t)]; }
  double sigma(int t) const { return sigmas_[index(t)]; }

  const Eigen::VectorXd& betas() const { return betas_; }
  const Eigen::VectorXd& alphas() const { return alphas_; }
  /// ᾱ_1..ᾱ_T (without the ᾱ_0 anchor).
  const Eigen::VectorXd& alpha_bars() const { return alpha_bars_; }
  const Eigen::VectorXd& beta_tildes() const { return beta_tildes_; }
  const Eigen::VectorXd& sigmas() const { return sigmas_; }

 private:
  Eigen::Index index(int t) const;

  Eigen::VectorXd betas_;
  Eigen::VectorXd alphas_;
  Eigen::VectorXd alpha_bars_;
  Eigen::VectorXd beta_tildes_;
  Eigen::VectorXd sigmas_;
};

/// T evenly spaced betas from beta_start to beta_end, both endpoints included.
NoiseSchedule linear_schedule(double beta_start, double beta_end, int steps);

/// ELBO weight of step t: 1/(2α_1) for t = 1, β_t²/(2σ_t²α_t(1−ᾱ_t)) otherwise.
double gamma(const NoiseSchedule& schedule, int t);

/// The same weight written as β_t/(2α_t(1−ᾱ_{t−1})), valid for t ≥ 2.
/// Algebraically equal to gamma() once σ_t² = β̃_t.
double gamma_posterior_form(const NoiseSchedule& schedule, int t);

/// All γ_1..γ_T.
Eigen::VectorXd gammas(const NoiseSchedule& schedule);

using ScheduleObjective = std::function<double(std::span<const double>)>;

/// Exhaustive search over strictly increasing combinations drawn from
/// per-position candidate lists. Candidates must be sorted ascending. Ties are
/// broken by the lexicographically smallest schedule. Throws
/// no-feasible-schedule when no strictly increasing combination exists.
std::vector<double> grid_search_fast_schedule(const std::vector<std::vector<double>>& grid,
                                              const ScheduleObjective& objective);

/// The candidate grid {1..9} × scale for each position, e.g. scales
/// {1e-1, 1e-1} for a two-step schedule.
std::vector<std::vector<double>> decade_grid(std::span<const double> scales);

/// Plain-text schedule file: one decimal beta per line, '#' starts a comment.
std::vector<double> parse_betas(const std::string& text);
std::vector<double> read_betas(const std::filesystem::path& path);
std::string format_betas(std::span<const double> betas, const std::string& header = {});
void write_betas(const std::filesystem::path& path, std::span<const double> betas,
                 const std::string& header = {});

bool strictly_increasing(std::span<const double> values);

}  // namespace diffprior
