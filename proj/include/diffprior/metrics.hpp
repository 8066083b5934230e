#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "diffprior/dsp.hpp"

namespace diffprior {

struct LsMae {
  double value = 0.0;
  /// Zeros appended to the shorter waveform before comparison.
  Eigen::Index padded_samples = 0;
};

/// Mean absolute difference between the two log-mel spectrograms.
LsMae ls_mae(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b,
             const DspConfig& cfg);

struct StftResolution {
  int fft_size = 1024;
  int hop = 120;
  int win_length = 600;
};

/// (1024, 120, 600), (2048, 240, 1200), (512, 50, 240).
std::vector<StftResolution> default_stft_resolutions();

/// Mean over resolutions of spectral convergence plus mean |log|A| − log|B||
/// (magnitudes floored at 1e-7). `a` is the reference. Unequal lengths are
/// zero-padded to match.
double mr_stft(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b,
               const std::vector<StftResolution>& resolutions = default_stft_resolutions());

/// Orthonormal DCT-II matrix: row k holds basis function k.
Eigen::MatrixXd dct_ii_matrix(Eigen::Index n);

/// Mel-cepstral distortion over coefficients 1..n_cep (c0 excluded), no time
/// alignment. Needs equal frame counts (alignment error otherwise) and
/// n_cep < n_mels.
double mcd(const MelSpectrogram& a, const MelSpectrogram& b, int n_cep = 13);

struct SinkhornOptions {
  double blur = 0.05;
  double scaling = 0.5;  ///< ε shrink factor per annealing stage
  double tolerance = 1e-6;
  int max_iterations = 500;
};

/// Debiased entropic OT between uniform point clouds (rows are points),
/// squared-Euclidean cost, ε = blur². Throws convergence-failure when the
/// dual potentials have not settled within max_iterations.
double sinkhorn_divergence(const Eigen::Ref<const Eigen::MatrixXd>& a, const Eigen::Ref<const Eigen::MatrixXd>& b,
                           const SinkhornOptions& options = {});

/// `count` windows of `length` samples at evenly spaced offsets, one per row,
/// scaled by 1/√length so the cost is a per-sample mean square.
Eigen::MatrixXd waveform_windows(const Eigen::Ref<const Eigen::VectorXd>& signal, Eigen::Index length,
                                 Eigen::Index count);

struct MetricRow {
  std::string sample_id;
  double ls_mae = 0.0;
  double mr_stft = 0.0;
  double mcd = 0.0;
  double sinkhorn_prior = 0.0;
  double sinkhorn_generated = 0.0;
};

/// CSV with header `sample_id,ls_mae,mr_stft,mcd,sinkhorn_prior,sinkhorn_generated`
/// and six fractional digits.
std::string metrics_csv(const std::vector<MetricRow>& rows);

}  // namespace diffprior
