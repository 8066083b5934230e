#pragma once

#include <complex>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace diffprior {

/// Front-end settings. Defaults are the 22.05 kHz vocoder configuration
/// (1024-point FFT, hop 256, 80 mel bands between 80 Hz and 7.6 kHz).
struct DspConfig {
  double sample_rate = 22050.0;
  int fft_size = 1024;
  int hop = 256;
  int n_mels = 80;
  double f_min = 80.0;
  double f_max = 7600.0;
  double log_floor = 1e-10;

  /// Throws invalid-argument when the invariants do not hold.
  void validate() const;
};

/// Frame-major log-mel matrix: frames(f, m) is band m of frame f.
struct MelSpectrogram {
  Eigen::MatrixXd frames;
  DspConfig config;

  Eigen::Index n_frames() const { return frames.rows(); }
  Eigen::Index n_mels() const { return frames.cols(); }
};

using ComplexMatrix = Eigen::Matrix<std::complex<double>, Eigen::Dynamic, Eigen::Dynamic>;

/// Frames produced for a center-padded signal: 1 + floor(length / hop).
Eigen::Index frame_count(Eigen::Index signal_length, int hop);

/// Periodic Hann window of `length` samples, zero-padded and centred in `fft_size`.
Eigen::VectorXd hann_window(int length, int fft_size);

/// One-sided STFT with reflect center padding and a periodic Hann window.
/// Rows are frames, columns are bins 0..fft_size/2.
ComplexMatrix stft(const Eigen::Ref<const Eigen::VectorXd>& signal, const DspConfig& cfg);

/// General form used by the multi-resolution metric; the window length may be
/// shorter than the FFT.
ComplexMatrix stft(const Eigen::Ref<const Eigen::VectorXd>& signal, int fft_size, int hop, int win_length);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// HTK-scale triangular filterbank, shape [n_mels × (fft_size/2 + 1)].
/// Throws degenerate-filterbank when some band covers no FFT bin.
Eigen::MatrixXd mel_filterbank(const DspConfig& cfg);

/// Centre frequencies (Hz) of the filterbank bands.
Eigen::VectorXd mel_center_frequencies(const DspConfig& cfg);

/// Power spectrum → mel → natural log, floored at log(cfg.log_floor).
MelSpectrogram log_mel_spectrogram(const Eigen::Ref<const Eigen::VectorXd>& signal, const DspConfig& cfg);

/// Per-frame energy sqrt(Σ_m exp(mel(f, m))).
Eigen::VectorXd frame_energy(const MelSpectrogram& mel);

/// "PGS1" binary encoding. Only sample rate, hop and band count survive the
/// trip; other config fields come back at their defaults.
std::vector<std::uint8_t> encode_pgs1(const MelSpectrogram& mel);
MelSpectrogram decode_pgs1(std::span<const std::uint8_t> bytes);
void write_pgs1(const std::filesystem::path& path, const MelSpectrogram& mel);
MelSpectrogram read_pgs1(const std::filesystem::path& path);

}  // namespace diffprior
