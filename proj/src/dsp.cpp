#include "diffprior/dsp.hpp"

#include <cmath>
#include <numbers>

#include <unsupported/Eigen/FFT>

#include "diffprior/binary_io.hpp"
#include "diffprior/errors.hpp"

namespace diffprior {

namespace {

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

// Reflect index into [0, n) without repeating the edge sample.
Eigen::Index reflect_index(Eigen::Index i, Eigen::Index n) {
  if (n == 1) return 0;
  const Eigen::Index period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

}  // namespace

void DspConfig::validate() const {
  require(sample_rate > 0.0, ErrorKind::InvalidArgument, "sample rate must be positive");
  require(is_power_of_two(fft_size), ErrorKind::InvalidArgument, "fft size must be a power of two");
  require(hop >= 1 && hop <= fft_size, ErrorKind::InvalidArgument, "hop must lie in [1, fft_size]");
  require(n_mels >= 1, ErrorKind::InvalidArgument, "n_mels must be at least 1");
  require(f_min >= 0.0 && f_min < f_max && f_max <= sample_rate / 2.0, ErrorKind::InvalidArgument,
          "need 0 <= f_min < f_max <= sample_rate / 2");
  require(log_floor > 0.0, ErrorKind::InvalidArgument, "log floor must be positive");
}

Eigen::Index frame_count(Eigen::Index signal_length, int hop) { return 1 + signal_length / hop; }

Eigen::VectorXd hann_window(int length, int fft_size) {
  require(length >= 1 && length <= fft_size, ErrorKind::InvalidArgument, "window longer than fft");
  Eigen::VectorXd w = Eigen::VectorXd::Zero(fft_size);
  const int offset = (fft_size - length) / 2;
  for (int n = 0; n < length; ++n) {
    w[offset + n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / length);
  }
  return w;
}

ComplexMatrix stft(const Eigen::Ref<const Eigen::VectorXd>& signal, int fft_size, int hop, int win_length) {
  require(signal.size() > 0, ErrorKind::InvalidArgument, "stft of an empty signal");
  require(is_power_of_two(fft_size), ErrorKind::InvalidArgument, "fft size must be a power of two");
  require(hop >= 1, ErrorKind::InvalidArgument, "hop must be positive");
  const Eigen::VectorXd window = hann_window(win_length, fft_size);
  const Eigen::Index n = signal.size();
  const Eigen::Index pad = fft_size / 2;
  const Eigen::Index frames = frame_count(n, hop);
  const Eigen::Index bins = fft_size / 2 + 1;

  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<double> frame(static_cast<std::size_t>(fft_size));
  std::vector<std::complex<double>> spectrum;
  ComplexMatrix out(frames, bins);
  for (Eigen::Index f = 0; f < frames; ++f) {
    const Eigen::Index start = f * hop - pad;
    for (int k = 0; k < fft_size; ++k) {
      frame[static_cast<std::size_t>(k)] = signal[reflect_index(start + k, n)] * window[k];
    }
    fft.fwd(spectrum, frame);
    for (Eigen::Index b = 0; b < bins; ++b) out(f, b) = spectrum[static_cast<std::size_t>(b)];
  }
  return out;
}

ComplexMatrix stft(const Eigen::Ref<const Eigen::VectorXd>& signal, const DspConfig& cfg) {
  cfg.validate();
  return stft(signal, cfg.fft_size, cfg.hop, cfg.fft_size);
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

namespace {

Eigen::VectorXd band_edges(const DspConfig& cfg) {
  const Eigen::VectorXd mels = Eigen::VectorXd::LinSpaced(cfg.n_mels + 2, hz_to_mel(cfg.f_min), hz_to_mel(cfg.f_max));
  Eigen::VectorXd hz(mels.size());
  for (Eigen::Index i = 0; i < mels.size(); ++i) hz[i] = mel_to_hz(mels[i]);
  return hz;
}

}  // namespace

Eigen::VectorXd mel_center_frequencies(const DspConfig& cfg) {
  cfg.validate();
  return band_edges(cfg).segment(1, cfg.n_mels);
}

Eigen::MatrixXd mel_filterbank(const DspConfig& cfg) {
  cfg.validate();
  const Eigen::VectorXd edges = band_edges(cfg);
  const int bins = cfg.fft_size / 2 + 1;
  Eigen::MatrixXd fb = Eigen::MatrixXd::Zero(cfg.n_mels, bins);
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double lo = edges[m];
    const double centre = edges[m + 1];
    const double hi = edges[m + 2];
    for (int b = 0; b < bins; ++b) {
      const double f = b * cfg.sample_rate / cfg.fft_size;
      if (f <= lo || f >= hi) continue;
      fb(m, b) = f <= centre ? (f - lo) / (centre - lo) : (hi - f) / (hi - centre);
    }
    if (!(fb.row(m).sum() > 0.0)) {
      throw Error(ErrorKind::DegenerateFilterbank,
                  "mel band " + std::to_string(m) + " covers no FFT bin; reduce n_mels or raise fft_size");
    }
  }
  return fb;
}

MelSpectrogram log_mel_spectrogram(const Eigen::Ref<const Eigen::VectorXd>& signal, const DspConfig& cfg) {
  const ComplexMatrix spec = stft(signal, cfg);
  const Eigen::MatrixXd power = spec.cwiseAbs2();
  const Eigen::MatrixXd fb = mel_filterbank(cfg);
  Eigen::MatrixXd mel = power * fb.transpose();
  mel = mel.array().max(cfg.log_floor).log().matrix();
  return MelSpectrogram{std::move(mel), cfg};
}

Eigen::VectorXd frame_energy(const MelSpectrogram& mel) {
  require(mel.n_frames() > 0 && mel.n_mels() > 0, ErrorKind::InvalidArgument, "empty mel spectrogram");
  return mel.frames.array().exp().rowwise().sum().sqrt().matrix();
}

std::vector<std::uint8_t> encode_pgs1(const MelSpectrogram& mel) {
  ByteWriter w;
  w.magic("PGS1");
  w.u32(static_cast<std::uint32_t>(mel.n_frames()));
  w.u32(static_cast<std::uint32_t>(mel.n_mels()));
  w.f32(static_cast<float>(mel.config.sample_rate));
  w.u32(static_cast<std::uint32_t>(mel.config.hop));
  for (Eigen::Index f = 0; f < mel.n_frames(); ++f) {
    for (Eigen::Index m = 0; m < mel.n_mels(); ++m) w.f32(static_cast<float>(mel.frames(f, m)));
  }
  return w.buffer();
}

MelSpectrogram decode_pgs1(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "PGS1");
  r.expect_magic("PGS1");
  const std::uint32_t frames = r.u32();
  const std::uint32_t mels = r.u32();
  MelSpectrogram mel;
  mel.config.sample_rate = r.f32();
  mel.config.hop = static_cast<int>(r.u32());
  mel.config.n_mels = static_cast<int>(mels);
  if (r.remaining() != std::size_t{frames} * mels * 4) {
    throw Error(ErrorKind::Format, "PGS1: payload size does not match header");
  }
  mel.frames.resize(frames, mels);
  for (std::uint32_t f = 0; f < frames; ++f) {
    for (std::uint32_t m = 0; m < mels; ++m) mel.frames(f, m) = r.f32();
  }
  return mel;
}

void write_pgs1(const std::filesystem::path& path, const MelSpectrogram& mel) {
  write_file_bytes(path, encode_pgs1(mel));
}

MelSpectrogram read_pgs1(const std::filesystem::path& path) { return decode_pgs1(read_file_bytes(path)); }

}  // namespace diffprior
