#include <doctest.h>

#include "oracles.hpp"
#include "diffprior/dsp.hpp"
#include "diffprior/errors.hpp"
#include "diffprior/random.hpp"

using namespace diffprior;

namespace {

DspConfig small_config() {
  DspConfig c;
  c.sample_rate = 8000;
  c.fft_size = 128;
  c.hop = 32;
  c.n_mels = 16;
  c.f_min = 40;
  c.f_max = 4000;
  return c;
}

}  // namespace

TEST_SUITE("dsp") {
  TEST_CASE("stft matches a direct DFT") {
    Rng rng(3);
    for (int len : {1, 37, 600, 4096}) {
      const Eigen::VectorXd x = rng.normal_vector(len);
      DspConfig c = small_config();
      const ComplexMatrix s = stft(x, c);
      REQUIRE(s.rows() == 1 + len / c.hop);
      REQUIRE(s.cols() == c.fft_size / 2 + 1);
      double worst = 0.0;
      for (Eigen::Index f = 0; f < s.rows(); f += std::max<Eigen::Index>(1, s.rows() / 7)) {
        const auto want = oracle::dft(oracle::padded_frame(x, c.fft_size, c.hop, static_cast<int>(f)));
        for (Eigen::Index k = 0; k < s.cols(); ++k) worst = std::max(worst, std::abs(s(f, k) - want[k]));
      }
      CHECK(worst < 1e-9);
    }
  }

  TEST_CASE("impulse at frame centre gives the window spectrum") {
    DspConfig c = small_config();
    Eigen::VectorXd x = Eigen::VectorXd::Zero(1024);
    const int frame = 10;
    x[frame * c.hop] = 1.0;
    const ComplexMatrix s = stft(x, c);
    std::vector<double> w(c.fft_size);
    for (int k = 0; k < c.fft_size; ++k) w[k] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * k / c.fft_size);
    std::vector<double> shifted(c.fft_size, 0.0);
    shifted[c.fft_size / 2] = w[c.fft_size / 2];
    const auto want = oracle::dft(shifted);
    for (Eigen::Index k = 0; k < s.cols(); ++k) CHECK(std::abs(std::abs(s(frame, k)) - std::abs(want[k])) < 1e-9);
  }

  TEST_CASE("zero signal and bin-centred sinusoid") {
    DspConfig c = small_config();
    const ComplexMatrix z = stft(Eigen::VectorXd::Zero(1024), c);
    CHECK(z.cwiseAbs().maxCoeff() == 0.0);

    const int bin = 9;
    Eigen::VectorXd x(2048);
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = std::sin(2.0 * std::numbers::pi * bin * i / c.fft_size);
    const Eigen::MatrixXd p = stft(x, c).cwiseAbs2();
    const Eigen::Index f = p.rows() / 2;
    const double near = p(f, bin - 1) + p(f, bin) + p(f, bin + 1);
    CHECK(near >= 0.95 * p.row(f).sum());
  }

  TEST_CASE("empty signal and bad configs throw") {
    CHECK_THROWS_AS(stft(Eigen::VectorXd(), small_config()), Error);
    DspConfig c = small_config();
    c.fft_size = 100;
    CHECK_THROWS_AS(c.validate(), Error);
    c = small_config();
    c.hop = 256;
    CHECK_THROWS_AS(c.validate(), Error);
    c = small_config();
    c.f_max = 5000;
    CHECK_THROWS_AS(c.validate(), Error);
  }

  TEST_CASE("frame count arithmetic") {
    CHECK(frame_count(22050, 256) == 87);
    DspConfig c;
    const MelSpectrogram m = log_mel_spectrogram(Eigen::VectorXd::Zero(22050), c);
    CHECK(m.n_frames() == 87);
    CHECK(m.n_mels() == 80);
  }

  TEST_CASE("mel centre frequencies against the HTK formula") {
    DspConfig c;  // 22.05 kHz, 1024, 80 bands, 80-7600 Hz
    const Eigen::VectorXd got = mel_center_frequencies(c);
    const double lo = 2595.0 * std::log10(1.0 + 80.0 / 700.0);
    const double hi = 2595.0 * std::log10(1.0 + 7600.0 / 700.0);
    REQUIRE(got.size() == 80);
    for (int m = 0; m < 80; ++m) {
      const double mel = lo + (hi - lo) * (m + 1) / 81.0;
      const double hz = 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
      CHECK(std::abs(got[m] - hz) < 1e-9);
    }
  }

  TEST_CASE("filterbank shape, support and positivity") {
    for (DspConfig c : {DspConfig{}, small_config()}) {
      const Eigen::MatrixXd fb = mel_filterbank(c);
      CHECK(fb.rows() == c.n_mels);
      CHECK(fb.minCoeff() >= 0.0);
      for (Eigen::Index m = 0; m < fb.rows(); ++m) CHECK(fb.row(m).sum() > 0.0);
      for (Eigen::Index b = 0; b < fb.cols(); ++b) {
        const double f = b * c.sample_rate / c.fft_size;
        if (f <= c.f_min || f >= c.f_max) CHECK(fb.col(b).cwiseAbs().maxCoeff() == 0.0);
      }
    }
  }

  TEST_CASE("single band peaks at the mel midpoint") {
    DspConfig c = small_config();
    c.n_mels = 1;
    const Eigen::MatrixXd fb = mel_filterbank(c);
    const double mid = mel_to_hz(0.5 * (hz_to_mel(c.f_min) + hz_to_mel(c.f_max)));
    Eigen::Index arg;
    fb.row(0).maxCoeff(&arg);
    CHECK(std::abs(arg * c.sample_rate / c.fft_size - mid) <= c.sample_rate / c.fft_size);
  }

  TEST_CASE("too many bands is a degenerate filterbank") {
    DspConfig c = small_config();
    c.n_mels = 60;
    try {
      mel_filterbank(c);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::DegenerateFilterbank);
    }
  }

  TEST_CASE("log-mel floor and energy monotonicity") {
    DspConfig c = small_config();
    const MelSpectrogram z = log_mel_spectrogram(Eigen::VectorXd::Zero(512), c);
    CHECK(z.frames.maxCoeff() == doctest::Approx(std::log(c.log_floor)).epsilon(1e-15));
    CHECK(z.frames.minCoeff() == doctest::Approx(std::log(c.log_floor)).epsilon(1e-15));
    const Eigen::VectorXd e = frame_energy(z);
    for (Eigen::Index f = 0; f < e.size(); ++f) {
      CHECK(e[f] == doctest::Approx(std::sqrt(c.n_mels * c.log_floor)).epsilon(1e-12));
    }

    Rng rng(5);
    int louder = 0;
    for (int k = 0; k < 100; ++k) {
      const Eigen::VectorXd noise = rng.normal_vector(1024);
      const Eigen::VectorXd other = rng.normal_vector(1024);
      const double a = log_mel_spectrogram(noise, c).frames.mean();
      const double b = log_mel_spectrogram(2.0 * other, c).frames.mean();
      louder += b > a;
    }
    CHECK(louder >= 95);

    const Eigen::VectorXd x = rng.normal_vector(1000);
    const Eigen::VectorXd e1 = frame_energy(log_mel_spectrogram(x, c));
    const Eigen::VectorXd e3 = frame_energy(log_mel_spectrogram(3.0 * x, c));
    CHECK((e3.array() >= e1.array()).all());
  }

  TEST_CASE("frame energy arithmetic") {
    MelSpectrogram m;
    m.frames = Eigen::MatrixXd::Constant(2, 80, std::log(1.0 / 80.0));
    const Eigen::VectorXd e = frame_energy(m);
    CHECK(e[0] == doctest::Approx(1.0).epsilon(1e-14));

    Rng rng(8);
    m.frames = rng.normal_matrix(5, 7);
    const Eigen::VectorXd got = frame_energy(m);
    for (int f = 0; f < 5; ++f) {
      double s = 0.0;
      for (int k = 0; k < 7; ++k) s += std::exp(m.frames(f, k));
      CHECK(std::abs(got[f] - std::sqrt(s)) <= 1e-12 * std::sqrt(s));
    }
    CHECK_THROWS_AS(frame_energy(MelSpectrogram{}), Error);
  }

  TEST_CASE("PGS1 layout and rejection") {
    MelSpectrogram m;
    m.frames = Eigen::MatrixXd(2, 3);
    m.frames << 1, 2, 3, 4, 5, 6;
    m.config.hop = 32;
    m.config.sample_rate = 8000;
    const auto bytes = encode_pgs1(m);
    REQUIRE(bytes.size() == 4 + 16 + 6 * 4);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "PGS1");
    CHECK(bytes[4] == 2);
    CHECK(bytes[8] == 3);
    const MelSpectrogram back = decode_pgs1(bytes);
    CHECK(back.frames == m.frames);
    CHECK(back.config.hop == 32);
    CHECK(encode_pgs1(back) == bytes);

    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(decode_pgs1(bad), Error);
    bad = bytes;
    bad.pop_back();
    CHECK_THROWS_AS(decode_pgs1(bad), Error);
  }
}
