#include "diffprior/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "diffprior/binary_io.hpp"
#include "diffprior/errors.hpp"
#include "diffprior/random.hpp"

namespace diffprior {

AudioClip decode_wav(std::span<const std::uint8_t> bytes, const std::string& id, bool normalize) {
  ByteReader r(bytes, "WAV");
  r.expect_magic("RIFF");
  r.u32();
  r.expect_magic("WAVE");

  bool have_fmt = false;
  std::uint32_t sample_rate = 0;
  while (r.remaining() >= 8) {
    const std::string chunk = r.text(4);
    const std::uint32_t size = r.u32();
    if (size > r.remaining()) throw Error(ErrorKind::Format, "WAV: chunk '" + chunk + "' runs past end of file");
    if (chunk == "fmt ") {
      if (size < 16) throw Error(ErrorKind::Format, "WAV: 'fmt ' chunk too short");
      const std::uint16_t format = r.u16();
      const std::uint16_t channels = r.u16();
      sample_rate = r.u32();
      r.u32();  // byte rate
      r.u16();  // block align
      const std::uint16_t bits = r.u16();
      r.skip(size - 16);
      if (format != 1) throw Error(ErrorKind::Format, "WAV: 'fmt ' chunk declares non-PCM encoding " + std::to_string(format));
      if (channels != 1) throw Error(ErrorKind::Format, "WAV: 'fmt ' chunk declares " + std::to_string(channels) + " channels");
      if (bits != 16) throw Error(ErrorKind::Format, "WAV: 'fmt ' chunk declares " + std::to_string(bits) + "-bit samples");
      have_fmt = true;
    } else if (chunk == "data") {
      if (!have_fmt) throw Error(ErrorKind::Format, "WAV: 'data' chunk before 'fmt ' chunk");
      if (size % 2 != 0) throw Error(ErrorKind::Format, "WAV: 'data' chunk has odd byte count");
      AudioClip clip;
      clip.id = id;
      clip.sample_rate = static_cast<int>(sample_rate);
      clip.samples.resize(size / 2);
      for (Eigen::Index i = 0; i < clip.samples.size(); ++i) {
        clip.samples[i] = static_cast<double>(static_cast<std::int16_t>(r.u16())) / 32768.0;
      }
      if (normalize) clip.samples = peak_normalize(clip.samples);
      return clip;
    } else {
      r.skip(size + (size & 1u));
    }
  }
  throw Error(ErrorKind::Format, "WAV: no 'data' chunk");
}

AudioClip read_wav(const std::filesystem::path& path, bool normalize) {
  return decode_wav(read_file_bytes(path), path.stem().string(), normalize);
}

std::vector<std::uint8_t> encode_wav(const AudioClip& clip) {
  require(clip.sample_rate > 0, ErrorKind::InvalidArgument, "sample rate must be positive");
  require(clip.samples.allFinite(), ErrorKind::InvalidArgument, "non-finite samples in clip " + clip.id);
  const auto data_bytes = static_cast<std::uint32_t>(clip.samples.size() * 2);
  ByteWriter w;
  w.magic("RIFF");
  w.u32(36 + data_bytes);
  w.magic("WAVE");
  w.magic("fmt ");
  w.u32(16);
  w.u16(1);
  w.u16(1);
  w.u32(static_cast<std::uint32_t>(clip.sample_rate));
  w.u32(static_cast<std::uint32_t>(clip.sample_rate) * 2);
  w.u16(2);
  w.u16(16);
  w.magic("data");
  w.u32(data_bytes);
  for (double x : clip.samples) {
    const double q = std::clamp(std::round(x * 32768.0), -32768.0, 32767.0);
    w.u16(static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
  return w.buffer();
}

void write_wav(const AudioClip& clip, const std::filesystem::path& path) { write_file_bytes(path, encode_wav(clip)); }

Eigen::VectorXd peak_normalize(const Eigen::Ref<const Eigen::VectorXd>& samples, double peak) {
  const double m = samples.size() > 0 ? samples.cwiseAbs().maxCoeff() : 0.0;
  if (m == 0.0) return samples;
  return samples * (peak / m);
}

void SyntheticSpec::validate() const {
  require(segments >= 1, ErrorKind::InvalidArgument, "need at least one segment per clip");
  require(min_duration >= 1 && min_duration <= max_duration, ErrorKind::InvalidArgument,
          "need 1 <= min_duration <= max_duration");
  require(min_amplitude > 0.0 && min_amplitude <= max_amplitude, ErrorKind::InvalidArgument,
          "need 0 < min_amplitude <= max_amplitude");
  require(noise_pole >= 0.0 && noise_pole < 1.0, ErrorKind::InvalidArgument, "noise pole must lie in [0, 1)");
  require(label_count >= 1, ErrorKind::InvalidArgument, "need at least one label");
  require(sample_rate > 0, ErrorKind::InvalidArgument, "sample rate must be positive");
}

namespace {

std::string amplitude_label(double amplitude, const SyntheticSpec& spec) {
  if (spec.min_amplitude == spec.max_amplitude) return "L0";
  const double u = (std::log(amplitude) - std::log(spec.min_amplitude)) /
                   (std::log(spec.max_amplitude) - std::log(spec.min_amplitude));
  const int bin = std::clamp(static_cast<int>(u * spec.label_count), 0, spec.label_count - 1);
  return "L" + std::to_string(bin);
}

}  // namespace

std::vector<SyntheticClip> generate_synthetic_corpus(const SyntheticSpec& spec, int n_clips) {
  spec.validate();
  require(n_clips >= 0, ErrorKind::InvalidArgument, "clip count must be nonnegative");
  Rng rng(spec.seed);
  const double innovation = std::sqrt(1.0 - spec.noise_pole * spec.noise_pole);
  const double log_lo = std::log(spec.min_amplitude);
  const double log_hi = std::log(spec.max_amplitude);

  std::vector<SyntheticClip> corpus;
  corpus.reserve(static_cast<std::size_t>(n_clips));
  for (int c = 0; c < n_clips; ++c) {
    SyntheticClip out;
    out.clip.id = "clip" + std::to_string(c);
    out.clip.sample_rate = spec.sample_rate;
    std::vector<double> samples;
    double state = rng.normal();
    for (int s = 0; s < spec.segments; ++s) {
      Segment seg;
      const int duration = rng.uniform_int(spec.min_duration, spec.max_duration);
      seg.amplitude = std::exp(rng.uniform(log_lo, log_hi));
      seg.label = amplitude_label(seg.amplitude, spec);
      seg.start = static_cast<Eigen::Index>(samples.size());
      if (spec.carrier == Carrier::Sinusoid) {
        // Unit RMS tone with random frequency and phase.
        const double freq = rng.uniform(0.02, 0.2) * spec.sample_rate;
        const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        for (int n = 0; n < duration; ++n) {
          const double x = std::numbers::sqrt2 * std::sin(2.0 * std::numbers::pi * freq * n / spec.sample_rate + phase);
          samples.push_back(std::clamp(seg.amplitude * x, -1.0, 1.0));
        }
      } else {
        // Rescaled to unit RMS so the drawn amplitude is the segment's actual std.
        std::vector<double> carrier(static_cast<std::size_t>(duration));
        double energy = 0.0;
        for (double& x : carrier) {
          state = spec.noise_pole * state + innovation * rng.normal();
          x = state;
          energy += x * x;
        }
        const double gain = seg.amplitude / std::sqrt(energy / duration);
        for (double x : carrier) samples.push_back(std::clamp(gain * x, -1.0, 1.0));
      }
      seg.end = static_cast<Eigen::Index>(samples.size());
      out.segments.push_back(std::move(seg));
    }
    out.clip.samples = Eigen::Map<const Eigen::VectorXd>(samples.data(), static_cast<Eigen::Index>(samples.size()));
    corpus.push_back(std::move(out));
  }
  return corpus;
}

Split split(std::span<const std::string> ids, double train_fraction, double validation_fraction,
            double test_fraction, std::uint64_t seed) {
  require(!ids.empty(), ErrorKind::InvalidArgument, "cannot split an empty corpus");
  require(train_fraction >= 0.0 && validation_fraction >= 0.0 && test_fraction >= 0.0, ErrorKind::InvalidArgument,
          "split fractions must be nonnegative");
  require(std::abs(train_fraction + validation_fraction + test_fraction - 1.0) < 1e-9, ErrorKind::InvalidArgument,
          "split fractions must sum to 1");
  std::vector<std::string> order(ids.begin(), ids.end());
  Rng rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i - 1)));
    std::swap(order[i - 1], order[j]);
  }
  const auto n = static_cast<double>(order.size());
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * n));
  const auto n_val = std::min(order.size() - n_train, static_cast<std::size_t>(std::llround(validation_fraction * n)));
  Split s;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.validation.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                      order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
  return s;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

namespace {

std::vector<std::vector<std::string>> tab_rows(const std::string& text, std::size_t fields,
                                               const std::filesystem::path& source) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string> cols;
    std::size_t start = 0;
    for (;;) {
      const std::size_t tab = line.find('\t', start);
      cols.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (cols.size() != fields) {
      throw Error(ErrorKind::Format, source.string() + ":" + std::to_string(line_no) + ": expected " +
                                         std::to_string(fields) + " tab-separated fields");
    }
    rows.push_back(std::move(cols));
  }
  return rows;
}

Eigen::Index parse_index(const std::string& s, const std::filesystem::path& source) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used == s.size() && v >= 0) return static_cast<Eigen::Index>(v);
  } catch (const std::exception&) {
  }
  throw Error(ErrorKind::Format, source.string() + ": bad sample index '" + s + "'");
}

}  // namespace

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::vector<ManifestEntry> entries;
  for (auto& row : tab_rows(read_text_file(path), 2, path)) {
    std::filesystem::path p = row[1];
    if (p.is_relative()) p = path.parent_path() / p;
    entries.push_back({row[0], p});
  }
  return entries;
}

void write_manifest(const std::filesystem::path& path, std::span<const ManifestEntry> entries) {
  std::string text;
  for (const ManifestEntry& e : entries) text += e.id + "\t" + e.path.string() + "\n";
  write_text_file(path, text);
}

std::vector<LabelRow> read_labels(const std::filesystem::path& path) {
  std::vector<LabelRow> rows;
  for (auto& row : tab_rows(read_text_file(path), 4, path)) {
    LabelRow r{row[0], parse_index(row[1], path), parse_index(row[2], path), row[3]};
    require(r.end > r.start, ErrorKind::Format, path.string() + ": empty segment for " + r.id);
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_labels(const std::filesystem::path& path, std::span<const LabelRow> rows) {
  std::string text;
  for (const LabelRow& r : rows) {
    text += r.id + "\t" + std::to_string(r.start) + "\t" + std::to_string(r.end) + "\t" + r.label + "\n";
  }
  write_text_file(path, text);
}

}  // namespace diffprior
