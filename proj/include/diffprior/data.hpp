#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace diffprior {

struct AudioClip {
  std::string id;
  Eigen::VectorXd samples;
  int sample_rate = 22050;
};

/// PCM16 mono RIFF/WAVE. Samples are divided by 32768; with `normalize` the
/// clip is then peak-scaled to 0.95 (silent clips are left alone).
AudioClip decode_wav(std::span<const std::uint8_t> bytes, const std::string& id = {}, bool normalize = false);
AudioClip read_wav(const std::filesystem::path& path, bool normalize = false);

/// Quantizes with round-half-away-from-zero and saturates to [−32768, 32767].
std::vector<std::uint8_t> encode_wav(const AudioClip& clip);
void write_wav(const AudioClip& clip, const std::filesystem::path& path);

/// Scales so that max |sample| equals `peak`.
Eigen::VectorXd peak_normalize(const Eigen::Ref<const Eigen::VectorXd>& samples, double peak = 0.95);

enum class Carrier { Sinusoid, FilteredNoise };

struct SyntheticSpec {
  int segments = 8;
  int min_duration = 256;  ///< samples
  int max_duration = 1024;
  double min_amplitude = 0.02;
  double max_amplitude = 0.25;
  Carrier carrier = Carrier::FilteredNoise;
  double noise_pole = 0.9;  ///< AR(1) coefficient of the filtered-noise carrier
  int label_count = 4;      ///< labels bin the log amplitude range
  int sample_rate = 8000;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Segment {
  Eigen::Index start = 0;  ///< first sample
  Eigen::Index end = 0;    ///< one past the last sample
  std::string label;
  double amplitude = 0.0;  ///< ground-truth std of the segment
};

struct SyntheticClip {
  AudioClip clip;
  std::vector<Segment> segments;
};

/// Each clip concatenates `spec.segments` pieces of a unit-variance carrier,
/// each scaled by a log-uniform amplitude; samples are clamped to [−1, 1].
/// Noise segments are rescaled to unit RMS before scaling.
/// Fully determined by `spec.seed`.
std::vector<SyntheticClip> generate_synthetic_corpus(const SyntheticSpec& spec, int n_clips);

struct Split {
  std::vector<std::string> train, validation, test;
};

/// Deterministic shuffle-and-cut. Fractions must be nonnegative and sum to 1.
Split split(std::span<const std::string> ids, double train_fraction, double validation_fraction,
            double test_fraction, std::uint64_t seed);

struct ManifestEntry {
  std::string id;
  std::filesystem::path path;
};

/// `id<TAB>path` per line. Relative paths are resolved against the manifest's
/// directory on read.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, std::span<const ManifestEntry> entries);

struct LabelRow {
  std::string id;
  Eigen::Index start = 0;
  Eigen::Index end = 0;
  std::string label;
};

/// `id<TAB>start_sample<TAB>end_sample<TAB>label` per line.
std::vector<LabelRow> read_labels(const std::filesystem::path& path);
void write_labels(const std::filesystem::path& path, std::span<const LabelRow> rows);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace diffprior
