#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "diffprior/dsp.hpp"

namespace diffprior {

/// Gaussian with diagonal covariance diag(std²).
struct DiagonalGaussian {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;

  Eigen::Index dimension() const { return mean.size(); }
  /// Throws shape when the two vectors differ in length, invalid-argument
  /// when some std is not strictly positive and finite.
  void validate() const;
};

/// How frame energies are scaled into (0, 1].
enum class EnergyNormalization {
  PerUtterance,  ///< divide by this utterance's maximum
  CorpusGlobal,  ///< divide by a caller-supplied corpus maximum
};

/// Zero-mean waveform prior from the frame-level mel energy.
///
/// Energies are divided by the normalizing maximum, clipped below at
/// `min_std`, and each frame value is repeated `hop` times, so the result has
/// n_frames·hop entries. With CorpusGlobal normalization `corpus_max` must be
/// given; values above it are clipped to 1.
DiagonalGaussian energy_prior(const MelSpectrogram& mel, int hop, double min_std,
                              EnergyNormalization normalization = EnergyNormalization::PerUtterance,
                              std::optional<double> corpus_max = std::nullopt);

/// Zero mean, unit std.
DiagonalGaussian standard_prior(Eigen::Index dimension);

/// Per-label running statistics of feature frames. Accumulators merge
/// associatively, so corpus shards can be collected independently.
class SegmentStats {
 public:
  struct Entry {
    std::int64_t count = 0;
    Eigen::VectorXd mean;
    Eigen::VectorXd m2;  ///< sum of squared deviations from the mean

    /// Population variance m2 / count.
    Eigen::VectorXd variance() const { return m2 / static_cast<double>(count); }
  };

  /// frames: [n_frames × dim], one label per frame.
  void accumulate(const Eigen::Ref<const Eigen::MatrixXd>& frames, std::span<const std::string> labels);
  void merge(const SegmentStats& other);

  bool contains(const std::string& label) const { return table_.count(label) != 0; }
  const Entry& at(const std::string& label) const;
  const std::map<std::string, Entry>& entries() const { return table_; }
  Eigen::Index dimension() const { return dim_; }
  bool empty() const { return table_.empty(); }

  /// Plain-text table: one row per label, `label count mean... variance...`,
  /// tab separated.
  std::string to_text() const;
  static SegmentStats from_text(const std::string& text);

  void add_entry(const std::string& label, Entry entry);

 private:
  std::map<std::string, Entry> table_;
  Eigen::Index dim_ = 0;
};

SegmentStats collect_segment_stats(const Eigen::Ref<const Eigen::MatrixXd>& frames,
                                   std::span<const std::string> labels);

/// Tiles each segment's (mean, sqrt(variance)) over its duration; the result
/// is frame-major with Σdurations × dim entries. std is clipped below at
/// `min_std`. Unknown labels raise missing-label.
DiagonalGaussian upsample_segment_prior(const SegmentStats& stats, std::span<const std::string> label_sequence,
                                        std::span<const int> durations, double min_std);

/// "PGP1" binary encoding of a prior.
std::vector<std::uint8_t> encode_pgp1(const DiagonalGaussian& prior);
DiagonalGaussian decode_pgp1(std::span<const std::uint8_t> bytes);
void write_pgp1(const std::filesystem::path& path, const DiagonalGaussian& prior);
DiagonalGaussian read_pgp1(const std::filesystem::path& path);

}  // namespace diffprior
