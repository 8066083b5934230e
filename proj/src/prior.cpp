#include "diffprior/prior.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "diffprior/binary_io.hpp"
#include "diffprior/errors.hpp"

namespace diffprior {

void DiagonalGaussian::validate() const {
  require(mean.size() == std.size(), ErrorKind::Shape,
          "prior mean has " + std::to_string(mean.size()) + " entries but std has " + std::to_string(std.size()));
  require(std.allFinite() && (std.array() > 0.0).all(), ErrorKind::InvalidArgument,
          "prior std must be finite and positive");
}

DiagonalGaussian energy_prior(const MelSpectrogram& mel, int hop, double min_std, EnergyNormalization normalization,
                              std::optional<double> corpus_max) {
  require(hop >= 1, ErrorKind::InvalidArgument, "hop must be positive");
  require(min_std > 0.0 && min_std < 1.0, ErrorKind::InvalidArgument, "min_std must lie in (0, 1)");
  const Eigen::VectorXd energy = frame_energy(mel);
  require(energy.allFinite(), ErrorKind::InvalidArgument, "non-finite frame energy");

  double reference = energy.maxCoeff();
  if (normalization == EnergyNormalization::CorpusGlobal) {
    require(corpus_max.has_value() && *corpus_max > 0.0 && std::isfinite(*corpus_max), ErrorKind::InvalidArgument,
            "corpus-global normalization needs a positive corpus maximum");
    reference = *corpus_max;
  }
  require(reference > 0.0, ErrorKind::InvalidArgument, "frame energy maximum is not positive");

  const Eigen::VectorXd level = (energy / reference).array().min(1.0).max(min_std).matrix();
  DiagonalGaussian prior;
  prior.std = level.transpose().replicate(hop, 1).reshaped();
  prior.mean = Eigen::VectorXd::Zero(prior.std.size());
  return prior;
}

DiagonalGaussian standard_prior(Eigen::Index dimension) {
  require(dimension >= 1, ErrorKind::InvalidArgument, "prior dimension must be at least 1");
  return DiagonalGaussian{Eigen::VectorXd::Zero(dimension), Eigen::VectorXd::Ones(dimension)};
}

void SegmentStats::add_entry(const std::string& label, Entry entry) {
  require(entry.count >= 1, ErrorKind::InvalidArgument, "segment entry needs a positive count");
  require(entry.mean.size() == entry.m2.size(), ErrorKind::Shape, "segment entry mean/m2 length mismatch");
  if (table_.empty()) {
    dim_ = entry.mean.size();
  } else {
    require(entry.mean.size() == dim_, ErrorKind::Shape, "segment entry dimension mismatch");
  }
  auto [it, inserted] = table_.try_emplace(label, entry);
  if (inserted) return;
  // Chan et al. pairwise combination of (count, mean, m2).
  Entry& a = it->second;
  const double na = static_cast<double>(a.count);
  const double nb = static_cast<double>(entry.count);
  const double n = na + nb;
  const Eigen::VectorXd delta = entry.mean - a.mean;
  a.mean += delta * (nb / n);
  a.m2 += entry.m2 + delta.cwiseAbs2() * (na * nb / n);
  a.count += entry.count;
}

void SegmentStats::accumulate(const Eigen::Ref<const Eigen::MatrixXd>& frames, std::span<const std::string> labels) {
  require(frames.rows() > 0 && frames.cols() > 0, ErrorKind::InvalidArgument, "no frames to collect");
  require(static_cast<std::size_t>(frames.rows()) == labels.size(), ErrorKind::Shape,
          "need exactly one label per frame");
  // Group rows by label first so each label contributes one exact batch.
  std::map<std::string, std::vector<Eigen::Index>> rows;
  for (std::size_t i = 0; i < labels.size(); ++i) rows[labels[i]].push_back(static_cast<Eigen::Index>(i));
  for (const auto& [label, idx] : rows) {
    Entry e;
    e.count = static_cast<std::int64_t>(idx.size());
    e.mean = Eigen::VectorXd::Zero(frames.cols());
    for (Eigen::Index r : idx) e.mean += frames.row(r).transpose();
    e.mean /= static_cast<double>(e.count);
    e.m2 = Eigen::VectorXd::Zero(frames.cols());
    for (Eigen::Index r : idx) e.m2 += (frames.row(r).transpose() - e.mean).cwiseAbs2();
    add_entry(label, std::move(e));
  }
}

void SegmentStats::merge(const SegmentStats& other) {
  for (const auto& [label, entry] : other.table_) add_entry(label, entry);
}

const SegmentStats::Entry& SegmentStats::at(const std::string& label) const {
  auto it = table_.find(label);
  if (it == table_.end()) throw Error(ErrorKind::MissingLabel, "label \"" + label + "\" not in segment statistics");
  return it->second;
}

namespace {

void append_number(std::string& out, double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, end);
}

}  // namespace

std::string SegmentStats::to_text() const {
  std::string out = "# label\tcount\tmean[0.." + std::to_string(dim_) + ")\tvariance[0.." + std::to_string(dim_) + ")\n";
  for (const auto& [label, e] : table_) {
    out += label;
    out += '\t';
    out += std::to_string(e.count);
    for (Eigen::Index i = 0; i < dim_; ++i) {
      out += '\t';
      append_number(out, e.mean[i]);
    }
    const Eigen::VectorXd var = e.variance();
    for (Eigen::Index i = 0; i < dim_; ++i) {
      out += '\t';
      append_number(out, var[i]);
    }
    out += '\n';
  }
  return out;
}

SegmentStats SegmentStats::from_text(const std::string& text) {
  SegmentStats stats;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    std::string label;
    std::int64_t count = 0;
    if (!(fields >> label >> count) || count < 1) {
      throw Error(ErrorKind::Format, "segment stats line " + std::to_string(line_no) + ": bad label/count");
    }
    std::vector<double> values;
    double v = 0.0;
    while (fields >> v) values.push_back(v);
    if (!fields.eof() || values.empty() || values.size() % 2 != 0) {
      throw Error(ErrorKind::Format, "segment stats line " + std::to_string(line_no) + ": bad value columns");
    }
    const Eigen::Index dim = static_cast<Eigen::Index>(values.size() / 2);
    Entry e;
    e.count = count;
    e.mean = Eigen::Map<const Eigen::VectorXd>(values.data(), dim);
    const Eigen::Map<const Eigen::VectorXd> var(values.data() + dim, dim);
    require((var.array() >= 0.0).all(), ErrorKind::Format, "negative variance in segment stats");
    e.m2 = var * static_cast<double>(count);
    stats.add_entry(label, std::move(e));
  }
  return stats;
}

SegmentStats collect_segment_stats(const Eigen::Ref<const Eigen::MatrixXd>& frames,
                                   std::span<const std::string> labels) {
  SegmentStats stats;
  stats.accumulate(frames, labels);
  return stats;
}

DiagonalGaussian upsample_segment_prior(const SegmentStats& stats, std::span<const std::string> label_sequence,
                                        std::span<const int> durations, double min_std) {
  require(label_sequence.size() == durations.size(), ErrorKind::Shape, "one duration per segment label");
  require(min_std > 0.0, ErrorKind::InvalidArgument, "min_std must be positive");
  const Eigen::Index dim = stats.dimension();
  Eigen::Index frames = 0;
  for (int d : durations) {
    require(d >= 1, ErrorKind::InvalidArgument, "segment durations must be at least 1");
    frames += d;
  }
  DiagonalGaussian prior{Eigen::VectorXd(frames * dim), Eigen::VectorXd(frames * dim)};
  Eigen::Index offset = 0;
  for (std::size_t s = 0; s < label_sequence.size(); ++s) {
    const auto& entry = stats.at(label_sequence[s]);
    const Eigen::VectorXd sd = entry.variance().cwiseSqrt().cwiseMax(min_std);
    for (int k = 0; k < durations[s]; ++k) {
      prior.mean.segment(offset, dim) = entry.mean;
      prior.std.segment(offset, dim) = sd;
      offset += dim;
    }
  }
  return prior;
}

std::vector<std::uint8_t> encode_pgp1(const DiagonalGaussian& prior) {
  prior.validate();
  ByteWriter w;
  w.magic("PGP1");
  w.u32(static_cast<std::uint32_t>(prior.dimension()));
  for (Eigen::Index i = 0; i < prior.dimension(); ++i) w.f32(static_cast<float>(prior.mean[i]));
  for (Eigen::Index i = 0; i < prior.dimension(); ++i) w.f32(static_cast<float>(prior.std[i]));
  return w.buffer();
}

DiagonalGaussian decode_pgp1(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "PGP1");
  r.expect_magic("PGP1");
  const std::uint32_t d = r.u32();
  if (r.remaining() != std::size_t{d} * 8) throw Error(ErrorKind::Format, "PGP1: payload size does not match header");
  DiagonalGaussian prior{Eigen::VectorXd(d), Eigen::VectorXd(d)};
  for (std::uint32_t i = 0; i < d; ++i) prior.mean[i] = r.f32();
  for (std::uint32_t i = 0; i < d; ++i) prior.std[i] = r.f32();
  return prior;
}

void write_pgp1(const std::filesystem::path& path, const DiagonalGaussian& prior) {
  write_file_bytes(path, encode_pgp1(prior));
}

DiagonalGaussian read_pgp1(const std::filesystem::path& path) { return decode_pgp1(read_file_bytes(path)); }

}  // namespace diffprior
