#include "diffprior/experiment.hpp"

#include <cstdio>
#include <map>

#include "diffprior/errors.hpp"
#include "diffprior/metrics.hpp"

namespace diffprior {

namespace {

// Log-mel values sit roughly in [-20, 0] at desk scale.
constexpr double kConditionOffset = 10.0;
constexpr double kConditionScale = 10.0;

}  // namespace

PreparedClip prepare_clip(const AudioClip& clip, const RunConfig& cfg) {
  PreparedClip p;
  p.id = clip.id;
  p.samples = clip.samples;
  p.mel = log_mel_spectrogram(clip.samples, cfg.dsp);
  std::optional<double> corpus_max;
  if (cfg.normalization == EnergyNormalization::CorpusGlobal) corpus_max = cfg.corpus_max;
  p.energy = energy_prior(p.mel, cfg.dsp.hop, cfg.min_std, cfg.normalization, corpus_max);
  return p;
}

std::vector<PreparedClip> prepare_clips(std::span<const AudioClip> clips, const RunConfig& cfg) {
  std::vector<PreparedClip> out;
  out.reserve(clips.size());
  for (const AudioClip& c : clips) {
    try {
      out.push_back(prepare_clip(c, cfg));
    } catch (const Error& e) {
      throw Error(e.kind(), "clip " + c.id + ": " + e.what());
    }
  }
  return out;
}

Eigen::VectorXd window_condition(const MelSpectrogram& mel, Eigen::Index first_frame, int window_frames) {
  require(first_frame >= 0 && first_frame + window_frames <= mel.n_frames(), ErrorKind::Shape,
          "condition window runs past the spectrogram");
  const Eigen::MatrixXd block = (mel.frames.middleRows(first_frame, window_frames).array() + kConditionOffset) /
                                kConditionScale;
  // Row-major flattening keeps each frame's bands contiguous.
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows = block;
  return Eigen::Map<const Eigen::VectorXd>(rows.data(), rows.size());
}

WindowSet collect_windows(std::span<const PreparedClip> clips, const RunConfig& cfg) {
  const int hop = cfg.dsp.hop;
  const int d = cfg.window_samples();
  std::vector<std::pair<const PreparedClip*, Eigen::Index>> starts;
  for (const PreparedClip& c : clips) {
    for (Eigen::Index s = 0; s + d <= c.samples.size(); s += hop) starts.emplace_back(&c, s);
  }
  require(!starts.empty(), ErrorKind::InvalidArgument, "no clip is long enough for one training window");
  const auto n = static_cast<Eigen::Index>(starts.size());
  WindowSet w{Eigen::MatrixXd(d, n), Eigen::MatrixXd(cfg.window_frames * cfg.dsp.n_mels, n), Eigen::MatrixXd(d, n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& [clip, s] = starts[static_cast<std::size_t>(i)];
    w.x0.col(i) = clip->samples.segment(s, d);
    w.condition.col(i) = window_condition(clip->mel, s / hop, cfg.window_frames);
    w.prior_std.col(i) = clip->energy.std.segment(s, d);
  }
  return w;
}

MlpShape model_shape(const RunConfig& cfg) {
  return MlpShape{cfg.window_samples(), static_cast<Eigen::Index>(cfg.window_frames) * cfg.dsp.n_mels, cfg.embedding,
                  cfg.hidden};
}

std::vector<double> moving_average(std::span<const double> values, int window) {
  require(window >= 1, ErrorKind::InvalidArgument, "moving-average window must be positive");
  std::vector<double> out;
  out.reserve(values.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    sum += values[i];
    if (i >= static_cast<std::size_t>(window)) sum -= values[i - static_cast<std::size_t>(window)];
    out.push_back(sum / static_cast<double>(std::min<std::size_t>(i + 1, static_cast<std::size_t>(window))));
  }
  return out;
}

int first_step_at_or_below(std::span<const double> values, double threshold) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] <= threshold) return static_cast<int>(i + 1);
  }
  return 0;
}

TrainResult train_denoiser(const WindowSet& windows, const RunConfig& cfg, PriorArm arm, std::uint64_t seed,
                           const std::function<void(int, double)>& progress) {
  require(windows.size() >= 1, ErrorKind::InvalidArgument, "empty training set");
  const NoiseSchedule schedule = cfg.schedule();
  Rng rng(seed);
  TrainResult result;
  result.model = std::make_unique<MlpDenoiser>(model_shape(cfg), rng);
  result.adam = AdamState::for_model(*result.model, cfg.learning_rate);
  result.losses.reserve(static_cast<std::size_t>(cfg.train_steps));

  const Eigen::Index d = windows.x0.rows();
  const Eigen::Index b = cfg.batch_size;
  Eigen::MatrixXd x0(d, b);
  Eigen::MatrixXd cond(windows.condition.rows(), b);
  PriorBatch priors{Eigen::MatrixXd::Zero(d, b), Eigen::MatrixXd::Ones(d, b)};
  const int last = static_cast<int>(windows.size()) - 1;

  for (int step = 1; step <= cfg.train_steps; ++step) {
    for (Eigen::Index k = 0; k < b; ++k) {
      const int i = rng.uniform_int(0, last);
      x0.col(k) = windows.x0.col(i);
      cond.col(k) = windows.condition.col(i);
      if (arm == PriorArm::Adaptive) priors.std.col(k) = windows.prior_std.col(i);
    }
    result.model->zero_grad();
    try {
      const TrainingStep ts = training_step(*result.model, x0, cond, schedule, priors, rng);
      adam_step(*result.model, result.adam);
      result.losses.push_back(ts.loss);
    } catch (const DivergenceError& e) {
      throw DivergenceError(step, "training diverged at step " + std::to_string(step) + ": " + e.what());
    }
    if (progress) progress(step, result.losses.back());
  }
  result.moving_average = moving_average(result.losses, cfg.loss_window);
  return result;
}

std::string loss_csv(const TrainResult& result) {
  std::string out = "step,loss,moving_average\n";
  char buf[96];
  for (std::size_t i = 0; i < result.losses.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g\n", i + 1, result.losses[i], result.moving_average[i]);
    out += buf;
  }
  return out;
}

Eigen::VectorXd generate_clip(const Denoiser& model, const PreparedClip& clip, const RunConfig& cfg, PriorArm arm,
                              Rng& rng, const SampleOptions& options) {
  const Eigen::Index hop = cfg.dsp.hop;
  const Eigen::Index d = cfg.window_samples();
  const Eigen::Index length = clip.samples.size();
  require(length >= d, ErrorKind::Shape, "clip " + clip.id + " is shorter than one window");
  require(model.dimension() == d, ErrorKind::Shape, "model window does not match the configuration");
  const Eigen::Index padded = (length + hop - 1) / hop * hop;

  std::vector<Eigen::Index> starts;
  for (Eigen::Index s = 0; s < padded; s += d) starts.push_back(std::min(s, padded - d));
  const auto n = static_cast<Eigen::Index>(starts.size());

  Eigen::MatrixXd cond(model.condition_dimension(), n);
  PriorBatch priors{Eigen::MatrixXd::Zero(d, n), Eigen::MatrixXd::Ones(d, n)};
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Index s = starts[static_cast<std::size_t>(k)];
    cond.col(k) = window_condition(clip.mel, s / hop, cfg.window_frames);
    if (arm == PriorArm::Adaptive) priors.std.col(k) = clip.energy.std.segment(s, d);
  }
  const Eigen::MatrixXd x = sample(model, cond, cfg.schedule(), priors, rng, options);

  Eigen::VectorXd out(padded);
  for (Eigen::Index k = 0; k < n; ++k) out.segment(starts[static_cast<std::size_t>(k)], d) = x.col(k);
  return out.head(length);
}

double mean_ls_mae(const Denoiser& model, std::span<const PreparedClip> clips, const RunConfig& cfg, PriorArm arm,
                   std::uint64_t seed, const SampleOptions& options) {
  require(!clips.empty(), ErrorKind::InvalidArgument, "no clips to evaluate");
  Rng rng(seed);
  double total = 0.0;
  for (const PreparedClip& c : clips) {
    const Eigen::VectorXd generated = generate_clip(model, c, cfg, arm, rng, options);
    total += ls_mae(generated, c.samples, cfg.dsp).value;
  }
  return total / static_cast<double>(clips.size());
}

Eigen::VectorXd prior_draw(const PreparedClip& clip, PriorArm arm, Rng& rng) {
  const Eigen::Index n = clip.samples.size();
  const Eigen::VectorXd z = rng.normal_vector(n);
  if (arm == PriorArm::Standard) return z;
  return clip.energy.std.head(n).cwiseProduct(z);
}

std::vector<double> search_fast_schedule(const Denoiser& model, std::span<const PreparedClip> validation,
                                         const RunConfig& cfg, PriorArm arm, std::uint64_t seed) {
  const std::vector<double> scales(static_cast<std::size_t>(cfg.fast_steps), cfg.fast_grid_scale);
  const auto grid = decade_grid(scales);
  return grid_search_fast_schedule(grid, [&](std::span<const double> betas) {
    SampleOptions options;
    options.fast_schedule = NoiseSchedule(Eigen::Map<const Eigen::VectorXd>(betas.data(), static_cast<Eigen::Index>(betas.size())));
    options.mapping = cfg.level_mapping;
    return mean_ls_mae(model, validation, cfg, arm, seed, options);
  });
}

PreparedCorpus prepare_synthetic_corpus(const RunConfig& cfg) {
  PreparedCorpus corpus;
  corpus.raw = generate_synthetic_corpus(cfg.synthetic_spec(), cfg.clips);
  std::vector<std::string> ids;
  std::map<std::string, const AudioClip*> by_id;
  for (const SyntheticClip& c : corpus.raw) {
    ids.push_back(c.clip.id);
    by_id[c.clip.id] = &c.clip;
  }
  const Split parts = split(ids, cfg.train_fraction, cfg.validation_fraction, cfg.test_fraction, cfg.corpus_seed);
  auto prepare = [&](const std::vector<std::string>& names) {
    std::vector<PreparedClip> out;
    for (const std::string& id : names) out.push_back(prepare_clip(*by_id.at(id), cfg));
    return out;
  };
  corpus.train = prepare(parts.train);
  corpus.validation = prepare(parts.validation);
  corpus.test = prepare(parts.test);
  return corpus;
}

}  // namespace diffprior
