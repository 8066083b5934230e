#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "diffprior/config.hpp"
#include "diffprior/data.hpp"
#include "diffprior/denoiser.hpp"
#include "diffprior/diffusion.hpp"
#include "diffprior/dsp.hpp"
#include "diffprior/prior.hpp"

namespace diffprior {

/// A clip with its conditioning features and waveform-resolution prior.
struct PreparedClip {
  std::string id;
  Eigen::VectorXd samples;
  MelSpectrogram mel;
  DiagonalGaussian energy;  ///< n_frames·hop entries, covers every sample
};

PreparedClip prepare_clip(const AudioClip& clip, const RunConfig& cfg);
std::vector<PreparedClip> prepare_clips(std::span<const AudioClip> clips, const RunConfig& cfg);

/// Network input for the window starting at frame `first_frame`: the
/// window's log-mel frames, affinely rescaled to roughly unit range and
/// flattened frame-major.
Eigen::VectorXd window_condition(const MelSpectrogram& mel, Eigen::Index first_frame, int window_frames);

/// Every frame-aligned window lying fully inside a clip, as batch columns.
struct WindowSet {
  Eigen::MatrixXd x0;
  Eigen::MatrixXd condition;
  Eigen::MatrixXd prior_std;  ///< adaptive prior std per window
  Eigen::Index size() const { return x0.cols(); }
};

WindowSet collect_windows(std::span<const PreparedClip> clips, const RunConfig& cfg);

MlpShape model_shape(const RunConfig& cfg);

struct TrainResult {
  std::unique_ptr<Denoiser> model;
  AdamState adam;
  std::vector<double> losses;
  std::vector<double> moving_average;
};

/// Trailing mean over the last `window` values (fewer at the start).
std::vector<double> moving_average(std::span<const double> values, int window);

/// First (1-based) step whose value is at or below `threshold`, or 0 if none.
int first_step_at_or_below(std::span<const double> values, double threshold);

/// Minibatch training. Each step draws the batch indices and then, per
/// column, the diffusion step and noise. The model is initialized from the
/// same stream, so both arms start identically for a given seed.
TrainResult train_denoiser(const WindowSet& windows, const RunConfig& cfg, PriorArm arm, std::uint64_t seed,
                           const std::function<void(int, double)>& progress = {});

/// `step,loss,moving_average` rows.
std::string loss_csv(const TrainResult& result);

/// Synthesizes a waveform matching `clip` in length from its mel condition.
Eigen::VectorXd generate_clip(const Denoiser& model, const PreparedClip& clip, const RunConfig& cfg, PriorArm arm,
                              Rng& rng, const SampleOptions& options = {});

/// Mean LS-MAE of generated against reference clips, one rng stream seeded
/// with `seed` shared across the clips in order.
double mean_ls_mae(const Denoiser& model, std::span<const PreparedClip> clips, const RunConfig& cfg, PriorArm arm,
                   std::uint64_t seed, const SampleOptions& options = {});

/// Prior draw x_T for the whole clip (zero-mean, per-sample std).
Eigen::VectorXd prior_draw(const PreparedClip& clip, PriorArm arm, Rng& rng);

/// Grid search over {1..9}·scale per position for the fast sampler,
/// minimizing validation LS-MAE.
std::vector<double> search_fast_schedule(const Denoiser& model, std::span<const PreparedClip> validation,
                                         const RunConfig& cfg, PriorArm arm, std::uint64_t seed);

/// Synthetic corpus split into prepared train/validation/test clips.
struct PreparedCorpus {
  std::vector<SyntheticClip> raw;
  std::vector<PreparedClip> train, validation, test;
};

PreparedCorpus prepare_synthetic_corpus(const RunConfig& cfg);

}  // namespace diffprior
