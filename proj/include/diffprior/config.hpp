#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "diffprior/data.hpp"
#include "diffprior/diffusion.hpp"
#include "diffprior/dsp.hpp"
#include "diffprior/metrics.hpp"
#include "diffprior/prior.hpp"

namespace diffprior {

enum class PriorArm { Standard, Adaptive };

/// Every experiment hyperparameter. Defaults describe the desk-scale setup:
/// 8 kHz audio, 128-sample windows of 4 frames, T = 50 with linear betas.
struct RunConfig {
  // schedule
  double beta_start = 1e-4;
  double beta_end = 5e-2;
  int diffusion_steps = 50;
  int fast_steps = 2;
  double fast_grid_scale = 0.1;
  LevelMapping level_mapping = LevelMapping::Nearest;

  // prior
  PriorArm prior = PriorArm::Adaptive;
  double min_std = 0.1;
  EnergyNormalization normalization = EnergyNormalization::PerUtterance;
  double corpus_max = 0.0;  ///< only read with corpus-global normalization

  // model and optimizer
  int hidden = 128;
  int embedding = 64;
  double learning_rate = 2e-4;
  int train_steps = 20000;
  int batch_size = 16;
  int loss_window = 200;
  std::uint64_t seed = 0;

  // front end
  DspConfig dsp{8000.0, 128, 32, 16, 40.0, 4000.0, 1e-10};
  int window_frames = 4;

  // corpus
  int clips = 200;
  int segments = 8;
  int min_duration_hops = 8;
  int max_duration_hops = 32;
  double min_amplitude = 0.02;
  double max_amplitude = 0.25;
  Carrier carrier = Carrier::FilteredNoise;
  double noise_pole = 0.9;
  int label_count = 4;
  std::uint64_t corpus_seed = 1234;
  double train_fraction = 0.8;
  double validation_fraction = 0.1;
  double test_fraction = 0.1;

  // metrics
  int n_cep = 13;
  double sinkhorn_blur = 0.05;
  int sinkhorn_windows = 100;

  int window_samples() const { return window_frames * dsp.hop; }
  SyntheticSpec synthetic_spec() const;
  NoiseSchedule schedule() const;

  /// Throws config errors for inconsistent settings.
  void validate() const;
};

/// Names of every accepted key, in documentation order.
const std::vector<std::string>& config_keys();

/// Applies one `key=value` assignment; unknown keys and malformed values are
/// config errors.
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);

/// Parses `key=value` lines; '#' starts a comment, blank lines are skipped.
RunConfig parse_config(const std::string& text, RunConfig base = {});
RunConfig read_config(const std::filesystem::path& path, RunConfig base = {});

/// Serializes every key, so the output parses back to the same config.
std::string format_config(const RunConfig& cfg);

}  // namespace diffprior
