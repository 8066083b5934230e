// Command-line harness: synthetic corpus, prior extraction, training,
// sampling, evaluation, linear analysis and fast-schedule search.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "diffprior/analysis.hpp"
#include "diffprior/config.hpp"
#include "diffprior/data.hpp"
#include "diffprior/errors.hpp"
#include "diffprior/experiment.hpp"
#include "diffprior/metrics.hpp"
#include "diffprior/prior.hpp"
#include "diffprior/schedule.hpp"

namespace fs = std::filesystem;
using namespace diffprior;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
};

RunConfig load_config(const Common& common) {
  RunConfig cfg;
  if (!common.config_path.empty()) cfg = read_config(common.config_path);
  for (const std::string& kv : common.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::Config, "--set expects key=value, got '" + kv + "'");
    apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (common.seed) cfg.seed = *common.seed;
  cfg.validate();
  return cfg;
}

fs::path out_path(const Common& common, const std::string& name) {
  fs::create_directories(common.out_dir);
  return fs::path(common.out_dir) / name;
}

std::vector<AudioClip> load_manifest_clips(const fs::path& manifest) {
  std::vector<AudioClip> clips;
  for (const ManifestEntry& e : read_manifest(manifest)) {
    AudioClip c = read_wav(e.path);
    c.id = e.id;
    clips.push_back(std::move(c));
  }
  require(!clips.empty(), ErrorKind::InvalidArgument, "manifest " + manifest.string() + " lists no clips");
  return clips;
}

void check_sample_rate(const std::vector<AudioClip>& clips, const RunConfig& cfg) {
  for (const AudioClip& c : clips) {
    require(c.sample_rate == static_cast<int>(cfg.dsp.sample_rate), ErrorKind::InvalidArgument,
            "clip " + c.id + " has sample rate " + std::to_string(c.sample_rate) + ", config expects " +
                std::to_string(static_cast<int>(cfg.dsp.sample_rate)));
  }
}

std::vector<PreparedClip> clips_or_split(const std::string& manifest, const RunConfig& cfg,
                                         std::vector<PreparedClip> PreparedCorpus::*part) {
  if (!manifest.empty()) {
    const auto clips = load_manifest_clips(manifest);
    check_sample_rate(clips, cfg);
    return prepare_clips(clips, cfg);
  }
  PreparedCorpus corpus = prepare_synthetic_corpus(cfg);
  return std::move(corpus.*part);
}

std::unique_ptr<Denoiser> load_model(const std::string& checkpoint, const RunConfig& cfg) {
  auto model = load_denoiser(read_checkpoint(checkpoint));
  require(model->dimension() == cfg.window_samples(), ErrorKind::Shape,
          "checkpoint window size " + std::to_string(model->dimension()) + " does not match config (" +
              std::to_string(cfg.window_samples()) + ")");
  return model;
}

// ---------------------------------------------------------------------------

void cmd_synth(const Common& common) {
  const RunConfig cfg = load_config(common);
  const auto corpus = generate_synthetic_corpus(cfg.synthetic_spec(), cfg.clips);
  std::vector<ManifestEntry> manifest;
  std::vector<LabelRow> labels;
  for (const SyntheticClip& c : corpus) {
    const fs::path wav = out_path(common, c.clip.id + ".wav");
    write_wav(c.clip, wav);
    manifest.push_back({c.clip.id, wav.filename()});
    for (const Segment& s : c.segments) labels.push_back({c.clip.id, s.start, s.end, s.label});
  }
  write_manifest(out_path(common, "manifest.tsv"), manifest);
  write_labels(out_path(common, "labels.tsv"), labels);

  std::vector<std::string> ids;
  for (const auto& m : manifest) ids.push_back(m.id);
  const Split parts = split(ids, cfg.train_fraction, cfg.validation_fraction, cfg.test_fraction, cfg.corpus_seed);
  auto write_part = [&](const std::vector<std::string>& names, const std::string& file) {
    std::vector<ManifestEntry> rows;
    for (const auto& id : names) rows.push_back({id, id + ".wav"});
    write_manifest(out_path(common, file), rows);
  };
  write_part(parts.train, "train.tsv");
  write_part(parts.validation, "validation.tsv");
  write_part(parts.test, "test.tsv");
  std::cout << "wrote " << corpus.size() << " clips to " << common.out_dir << "\n";
}

void cmd_extract_prior(const Common& common, const std::string& manifest, const std::string& mode,
                       const std::string& labels_path) {
  const RunConfig cfg = load_config(common);
  const auto clips = load_manifest_clips(manifest);
  check_sample_rate(clips, cfg);
  if (mode == "energy") {
    for (const AudioClip& c : clips) {
      try {
        const PreparedClip p = prepare_clip(c, cfg);
        write_pgp1(out_path(common, c.id + ".pgp1"), p.energy);
        write_pgs1(out_path(common, c.id + ".pgs1"), p.mel);
      } catch (const Error& e) {
        throw Error(e.kind(), "clip " + c.id + ": " + e.what());
      }
    }
    std::cout << "wrote " << clips.size() << " energy priors\n";
    return;
  }
  require(!labels_path.empty(), ErrorKind::InvalidArgument, "segment mode needs --labels");
  std::map<std::string, std::vector<LabelRow>> by_clip;
  for (LabelRow& r : read_labels(labels_path)) by_clip[r.id].push_back(std::move(r));
  SegmentStats stats;
  for (const AudioClip& c : clips) {
    const MelSpectrogram mel = log_mel_spectrogram(c.samples, cfg.dsp);
    const auto it = by_clip.find(c.id);
    if (it == by_clip.end()) throw Error(ErrorKind::MissingLabel, "clip " + c.id + " has no label rows");
    // Frame f is labelled by the segment containing its centre sample f·hop.
    std::vector<std::string> frame_labels;
    std::vector<Eigen::Index> rows;
    for (Eigen::Index f = 0; f < mel.n_frames(); ++f) {
      const Eigen::Index centre = f * cfg.dsp.hop;
      for (const LabelRow& r : it->second) {
        if (centre >= r.start && centre < r.end) {
          frame_labels.push_back(r.label);
          rows.push_back(f);
          break;
        }
      }
    }
    if (rows.empty()) continue;
    Eigen::MatrixXd frames(static_cast<Eigen::Index>(rows.size()), mel.n_mels());
    for (std::size_t i = 0; i < rows.size(); ++i) frames.row(static_cast<Eigen::Index>(i)) = mel.frames.row(rows[i]);
    stats.accumulate(frames, frame_labels);
  }
  write_text_file(out_path(common, "segment_stats.tsv"), stats.to_text());
  std::cout << "wrote statistics for " << stats.entries().size() << " labels\n";
}

void cmd_train(const Common& common, const std::string& manifest, const std::string& prior) {
  RunConfig cfg = load_config(common);
  if (!prior.empty()) apply_setting(cfg, "prior", prior);
  const auto train = clips_or_split(manifest, cfg, &PreparedCorpus::train);
  const WindowSet windows = collect_windows(train, cfg);
  const int report_every = std::max(1, cfg.train_steps / 10);
  const TrainResult result = train_denoiser(windows, cfg, cfg.prior, cfg.seed, [&](int step, double loss) {
    if (step % report_every == 0) std::cerr << "step " << step << " loss " << loss << "\n";
  });
  const auto tensors = checkpoint_tensors(*result.model, &result.adam);
  write_checkpoint(out_path(common, "checkpoint.pgc1"), tensors);
  write_text_file(out_path(common, "loss.csv"), loss_csv(result));
  write_text_file(out_path(common, "config.txt"), format_config(cfg));
  std::cout << "final moving-average loss " << result.moving_average.back() << "\n";
}

void cmd_sample(const Common& common, const std::string& checkpoint, const std::string& manifest,
                const std::string& fast_schedule, const std::string& prior) {
  RunConfig cfg = load_config(common);
  if (!prior.empty()) apply_setting(cfg, "prior", prior);
  const auto model = load_model(checkpoint, cfg);
  const auto clips = clips_or_split(manifest, cfg, &PreparedCorpus::test);
  SampleOptions options;
  options.mapping = cfg.level_mapping;
  if (!fast_schedule.empty()) {
    const std::vector<double> betas = read_betas(fast_schedule);
    require(strictly_increasing(betas), ErrorKind::InvalidArgument, "fast schedule must be strictly increasing");
    options.fast_schedule = NoiseSchedule(Eigen::Map<const Eigen::VectorXd>(betas.data(), static_cast<Eigen::Index>(betas.size())));
  }
  Rng rng(cfg.seed);
  for (const PreparedClip& c : clips) {
    AudioClip out{c.id, generate_clip(*model, c, cfg, cfg.prior, rng, options), static_cast<int>(cfg.dsp.sample_rate)};
    write_wav(out, out_path(common, c.id + ".wav"));
  }
  std::cout << "wrote " << clips.size() << " samples\n";
}

void cmd_evaluate(const Common& common, const std::string& generated_dir, const std::string& manifest,
                  const std::string& prior) {
  RunConfig cfg = load_config(common);
  if (!prior.empty()) apply_setting(cfg, "prior", prior);
  const auto references = clips_or_split(manifest, cfg, &PreparedCorpus::test);
  Rng rng(cfg.seed);
  SinkhornOptions sinkhorn;
  sinkhorn.blur = cfg.sinkhorn_blur;
  const Eigen::Index w = cfg.window_samples();
  std::vector<MetricRow> rows;
  for (const PreparedClip& ref : references) {
    const AudioClip gen = read_wav(fs::path(generated_dir) / (ref.id + ".wav"));
    Eigen::VectorXd g = Eigen::VectorXd::Zero(ref.samples.size());
    const Eigen::Index n = std::min(g.size(), gen.samples.size());
    g.head(n) = gen.samples.head(n);

    MetricRow row;
    row.sample_id = ref.id;
    row.ls_mae = ls_mae(g, ref.samples, cfg.dsp).value;
    row.mr_stft = mr_stft(ref.samples, g);
    row.mcd = mcd(ref.mel, log_mel_spectrogram(g, cfg.dsp), cfg.n_cep);
    const Eigen::MatrixXd data = waveform_windows(ref.samples, w, cfg.sinkhorn_windows);
    row.sinkhorn_prior =
        sinkhorn_divergence(waveform_windows(prior_draw(ref, cfg.prior, rng), w, cfg.sinkhorn_windows), data, sinkhorn);
    row.sinkhorn_generated = sinkhorn_divergence(waveform_windows(g, w, cfg.sinkhorn_windows), data, sinkhorn);
    rows.push_back(row);
  }
  write_text_file(out_path(common, "metrics.csv"), metrics_csv(rows));
  std::cout << "evaluated " << rows.size() << " clips\n";
}

void cmd_analyze(const Common& common, int draws, std::vector<int> dims, double spread) {
  const RunConfig cfg = load_config(common);
  const NoiseSchedule schedule = cfg.schedule();
  Rng rng(cfg.seed);
  std::string csv = "schedule,dimension,draw,theta_star,min_loss_data_prior,min_loss_identity_prior,cond_data,"
                    "cond_identity,c1,c2\n";
  char label[96];
  std::snprintf(label, sizeof label, "linear(%g;%g;%d)", cfg.beta_start, cfg.beta_end, cfg.diffusion_steps);
  char buf[512];
  for (int d : dims) {
    require(d >= 1, ErrorKind::InvalidArgument, "dimensions must be positive");
    for (int k = 0; k <= draws; ++k) {
      // Draw 0 is the isotropic reference row.
      const Eigen::VectorXd sigmas = k == 0 ? Eigen::VectorXd::Ones(d) : unit_det_variances(d, spread, rng);
      const LinearLossReport r = linear_loss_report(schedule, sigmas);
      std::snprintf(buf, sizeof buf, "%s,%d,%d,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g\n", label, d, k, r.theta_star,
                    r.min_loss_data_prior, r.min_loss_identity_prior, r.cond_data, r.cond_identity, r.c1, r.c2);
      csv += buf;
    }
  }
  write_text_file(out_path(common, "analysis.csv"), csv);
  std::cout << "wrote " << dims.size() * static_cast<std::size_t>(draws + 1) << " rows\n";
}

void cmd_schedule_search(const Common& common, const std::string& checkpoint, const std::string& manifest,
                         const std::string& prior) {
  RunConfig cfg = load_config(common);
  if (!prior.empty()) apply_setting(cfg, "prior", prior);
  const auto model = load_model(checkpoint, cfg);
  const auto validation = clips_or_split(manifest, cfg, &PreparedCorpus::validation);
  const std::vector<double> best = search_fast_schedule(*model, validation, cfg, cfg.prior, cfg.seed);
  write_betas(out_path(common, "fast_schedule.txt"), best,
              "objective: mean LS-MAE of fully sampled validation clips against ground truth");
  std::cout << "best schedule:";
  for (double b : best) std::cout << " " << b;
  std::cout << "\n";
}

std::string exit_code_table() {
  std::string s = "Exit codes:\n  0  success\n  1  usage error\n";
  for (ErrorKind k : {ErrorKind::Config, ErrorKind::InvalidArgument, ErrorKind::Shape, ErrorKind::Format, ErrorKind::Io,
                      ErrorKind::Divergence, ErrorKind::Convergence, ErrorKind::MissingLabel,
                      ErrorKind::NoFeasibleSchedule, ErrorKind::DegenerateFilterbank, ErrorKind::ContractViolation,
                      ErrorKind::Alignment}) {
    char line[96];
    std::snprintf(line, sizeof line, "  %-2d %s\n", exit_code(k), to_string(k));
    s += line;
  }
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Diffusion models with data-dependent Gaussian priors: desk-scale experiments"};
  app.footer(exit_code_table());
  app.require_subcommand(1);

  Common common;
  std::uint64_t seed_value = 0;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "key=value configuration file")->check(CLI::ExistingFile);
    sub->add_option("--set", common.overrides, "override one config key (key=value); repeatable");
    sub->add_option("--seed", seed_value, "random seed (overrides the config)");
    sub->add_option("--out", common.out_dir, "output directory");
  };

  auto* synth = app.add_subcommand("synth", "write the synthetic corpus, labels and splits as WAV + manifests");
  add_common(synth);

  std::string manifest, mode = "energy", labels, prior, checkpoint, fast_schedule, generated;
  auto* extract = app.add_subcommand("extract-prior", "energy priors (PGP1 + PGS1 per clip) or segment statistics");
  add_common(extract);
  extract->add_option("--manifest", manifest, "id<TAB>path manifest of WAV clips")->required();
  extract->add_option("--mode", mode, "energy | segment")->check(CLI::IsMember({"energy", "segment"}));
  extract->add_option("--labels", labels, "segment label file (segment mode)");

  auto* train = app.add_subcommand("train", "train a denoiser; writes checkpoint.pgc1 and loss.csv");
  add_common(train);
  train->add_option("--manifest", manifest, "training clips (default: synthetic train split)");
  train->add_option("--prior", prior, "standard | adaptive")->check(CLI::IsMember({"standard", "adaptive"}));

  auto* samp = app.add_subcommand("sample", "generate WAVs conditioned on reference clips");
  add_common(samp);
  samp->add_option("--checkpoint", checkpoint, "PGC1 checkpoint")->required();
  samp->add_option("--manifest", manifest, "conditioning clips (default: synthetic test split)");
  samp->add_option("--fast-schedule", fast_schedule, "beta file for fast sampling");
  samp->add_option("--prior", prior, "standard | adaptive")->check(CLI::IsMember({"standard", "adaptive"}));

  auto* eval = app.add_subcommand("evaluate", "metric CSV of generated clips against references");
  add_common(eval);
  eval->add_option("--generated", generated, "directory of <id>.wav outputs")->required();
  eval->add_option("--manifest", manifest, "reference clips (default: synthetic test split)");
  eval->add_option("--prior", prior, "prior used for the S(x_T, x_0) column")
      ->check(CLI::IsMember({"standard", "adaptive"}));

  int draws = 100;
  std::vector<int> dims{2, 4, 8};
  double spread = 0.5;
  auto* analyze = app.add_subcommand("analyze", "linear-denoiser loss minima and Hessian conditioning");
  add_common(analyze);
  analyze->add_option("--draws", draws, "random covariances per dimension");
  analyze->add_option("--dims", dims, "dimensions")->delimiter(',');
  analyze->add_option("--log-spread", spread, "std of log-variances before det normalization");

  auto* search = app.add_subcommand("schedule-search",
                                    "grid search of a fast schedule; objective is validation LS-MAE after full sampling");
  add_common(search);
  search->add_option("--checkpoint", checkpoint, "PGC1 checkpoint")->required();
  search->add_option("--manifest", manifest, "validation clips (default: synthetic validation split)");
  search->add_option("--prior", prior, "standard | adaptive")->check(CLI::IsMember({"standard", "adaptive"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    for (CLI::App* sub : app.get_subcommands()) {
      if (sub->count("--seed") > 0) common.seed = seed_value;
    }
    if (synth->parsed()) cmd_synth(common);
    if (extract->parsed()) cmd_extract_prior(common, manifest, mode, labels);
    if (train->parsed()) cmd_train(common, manifest, prior);
    if (samp->parsed()) cmd_sample(common, checkpoint, manifest, fast_schedule, prior);
    if (eval->parsed()) cmd_evaluate(common, generated, manifest, prior);
    if (analyze->parsed()) cmd_analyze(common, draws, dims, spread);
    if (search->parsed()) cmd_schedule_search(common, checkpoint, manifest, prior);
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error (io): " << e.what() << "\n";
    return exit_code(ErrorKind::Io);
  }
  return 0;
}
