#include "diffprior/config.hpp"

#include <charconv>
#include <functional>
#include <sstream>

#include "diffprior/errors.hpp"

namespace diffprior {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc{} || ptr != end) throw Error(ErrorKind::Config, "bad value for " + key + ": '" + value + "'");
  return out;
}

std::string number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

struct Field {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

Field real(const std::string& key, double RunConfig::*member) {
  return {key, [=](RunConfig& c, const std::string& v) { c.*member = parse_number<double>(key, v); },
          [=](const RunConfig& c) { return number(c.*member); }};
}

Field integer(const std::string& key, int RunConfig::*member) {
  return {key, [=](RunConfig& c, const std::string& v) { c.*member = parse_number<int>(key, v); },
          [=](const RunConfig& c) { return std::to_string(c.*member); }};
}

Field seed(const std::string& key, std::uint64_t RunConfig::*member) {
  return {key, [=](RunConfig& c, const std::string& v) { c.*member = parse_number<std::uint64_t>(key, v); },
          [=](const RunConfig& c) { return std::to_string(c.*member); }};
}

Field dsp_real(const std::string& key, double DspConfig::*member) {
  return {key, [=](RunConfig& c, const std::string& v) { c.dsp.*member = parse_number<double>(key, v); },
          [=](const RunConfig& c) { return number(c.dsp.*member); }};
}

Field dsp_int(const std::string& key, int DspConfig::*member) {
  return {key, [=](RunConfig& c, const std::string& v) { c.dsp.*member = parse_number<int>(key, v); },
          [=](const RunConfig& c) { return std::to_string(c.dsp.*member); }};
}

template <typename E>
Field choice(const std::string& key, E RunConfig::*member, std::vector<std::pair<std::string, E>> options) {
  return {key,
          [=](RunConfig& c, const std::string& v) {
            for (const auto& [name, value] : options) {
              if (name == v) {
                c.*member = value;
                return;
              }
            }
            throw Error(ErrorKind::Config, "bad value for " + key + ": '" + v + "'");
          },
          [=](const RunConfig& c) {
            for (const auto& [name, value] : options) {
              if (value == c.*member) return name;
            }
            return std::string("?");
          }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      real("beta_start", &RunConfig::beta_start),
      real("beta_end", &RunConfig::beta_end),
      integer("diffusion_steps", &RunConfig::diffusion_steps),
      integer("fast_steps", &RunConfig::fast_steps),
      real("fast_grid_scale", &RunConfig::fast_grid_scale),
      choice<LevelMapping>("level_mapping", &RunConfig::level_mapping,
                           {{"nearest", LevelMapping::Nearest}, {"interpolate", LevelMapping::Interpolate}}),
      choice<PriorArm>("prior", &RunConfig::prior, {{"standard", PriorArm::Standard}, {"adaptive", PriorArm::Adaptive}}),
      real("min_std", &RunConfig::min_std),
      choice<EnergyNormalization>("normalization", &RunConfig::normalization,
                                  {{"per-utterance", EnergyNormalization::PerUtterance},
                                   {"corpus-global", EnergyNormalization::CorpusGlobal}}),
      real("corpus_max", &RunConfig::corpus_max),
      integer("hidden", &RunConfig::hidden),
      integer("embedding", &RunConfig::embedding),
      real("learning_rate", &RunConfig::learning_rate),
      integer("train_steps", &RunConfig::train_steps),
      integer("batch_size", &RunConfig::batch_size),
      integer("loss_window", &RunConfig::loss_window),
      seed("seed", &RunConfig::seed),
      dsp_real("sample_rate", &DspConfig::sample_rate),
      dsp_int("fft_size", &DspConfig::fft_size),
      dsp_int("hop", &DspConfig::hop),
      dsp_int("n_mels", &DspConfig::n_mels),
      dsp_real("f_min", &DspConfig::f_min),
      dsp_real("f_max", &DspConfig::f_max),
      dsp_real("log_floor", &DspConfig::log_floor),
      integer("window_frames", &RunConfig::window_frames),
      integer("clips", &RunConfig::clips),
      integer("segments", &RunConfig::segments),
      integer("min_duration_hops", &RunConfig::min_duration_hops),
      integer("max_duration_hops", &RunConfig::max_duration_hops),
      real("min_amplitude", &RunConfig::min_amplitude),
      real("max_amplitude", &RunConfig::max_amplitude),
      choice<Carrier>("carrier", &RunConfig::carrier, {{"noise", Carrier::FilteredNoise}, {"sine", Carrier::Sinusoid}}),
      real("noise_pole", &RunConfig::noise_pole),
      integer("label_count", &RunConfig::label_count),
      seed("corpus_seed", &RunConfig::corpus_seed),
      real("train_fraction", &RunConfig::train_fraction),
      real("validation_fraction", &RunConfig::validation_fraction),
      real("test_fraction", &RunConfig::test_fraction),
      integer("n_cep", &RunConfig::n_cep),
      real("sinkhorn_blur", &RunConfig::sinkhorn_blur),
      integer("sinkhorn_windows", &RunConfig::sinkhorn_windows),
  };
  return table;
}

}  // namespace

SyntheticSpec RunConfig::synthetic_spec() const {
  SyntheticSpec s;
  s.segments = segments;
  s.min_duration = min_duration_hops * dsp.hop;
  s.max_duration = max_duration_hops * dsp.hop;
  s.min_amplitude = min_amplitude;
  s.max_amplitude = max_amplitude;
  s.carrier = carrier;
  s.noise_pole = noise_pole;
  s.label_count = label_count;
  s.sample_rate = static_cast<int>(dsp.sample_rate);
  s.seed = corpus_seed;
  return s;
}

NoiseSchedule RunConfig::schedule() const { return linear_schedule(beta_start, beta_end, diffusion_steps); }

void RunConfig::validate() const {
  auto check = [](bool ok, const std::string& what) {
    if (!ok) throw Error(ErrorKind::Config, what);
  };
  check(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0, "need 0 < beta_start <= beta_end < 1");
  check(diffusion_steps >= 1, "diffusion_steps must be positive");
  check(fast_steps >= 1, "fast_steps must be positive");
  check(fast_grid_scale > 0.0 && fast_grid_scale * 9.0 < 1.0, "fast_grid_scale must keep 9*scale below 1");
  check(min_std > 0.0 && min_std < 1.0, "min_std must lie in (0, 1)");
  check(normalization == EnergyNormalization::PerUtterance || corpus_max > 0.0,
        "corpus-global normalization needs corpus_max > 0");
  check(hidden >= 1 && embedding >= 2 && embedding % 2 == 0, "hidden must be positive and embedding even");
  check(learning_rate > 0.0, "learning_rate must be positive");
  check(train_steps >= 1 && batch_size >= 1 && loss_window >= 1, "train_steps, batch_size and loss_window must be positive");
  check(window_frames >= 1, "window_frames must be positive");
  check(clips >= 1, "clips must be positive");
  check(n_cep >= 1 && n_cep < dsp.n_mels, "need 1 <= n_cep < n_mels");
  check(sinkhorn_blur > 0.0 && sinkhorn_windows >= 1, "sinkhorn settings must be positive");
  try {
    dsp.validate();
    synthetic_spec().validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::Config, e.what());
  }
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const Field& f : fields()) k.push_back(f.key);
    return k;
  }();
  return keys;
}

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const Field& f : fields()) {
    if (f.key == key) {
      f.set(cfg, value);
      return;
    }
  }
  throw Error(ErrorKind::Config, "unknown config key '" + key + "'");
}

RunConfig parse_config(const std::string& text, RunConfig base) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorKind::Config, "line " + std::to_string(line_no) + ": expected key=value");
    }
    try {
      apply_setting(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const Error& e) {
      throw Error(ErrorKind::Config, "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return base;
}

RunConfig read_config(const std::filesystem::path& path, RunConfig base) {
  return parse_config(read_text_file(path), std::move(base));
}

std::string format_config(const RunConfig& cfg) {
  std::string out;
  for (const Field& f : fields()) out += f.key + " = " + f.get(cfg) + "\n";
  return out;
}

}  // namespace diffprior
