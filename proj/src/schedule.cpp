#include "diffprior/schedule.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "diffprior/errors.hpp"

namespace diffprior {

NoiseSchedule::NoiseSchedule(Eigen::VectorXd betas) : betas_(std::move(betas)) {
  require(betas_.size() >= 1, ErrorKind::InvalidArgument, "schedule needs at least one step");
  for (Eigen::Index i = 0; i < betas_.size(); ++i) {
    const double b = betas_[i];
    require(std::isfinite(b) && b > 0.0 && b < 1.0, ErrorKind::InvalidArgument,
            "beta " + std::to_string(i + 1) + " outside (0, 1)");
  }
  const Eigen::Index T = betas_.size();
  alphas_ = (1.0 - betas_.array()).matrix();
  alpha_bars_.resize(T);
  beta_tildes_.resize(T);
  double running = 1.0;
  for (Eigen::Index i = 0; i < T; ++i) {
    const double prev = running;
    running *= alphas_[i];
    alpha_bars_[i] = running;
    beta_tildes_[i] = (1.0 - prev) / (1.0 - running) * betas_[i];
  }
  sigmas_ = beta_tildes_.array().sqrt().matrix();
}

Eigen::Index NoiseSchedule::index(int t) const {
  require(t >= 1 && t <= steps(), ErrorKind::InvalidArgument,
          "step " + std::to_string(t) + " outside [1, " + std::to_string(steps()) + "]");
  return t - 1;
}

double NoiseSchedule::alpha_bar(int t) const {
  if (t == 0) return 1.0;
  return alpha_bars_[index(t)];
}

NoiseSchedule linear_schedule(double beta_start, double beta_end, int steps) {
  require(steps >= 1, ErrorKind::InvalidArgument, "linear schedule needs T >= 1");
  require(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0, ErrorKind::InvalidArgument,
          "linear schedule needs 0 < beta_start <= beta_end < 1");
  Eigen::VectorXd betas(steps);
  if (steps == 1) {
    betas[0] = beta_start;
  } else {
    betas = Eigen::VectorXd::LinSpaced(steps, beta_start, beta_end);
    betas[0] = beta_start;
    betas[steps - 1] = beta_end;
  }
  return NoiseSchedule(std::move(betas));
}

double gamma(const NoiseSchedule& schedule, int t) {
  if (t == 1) {
    return 1.0 / (2.0 * schedule.alpha(1));
  }
  const double beta = schedule.beta(t);
  const double sigma2 = schedule.beta_tilde(t);
  return beta * beta / (2.0 * sigma2 * schedule.alpha(t) * (1.0 - schedule.alpha_bar(t)));
}

double gamma_posterior_form(const NoiseSchedule& schedule, int t) {
  require(t >= 2, ErrorKind::InvalidArgument, "posterior-form weight is defined for t >= 2");
  return schedule.beta(t) / (2.0 * schedule.alpha(t) * (1.0 - schedule.alpha_bar(t - 1)));
}

Eigen::VectorXd gammas(const NoiseSchedule& schedule) {
  Eigen::VectorXd g(schedule.steps());
  for (int t = 1; t <= schedule.steps(); ++t) g[t - 1] = gamma(schedule, t);
  return g;
}

bool strictly_increasing(std::span<const double> values) {
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (!(values[i] > values[i - 1])) return false;
  }
  return true;
}

namespace {

struct GridSearch {
  const std::vector<std::vector<double>>& grid;
  const ScheduleObjective& objective;
  std::vector<double> current;
  std::vector<double> best;
  double best_value = std::numeric_limits<double>::infinity();
  bool found = false;

  void visit(std::size_t position) {
    if (position == grid.size()) {
      const double value = objective(current);
      // Enumeration runs in lexicographic order, so keeping the first
      // minimizer resolves ties toward the lexicographically smallest schedule.
      if (!found || value < best_value) {
        best_value = value;
        best = current;
        found = true;
      }
      return;
    }
    for (double candidate : grid[position]) {
      if (position > 0 && !(candidate > current[position - 1])) continue;
      current[position] = candidate;
      visit(position + 1);
    }
  }
};

}  // namespace

std::vector<double> grid_search_fast_schedule(const std::vector<std::vector<double>>& grid,
                                              const ScheduleObjective& objective) {
  require(!grid.empty(), ErrorKind::InvalidArgument, "schedule grid has no positions");
  for (std::size_t p = 0; p < grid.size(); ++p) {
    require(!grid[p].empty(), ErrorKind::InvalidArgument,
            "grid position " + std::to_string(p) + " has no candidates");
    for (std::size_t i = 1; i < grid[p].size(); ++i) {
      require(grid[p][i] >= grid[p][i - 1], ErrorKind::InvalidArgument,
              "grid position " + std::to_string(p) + " is not sorted ascending");
    }
  }
  GridSearch search{grid, objective, std::vector<double>(grid.size()), {}};
  search.visit(0);
  if (!search.found) {
    throw Error(ErrorKind::NoFeasibleSchedule, "no strictly increasing combination in grid");
  }
  return search.best;
}

std::vector<std::vector<double>> decade_grid(std::span<const double> scales) {
  std::vector<std::vector<double>> grid;
  for (double scale : scales) {
    std::vector<double> row;
    for (int k = 1; k <= 9; ++k) row.push_back(k * scale);
    grid.push_back(std::move(row));
  }
  return grid;
}

std::vector<double> parse_betas(const std::string& text) {
  std::vector<double> betas;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    double value = 0.0;
    if (!(fields >> value)) {
      std::string rest;
      if (std::istringstream(line) >> rest) {
        throw Error(ErrorKind::Format, "schedule line " + std::to_string(line_no) + " is not a number");
      }
      continue;
    }
    std::string trailing;
    if (fields >> trailing) {
      throw Error(ErrorKind::Format, "schedule line " + std::to_string(line_no) + " has extra fields");
    }
    betas.push_back(value);
  }
  return betas;
}

std::vector<double> read_betas(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open schedule " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_betas(ss.str());
}

std::string format_betas(std::span<const double> betas, const std::string& header) {
  std::ostringstream os;
  if (!header.empty()) os << "# " << header << '\n';
  for (double b : betas) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), b);
    os << std::string_view(buf, static_cast<std::size_t>(end - buf)) << '\n';
  }
  return os.str();
}

void write_betas(const std::filesystem::path& path, std::span<const double> betas, const std::string& header) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write schedule " + path.string());
  out << format_betas(betas, header);
}

}  // namespace diffprior
