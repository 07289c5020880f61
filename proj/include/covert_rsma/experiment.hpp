#pragma once

// Experiment configuration, orchestration of scheme runs over sweep grids,
// and deterministic CSV output.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "covert_rsma/env.hpp"
#include "covert_rsma/greedy.hpp"
#include "covert_rsma/numerics.hpp"
#include "covert_rsma/ppo.hpp"

namespace covert_rsma {

enum class Scheme { kPpoRsma, kPpoSdma, kGreedyRsma, kGreedySdma };
enum class SweepVariable { kNone, kPowerDb, kEpsilon, kBlocklength };

inline std::string_view to_string(Scheme s) {
  switch (s) {
    case Scheme::kPpoRsma: return "P-RSMA";
    case Scheme::kPpoSdma: return "P-SDMA";
    case Scheme::kGreedyRsma: return "G-RSMA";
    case Scheme::kGreedySdma: return "G-SDMA";
  }
  return "?";
}

inline std::string_view to_string(SweepVariable v) {
  switch (v) {
    case SweepVariable::kNone: return "none";
    case SweepVariable::kPowerDb: return "power_db";
    case SweepVariable::kEpsilon: return "epsilon";
    case SweepVariable::kBlocklength: return "blocklength";
  }
  return "?";
}

inline Scheme parse_scheme(std::string_view s) {
  for (Scheme x : {Scheme::kPpoRsma, Scheme::kPpoSdma, Scheme::kGreedyRsma, Scheme::kGreedySdma}) {
    if (s == to_string(x)) return x;
  }
  throw ConfigError("unknown scheme '" + std::string(s) +
                    "' (expected P-RSMA, P-SDMA, G-RSMA or G-SDMA)");
}

inline Regime parse_regime(std::string_view s) {
  if (s == "FBL") return Regime::kFinite;
  if (s == "IBL") return Regime::kInfinite;
  throw ConfigError("unknown regime '" + std::string(s) + "' (expected FBL or IBL)");
}

inline bool is_ppo(Scheme s) { return s == Scheme::kPpoRsma || s == Scheme::kPpoSdma; }
inline Access access_of(Scheme s) {
  return (s == Scheme::kPpoRsma || s == Scheme::kGreedyRsma) ? Access::kRsma : Access::kSdma;
}

/// Everything needed to reproduce one figure family for one scheme/regime.
struct ExperimentSpec {
  Scheme scheme = Scheme::kPpoRsma;
  Regime regime = Regime::kFinite;
  SweepVariable sweep = SweepVariable::kNone;
  std::vector<double> grid;  // dB, epsilon, or interval upper bound in kilobits
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  EnvConfig env;
  PpoHyper ppo;
  GreedyConfig greedy;

  double power_db = 20.0;
  double uses_per_kbit = 1000.0;
  double block_lo_kbits = 0.0;
  double block_hi_kbits = 1.0;
  double block_interval_kbits = 0.1;  // width of sweep intervals
  std::vector<double> power_grid_db = {0, 10, 20, 30, 40};
  std::vector<double> epsilon_grid = {0.05, 0.1, 0.2, 0.3, 0.4, 0.5};
  std::vector<double> block_grid_kbits = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  int log_every = 10;
  double tail_fraction = 0.1;
  int workers = 1;
  std::uint64_t master_seed = 0;

  /// Episodes per run: PPO updates, or greedy blocks of episode_length steps.
  [[nodiscard]] int episodes() const noexcept { return ppo.updates; }

  void validate() const {
    env.validate();
    ppo.validate();
    greedy.validate();
    if (seeds.empty()) throw ConfigError("experiment: seeds must be nonempty");
    if (sweep != SweepVariable::kNone && grid.empty()) {
      throw ConfigError("experiment: sweep grid must be nonempty");
    }
    if (log_every < 1) throw ConfigError("experiment: log_every must be >= 1");
    if (!(tail_fraction > 0.0 && tail_fraction <= 1.0)) {
      throw ConfigError("experiment: tail_fraction must lie in (0, 1]");
    }
    if (workers < 1) throw ConfigError("experiment: workers must be >= 1");
    if (ppo.updates < 1) throw ConfigError("experiment: updates must be >= 1");
  }

  /// Env config at one sweep point.
  [[nodiscard]] EnvConfig env_at(double sweep_value) const {
    EnvConfig e = env;
    e.regime = regime;
    e.access = access_of(scheme);
    switch (sweep) {
      case SweepVariable::kNone: break;
      case SweepVariable::kPowerDb: e.power = db_to_linear(sweep_value); break;
      case SweepVariable::kEpsilon: e.epsilon = sweep_value; break;
      case SweepVariable::kBlocklength:
        e.length_hi = sweep_value * uses_per_kbit;
        e.length_lo = std::max(0.0, sweep_value - block_interval_kbits) * uses_per_kbit;
        break;
    }
    return e;
  }

  /// Sweep points; a single point (the base power in dB) when not sweeping.
  [[nodiscard]] std::vector<double> points() const {
    if (sweep == SweepVariable::kNone) return {power_db};
    return grid;
  }

  void use_sweep(SweepVariable v) {
    sweep = v;
    switch (v) {
      case SweepVariable::kNone: grid.clear(); break;
      case SweepVariable::kPowerDb: grid = power_grid_db; break;
      case SweepVariable::kEpsilon: grid = epsilon_grid; break;
      case SweepVariable::kBlocklength: grid = block_grid_kbits; break;
    }
  }
};

// ---------------------------------------------------------------------------
// Configuration file: `key = value` lines, `#` comments.

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::optional<double> parse_plain_double(std::string_view s) {
  double v = 0.0;
  const auto* first = s.data();
  const auto* last = s.data() + s.size();
  if (!s.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || first == last) return std::nullopt;
  return v;
}

/// Real literal, optionally a multiple of pi: `0.5`, `pi`, `pi/9`, `2pi/9`,
/// `2*pi/9`.
inline std::optional<double> parse_real(std::string_view text) {
  const std::string s = trim(text);
  const auto pos = s.find("pi");
  if (pos == std::string::npos) return parse_plain_double(s);
  double coef = 1.0;
  std::string head = trim(std::string_view(s).substr(0, pos));
  if (!head.empty() && head.back() == '*') head = trim(std::string_view(head).substr(0, head.size() - 1));
  if (!head.empty()) {
    if (head == "-") {
      coef = -1.0;
    } else {
      auto c = parse_plain_double(head);
      if (!c) return std::nullopt;
      coef = *c;
    }
  }
  double div = 1.0;
  const std::string tail = trim(std::string_view(s).substr(pos + 2));
  if (!tail.empty()) {
    if (tail.front() != '/') return std::nullopt;
    auto d = parse_plain_double(trim(std::string_view(tail).substr(1)));
    if (!d || *d == 0.0) return std::nullopt;
    div = *d;
  }
  return coef * std::numbers::pi / div;
}

inline std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const auto end = comma == std::string_view::npos ? s.size() : comma;
    out.push_back(trim(s.substr(start, end - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

class ValueReader {
 public:
  ValueReader(std::string key, std::string value, int line)
      : key_(std::move(key)), value_(std::move(value)), line_(line) {}

  [[nodiscard]] double real() const {
    auto v = parse_real(value_);
    if (!v || !std::isfinite(*v)) fail("a real number");
    return *v;
  }
  [[nodiscard]] int integer() const {
    int v = 0;
    auto [ptr, ec] = std::from_chars(value_.data(), value_.data() + value_.size(), v);
    if (ec != std::errc() || ptr != value_.data() + value_.size() || value_.empty()) {
      fail("an integer");
    }
    return v;
  }
  [[nodiscard]] std::uint64_t u64() const {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(value_.data(), value_.data() + value_.size(), v);
    if (ec != std::errc() || ptr != value_.data() + value_.size() || value_.empty()) {
      fail("a non-negative integer");
    }
    return v;
  }
  [[nodiscard]] bool boolean() const {
    if (value_ == "true" || value_ == "1") return true;
    if (value_ == "false" || value_ == "0") return false;
    fail("true or false");
  }
  [[nodiscard]] std::vector<double> reals() const {
    std::vector<double> out;
    for (const auto& item : split_list(value_)) {
      auto v = parse_real(item);
      if (!v || !std::isfinite(*v)) fail("a comma-separated list of real numbers");
      out.push_back(*v);
    }
    return out;
  }
  [[nodiscard]] std::vector<std::uint64_t> u64s() const {
    std::vector<std::uint64_t> out;
    for (const auto& item : split_list(value_)) {
      std::uint64_t v = 0;
      auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
      if (ec != std::errc() || ptr != item.data() + item.size() || item.empty()) {
        fail("a comma-separated list of non-negative integers");
      }
      out.push_back(v);
    }
    return out;
  }
  [[nodiscard]] const std::string& text() const noexcept { return value_; }

  [[noreturn]] void fail(const char* expected) const {
    throw ConfigError("config line " + std::to_string(line_) + ": key '" + key_ + "' expects " +
                      expected + ", got '" + value_ + "'");
  }

 private:
  std::string key_;
  std::string value_;
  int line_;
};

}  // namespace detail

/// Keys accepted by parse_config, in documentation order.
inline const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "scheme", "regime", "power_db", "epsilon", "antennas", "gains", "phases", "dof",
      "warden_gain", "warden_phase", "warden_noise_var", "qos", "covert_weight", "qos_weights",
      "delta", "block_lo_kbits", "block_hi_kbits", "uses_per_kbit", "episode_length",
      "error_redraw", "discount", "gae_lambda", "clip", "learning_rate", "epochs", "minibatch",
      "updates", "entropy_coef", "log_std_init", "hidden", "init_radiated_power",
      "greedy_candidates", "greedy_logit_range", "greedy_buffer", "greedy_reuse_best", "seeds",
      "master_seed", "power_grid_db", "epsilon_grid", "block_grid_kbits", "block_interval_kbits",
      "log_every", "tail_fraction", "workers"};
  return keys;
}

namespace detail {
inline std::vector<double> per_user(const ValueReader& r, std::size_t users) {
  std::vector<double> v = r.reals();
  if (v.size() == 1) v.assign(users, v.front());
  return v;
}
}  // namespace detail

/// Strict parse of a configuration stream; keys not listed in config_keys()
/// are rejected. Every key defaults to the evaluation's base setting.
inline ExperimentSpec parse_config_stream(std::istream& in) {
  ExperimentSpec spec;
  std::map<std::string, detail::ValueReader> entries;
  std::string line;
  int lineno = 0;
  const auto& keys = config_keys();
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string body = detail::trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = detail::trim(std::string_view(body).substr(0, eq));
    const std::string value = detail::trim(std::string_view(body).substr(eq + 1));
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
    if (entries.contains(key)) {
      throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
    entries.emplace(key, detail::ValueReader(key, value, lineno));
  }

  auto get = [&](const char* key) -> const detail::ValueReader* {
    auto it = entries.find(key);
    return it == entries.end() ? nullptr : &it->second;
  };

  if (auto* r = get("scheme")) {
    try {
      spec.scheme = parse_scheme(r->text());
    } catch (const ConfigError&) {
      r->fail("one of P-RSMA, P-SDMA, G-RSMA, G-SDMA");
    }
  }
  if (auto* r = get("regime")) {
    try {
      spec.regime = parse_regime(r->text());
    } catch (const ConfigError&) {
      r->fail("FBL or IBL");
    }
  }
  EnvConfig& e = spec.env;
  ChannelParams& c = e.channel;
  if (auto* r = get("gains")) c.gains = r->reals();
  const std::size_t users = c.gains.size();
  if (auto* r = get("phases")) c.phases = detail::per_user(*r, users);
  if (auto* r = get("dof")) c.dof = detail::per_user(*r, users);
  if (auto* r = get("antennas")) c.antennas = r->integer();
  if (auto* r = get("warden_gain")) c.warden_gain = r->real();
  if (auto* r = get("warden_phase")) c.warden_phase = r->real();
  if (auto* r = get("warden_noise_var")) c.warden_noise_var = r->real();
  if (auto* r = get("epsilon")) e.epsilon = r->real();
  e.qos.assign(users, 1e-4);
  e.qos_weights.assign(users, 1.0);
  e.delta.assign(users, 1e-3);
  if (auto* r = get("qos")) e.qos = detail::per_user(*r, users);
  if (auto* r = get("covert_weight")) e.covert_weight = r->real();
  if (auto* r = get("qos_weights")) e.qos_weights = detail::per_user(*r, users);
  if (auto* r = get("delta")) e.delta = detail::per_user(*r, users);
  if (auto* r = get("episode_length")) e.episode_length = r->integer();
  if (auto* r = get("error_redraw")) {
    if (r->text() == "per_step") {
      e.redraw = ErrorRedraw::kPerStep;
    } else if (r->text() == "per_episode") {
      e.redraw = ErrorRedraw::kPerEpisode;
    } else {
      r->fail("per_step or per_episode");
    }
  }
  if (auto* r = get("power_db")) spec.power_db = r->real();
  if (auto* r = get("uses_per_kbit")) spec.uses_per_kbit = r->real();
  if (auto* r = get("block_lo_kbits")) spec.block_lo_kbits = r->real();
  if (auto* r = get("block_hi_kbits")) spec.block_hi_kbits = r->real();
  if (auto* r = get("block_interval_kbits")) spec.block_interval_kbits = r->real();
  e.power = db_to_linear(spec.power_db);
  e.length_lo = spec.block_lo_kbits * spec.uses_per_kbit;
  e.length_hi = spec.block_hi_kbits * spec.uses_per_kbit;

  PpoHyper& h = spec.ppo;
  if (auto* r = get("discount")) h.discount = r->real();
  if (auto* r = get("gae_lambda")) h.gae_lambda = r->real();
  if (auto* r = get("clip")) h.clip = r->real();
  if (auto* r = get("learning_rate")) h.learning_rate = r->real();
  if (auto* r = get("epochs")) h.epochs = r->integer();
  if (auto* r = get("minibatch")) h.minibatch = r->integer();
  if (auto* r = get("updates")) h.updates = r->integer();
  if (auto* r = get("entropy_coef")) h.entropy_coef = r->real();
  if (auto* r = get("log_std_init")) h.log_std_init = r->real();
  if (auto* r = get("hidden")) h.hidden = r->integer();
  if (auto* r = get("init_radiated_power")) h.init_radiated_power = r->real();

  GreedyConfig& g = spec.greedy;
  if (auto* r = get("greedy_candidates")) g.candidates = r->integer();
  if (auto* r = get("greedy_logit_range")) g.logit_range = r->real();
  if (auto* r = get("greedy_buffer")) g.buffer_capacity = r->u64();
  if (auto* r = get("greedy_reuse_best")) g.reuse_best = r->boolean();

  if (auto* r = get("seeds")) spec.seeds = r->u64s();
  if (auto* r = get("master_seed")) spec.master_seed = r->u64();
  if (auto* r = get("power_grid_db")) spec.power_grid_db = r->reals();
  if (auto* r = get("epsilon_grid")) spec.epsilon_grid = r->reals();
  if (auto* r = get("block_grid_kbits")) spec.block_grid_kbits = r->reals();
  if (auto* r = get("log_every")) spec.log_every = r->integer();
  if (auto* r = get("tail_fraction")) spec.tail_fraction = r->real();
  if (auto* r = get("workers")) spec.workers = r->integer();

  spec.env.regime = spec.regime;
  spec.env.access = access_of(spec.scheme);
  spec.validate();
  return spec;
}

inline ExperimentSpec parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_config_stream(in);
}

// ---------------------------------------------------------------------------
// Metric rows and CSV.

struct MetricRow {
  std::string scheme;
  std::string regime;
  double sweep_value = 0.0;
  std::uint64_t seed = 0;
  int episode = 0;
  double avg_min_rate = 0.0;
  double avg_sum_rate = 0.0;
  double covert_violation_rate = 0.0;
  double qos_violation_rate = 0.0;
  double mean_kl = 0.0;
  double mean_radiated_power = 0.0;
};

inline const std::vector<std::string>& metric_columns() {
  static const std::vector<std::string> cols = {
      "scheme", "regime", "sweep_value", "seed", "episode", "avg_min_rate", "avg_sum_rate",
      "covert_violation_rate", "qos_violation_rate", "mean_kl", "mean_radiated_power"};
  return cols;
}

inline std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

inline void write_csv(std::ostream& os, const std::vector<MetricRow>& rows) {
  const auto& cols = metric_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  os << '\n';
  for (const auto& r : rows) {
    os << r.scheme << ',' << r.regime << ',' << format_real(r.sweep_value) << ',' << r.seed << ','
       << r.episode << ',' << format_real(r.avg_min_rate) << ',' << format_real(r.avg_sum_rate)
       << ',' << format_real(r.covert_violation_rate) << ','
       << format_real(r.qos_violation_rate) << ',' << format_real(r.mean_kl) << ','
       << format_real(r.mean_radiated_power) << '\n';
  }
}

inline void write_csv_file(const std::string& path, const std::vector<MetricRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  write_csv(out, rows);
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

/// Strict reader; the header must list exactly the MetricRow columns.
inline std::vector<MetricRow> read_csv(std::istream& in, const std::string& name = "csv") {
  std::string header;
  if (!std::getline(in, header) || detail::trim(header).empty()) {
    throw ConfigError(name + ": empty file");
  }
  const auto cols = detail::split_list(detail::trim(header));
  const auto& want = metric_columns();
  for (std::size_t i = 0; i < want.size(); ++i) {
    if (i >= cols.size()) throw ConfigError(name + ": missing column '" + want[i] + "'");
    if (cols[i] != want[i]) {
      throw ConfigError(name + ": expected column '" + want[i] + "', found '" + cols[i] + "'");
    }
  }
  if (cols.size() > want.size()) {
    throw ConfigError(name + ": unexpected column '" + cols[want.size()] + "'");
  }
  std::vector<MetricRow> rows;
  std::string line;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split_list(detail::trim(line));
    if (f.size() != want.size()) {
      throw ConfigError(name + " line " + std::to_string(lineno) + ": expected " +
                        std::to_string(want.size()) + " fields");
    }
    auto num = [&](std::size_t i) {
      auto v = detail::parse_plain_double(f[i]);
      if (!v) {
        throw ConfigError(name + " line " + std::to_string(lineno) + ": column '" + want[i] +
                          "' is not numeric");
      }
      return *v;
    };
    MetricRow r;
    r.scheme = f[0];
    r.regime = f[1];
    r.sweep_value = num(2);
    r.seed = static_cast<std::uint64_t>(num(3));
    r.episode = static_cast<int>(num(4));
    r.avg_min_rate = num(5);
    r.avg_sum_rate = num(6);
    r.covert_violation_rate = num(7);
    r.qos_violation_rate = num(8);
    r.mean_kl = num(9);
    r.mean_radiated_power = num(10);
    rows.push_back(std::move(r));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Orchestration.

struct RunOutput {
  std::vector<EpisodeMetrics> episodes;
  std::optional<std::string> checkpoint;  // PPO schemes only
};

/// Seed actually used by a job: a mix of the master seed and the run seed.
inline std::uint64_t job_seed(std::uint64_t master, std::uint64_t seed) {
  return detail::splitmix64(master ^ detail::splitmix64(seed));
}

inline RunOutput run_scheme(Scheme scheme, const EnvConfig& env, const PpoHyper& ppo,
                            const GreedyConfig& greedy, std::uint64_t seed,
                            bool keep_checkpoint = false) {
  RunOutput out;
  if (is_ppo(scheme)) {
    TrainResult r = train(env, ppo, seed);
    out.episodes = std::move(r.episodes);
    if (keep_checkpoint) {
      std::ostringstream os;
      r.agent.save(os, r.rng);
      out.checkpoint = os.str();
    }
  } else {
    out.episodes = run_greedy(env, greedy, ppo.updates, seed).episodes;
  }
  return out;
}

/// Mean over the last ceil(fraction * n) episodes.
inline EpisodeMetrics tail_average(std::span<const EpisodeMetrics> eps, double fraction) {
  if (eps.empty()) return {};
  const auto n = eps.size();
  const auto tail = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n))));
  return EpisodeMetrics::average(eps.subspan(n - std::min(tail, n)));
}

/// Least-squares slope of the per-episode min-rate over the last `window`
/// episodes; a plateau has |slope| below ~1e-5 per episode.
inline double tail_slope(std::span<const EpisodeMetrics> eps, std::size_t window) {
  window = std::min(window, eps.size());
  if (window < 2) return 0.0;
  const auto tail = eps.subspan(eps.size() - window);
  const double n = static_cast<double>(window);
  const double xm = (n - 1.0) / 2.0;
  double ym = 0.0;
  for (const auto& m : tail) ym += m.min_rate;
  ym /= n;
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < window; ++i) {
    const double dx = static_cast<double>(i) - xm;
    sxy += dx * (tail[i].min_rate - ym);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

inline MetricRow make_row(const ExperimentSpec& spec, double sweep_value, std::uint64_t seed,
                          int episode, const EpisodeMetrics& m) {
  MetricRow r;
  r.scheme = std::string(to_string(spec.scheme));
  r.regime = std::string(to_string(spec.regime));
  r.sweep_value = sweep_value;
  r.seed = seed;
  r.episode = episode;
  r.avg_min_rate = m.min_rate;
  r.avg_sum_rate = m.sum_rate;
  r.covert_violation_rate = m.covert_violation_rate;
  r.qos_violation_rate = m.qos_violation_rate;
  r.mean_kl = m.mean_kl;
  r.mean_radiated_power = m.mean_radiated_power;
  return r;
}

struct ExperimentResult {
  std::vector<MetricRow> series;   // one row per logging window
  std::vector<MetricRow> summary;  // tail-window average per (sweep value, seed)
  std::vector<std::string> checkpoints;  // per job, empty for greedy schemes
  std::vector<double> tail_slopes;       // per job
};

/// Runs every (sweep value, seed) job on a bounded worker pool; rows are
/// emitted in (sweep value, seed) order regardless of completion order.
inline ExperimentResult run_experiment(const ExperimentSpec& spec, bool keep_checkpoints = false) {
  spec.validate();
  const std::vector<double> points = spec.points();
  struct Job {
    double value;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (double v : points) {
    for (std::uint64_t s : spec.seeds) jobs.push_back({v, s});
  }
  std::vector<RunOutput> outputs(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      const EnvConfig env = spec.env_at(jobs[i].value);
      outputs[i] = run_scheme(spec.scheme, env, spec.ppo, spec.greedy,
                              job_seed(spec.master_seed, jobs[i].seed), keep_checkpoints);
    }
  };
  const int nthreads = std::min<int>(spec.workers, static_cast<int>(jobs.size()));
  if (nthreads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(static_cast<std::size_t>(nthreads));
    for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
  }

  ExperimentResult res;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const auto& eps = outputs[i].episodes;
    const std::span<const EpisodeMetrics> all(eps);
    for (std::size_t start = 0; start < eps.size(); start += static_cast<std::size_t>(spec.log_every)) {
      const std::size_t len = std::min(eps.size() - start, static_cast<std::size_t>(spec.log_every));
      res.series.push_back(make_row(spec, jobs[i].value, jobs[i].seed,
                                    static_cast<int>(start + len),
                                    EpisodeMetrics::average(all.subspan(start, len))));
    }
    res.summary.push_back(make_row(spec, jobs[i].value, jobs[i].seed, static_cast<int>(eps.size()),
                                   tail_average(all, spec.tail_fraction)));
    res.checkpoints.push_back(outputs[i].checkpoint.value_or(""));
    res.tail_slopes.push_back(tail_slope(all, std::max<std::size_t>(2, eps.size() / 10)));
  }
  return res;
}

}  // namespace covert_rsma
