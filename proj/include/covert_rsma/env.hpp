#pragma once

// Max-min covert RSMA downlink as a Markov decision process.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "covert_rsma/channel.hpp"
#include "covert_rsma/covert.hpp"
#include "covert_rsma/numerics.hpp"
#include "covert_rsma/ratesplit.hpp"

namespace covert_rsma {

enum class Access { kRsma, kSdma };
enum class ErrorRedraw { kPerStep, kPerEpisode };

inline std::string_view to_string(Access a) {
  return a == Access::kRsma ? "RSMA" : "SDMA";
}

struct EnvConfig {
  double power = 100.0;  // P_t, linear (receiver noise is 1)
  ChannelParams channel = ChannelParams::three_user_default();
  double epsilon = 0.1;
  std::vector<double> qos = {1e-4, 1e-4, 1e-4};  // R_k^0, bps/Hz
  double covert_weight = 1.0;                    // beta_0
  std::vector<double> qos_weights = {1.0, 1.0, 1.0};
  double length_lo = 0.0;     // channel uses
  double length_hi = 1000.0;  // channel uses
  std::vector<double> delta = {1e-3, 1e-3, 1e-3};
  Regime regime = Regime::kFinite;
  Access access = Access::kRsma;
  int episode_length = 200;
  ErrorRedraw redraw = ErrorRedraw::kPerStep;

  [[nodiscard]] std::size_t users() const noexcept { return channel.users(); }
  [[nodiscard]] std::size_t antennas() const noexcept {
    return static_cast<std::size_t>(channel.antennas);
  }
  [[nodiscard]] std::size_t observation_dim() const noexcept { return 2 * users(); }
  [[nodiscard]] std::size_t action_dim() const noexcept { return 3 * users() + 1; }
  [[nodiscard]] CovertBudget budget() const { return CovertBudget(epsilon); }

  void validate() const {
    channel.validate();
    const std::size_t k = users();
    if (antennas() < k) throw ConfigError("env: antennas must be >= users");
    if (!(power > 0.0)) throw ConfigError("env: power must be > 0");
    (void)budget();
    if (qos.size() != k) throw ConfigError("env: qos needs one entry per user");
    if (qos_weights.size() != k) {
      throw ConfigError("env: qos_weights needs one entry per user");
    }
    if (delta.size() != k) throw ConfigError("env: delta needs one entry per user");
    double wsum = covert_weight;
    if (covert_weight < 0.0) throw ConfigError("env: weights must be >= 0");
    for (double w : qos_weights) {
      if (w < 0.0) throw ConfigError("env: weights must be >= 0");
      wsum += w;
    }
    if (!(wsum > 0.0)) throw ConfigError("env: penalty weights are all zero");
    for (double d : delta) {
      if (!(d > 0.0 && d < 1.0)) throw ConfigError("env: delta must lie in (0, 1)");
    }
    if (!(length_lo >= 0.0 && length_lo < length_hi)) {
      throw ConfigError("env: need 0 <= length_lo < length_hi");
    }
    if (episode_length < 1) throw ConfigError("env: episode_length must be >= 1");
  }
};

struct Observation {
  std::vector<double> features;  // [|h_1| .. |h_K|, L_1/hi .. L_K/hi]
};

/// Decoded decision: powers [common, private_1..K], split fractions, shares.
struct Action {
  std::vector<double> powers;
  std::vector<double> splits;
  std::vector<double> shares;
};

struct DecodedAction {
  Action action;
  Beamformer beamformer;
  SplitLengths lengths;
};

struct StepOutcome {
  RateReport report;
  double kl = 0.0;
  double radiated_power = 0.0;
  double penalty = 0.0;
  bool covert_violated = false;
  std::vector<bool> qos_violated;
  double reward = 0.0;
};

inline Observation make_observation(const ChannelState& channel,
                                    std::span<const double> lengths,
                                    double length_hi) {
  Observation o;
  o.features.reserve(2 * lengths.size());
  for (const auto& h : channel.realized) o.features.push_back(h.norm());
  for (double l : lengths) o.features.push_back(l / length_hi);
  return o;
}

namespace detail {
inline double logistic(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

/// Stable softmax over `logits`; entries with mask false get weight 0.
inline std::vector<double> masked_softmax(std::span<const double> logits,
                                          const std::vector<bool>& mask) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (mask[i]) mx = std::max(mx, logits[i]);
  }
  std::vector<double> w(logits.size(), 0.0);
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!mask[i]) continue;
    w[i] = std::exp(logits[i] - mx);
    sum += w[i];
  }
  for (double& x : w) x /= sum;
  return w;
}

inline ComplexVector unit_direction(const ComplexVector& v) {
  const double n = v.norm();
  if (n > 0.0) return (1.0 / n) * v;
  ComplexVector e(v.size());
  e[0] = 1.0;
  return e;
}
}  // namespace detail

/// Maps unbounded logits onto the feasible set. Layout of `raw` (3K+1):
/// [common power, K private powers, K split logits, K share logits]. Power
/// uses a softmax over K+2 slots whose last slot is an idle reference with
/// logit 0, so the radiated total can be anywhere in (0, P_t). Precoder
/// directions are matched to the estimated channels.
inline DecodedAction decode_action(std::span<const double> raw,
                                   const ChannelState& channel,
                                   std::span<const double> lengths,
                                   const EnvConfig& cfg) {
  const std::size_t k = cfg.users();
  if (raw.size() != cfg.action_dim()) {
    throw DimensionError("decode_action: expected " + std::to_string(cfg.action_dim()) +
                         " logits, got " + std::to_string(raw.size()));
  }
  if (lengths.size() != k || channel.estimated.size() != k) {
    throw DimensionError("decode_action: per-user inputs must have K entries");
  }
  const bool sdma = cfg.access == Access::kSdma;

  std::vector<double> power_logits(raw.begin(), raw.begin() + static_cast<long>(k + 1));
  power_logits.push_back(0.0);
  std::vector<bool> mask(k + 2, true);
  if (sdma) mask[0] = false;
  const std::vector<double> fractions = detail::masked_softmax(power_logits, mask);

  DecodedAction d;
  Action& a = d.action;
  a.powers.resize(k + 1);
  for (std::size_t i = 0; i <= k; ++i) a.powers[i] = cfg.power * fractions[i];
  a.splits.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    a.splits[i] = sdma ? 0.0 : detail::logistic(raw[k + 1 + i]);
  }
  if (sdma) {
    a.shares.assign(k, 1.0 / static_cast<double>(k));
  } else {
    a.shares = detail::masked_softmax(raw.subspan(2 * k + 1, k),
                                      std::vector<bool>(k, true));
  }

  ComplexVector common_dir(cfg.antennas());
  for (const auto& h : channel.estimated) common_dir += detail::unit_direction(h);
  Beamformer& bf = d.beamformer;
  bf.common = std::sqrt(a.powers[0]) * detail::unit_direction(common_dir);
  bf.privates.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    bf.privates.push_back(std::sqrt(a.powers[i + 1]) *
                          detail::unit_direction(channel.estimated[i]));
  }

  SplitLengths& lens = d.lengths;
  lens.totals.assign(lengths.begin(), lengths.end());
  lens.common.resize(k);
  lens.priv.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    const double total = lengths[i];
    double lc = a.splits[i] * total;
    if (!sdma && total >= 2.0 * kMinBlocklength) {
      lc = std::clamp(lc, kMinBlocklength, total - kMinBlocklength);
    }
    lens.common[i] = lc;
    lens.priv[i] = total - lc;
  }
  return d;
}

/// Normalized weighted count of violated constraints, in [0, 1].
inline double compute_penalty(const RateReport& report, double kl,
                              const EnvConfig& cfg, bool covert_active = true) {
  double wsum = cfg.covert_weight;
  for (double w : cfg.qos_weights) wsum += w;
  if (!(wsum > 0.0)) throw ConfigError("compute_penalty: penalty weights are all zero");
  double p = 0.0;
  if (covert_active && kl - cfg.budget().threshold() > 0.0) p += cfg.covert_weight;
  for (std::size_t i = 0; i < cfg.users(); ++i) {
    if (cfg.qos[i] - report.totals[i] > 0.0) p += cfg.qos_weights[i];
  }
  return p / wsum;
}

/// Decode, rate evaluation, covertness and reward for one action in a given
/// channel/length state. Pure.
inline StepOutcome evaluate_action(std::span<const double> raw,
                                   const ChannelState& channel,
                                   std::span<const double> lengths,
                                   const EnvConfig& cfg) {
  const DecodedAction d = decode_action(raw, channel, lengths, cfg);
  StepOutcome out;
  if (cfg.access == Access::kSdma) {
    out.report = sdma_report(channel, d.beamformer.privates, lengths, cfg.delta,
                             cfg.regime);
  } else {
    out.report = rate_report(channel, d.beamformer, d.lengths, d.action.shares,
                             cfg.delta, cfg.regime);
  }
  const CovertCheck cc = is_covert(d.beamformer, cfg.channel, cfg.budget());
  out.kl = cc.kl;
  out.radiated_power = cc.radiated_power;
  const bool covert_active = cfg.regime == Regime::kFinite;
  out.covert_violated = covert_active && !cc.covert;
  out.qos_violated.resize(cfg.users());
  for (std::size_t i = 0; i < cfg.users(); ++i) {
    out.qos_violated[i] = cfg.qos[i] - out.report.totals[i] > 0.0;
  }
  out.penalty = compute_penalty(out.report, out.kl, cfg, covert_active);
  out.reward = out.penalty == 0.0 ? out.report.min_rate : 0.0;
  return out;
}

struct StepResult {
  StepOutcome outcome;
  Observation next;
  bool done = false;
};

class Environment {
 public:
  Environment(EnvConfig cfg, Rng rng) : cfg_(std::move(cfg)), rng_(rng) {
    cfg_.validate();
    reset();
  }

  const Observation& reset() {
    t_ = 0;
    channel_ = draw_channel_state(cfg_.channel, cfg_.power, rng_);
    draw_lengths();
    observation_ = make_observation(channel_, lengths_, cfg_.length_hi);
    return observation_;
  }

  /// Reward computation on the current state without advancing it.
  [[nodiscard]] StepOutcome evaluate(std::span<const double> raw) const {
    return evaluate_action(raw, channel_, lengths_, cfg_);
  }

  StepResult step(std::span<const double> raw) {
    StepResult r;
    r.outcome = evaluate(raw);
    ++t_;
    if (cfg_.redraw == ErrorRedraw::kPerStep) {
      redraw_errors(channel_, cfg_.channel, cfg_.power, rng_);
    }
    draw_lengths();
    observation_ = make_observation(channel_, lengths_, cfg_.length_hi);
    r.next = observation_;
    r.done = t_ >= cfg_.episode_length;
    return r;
  }

  [[nodiscard]] const EnvConfig& config() const noexcept { return cfg_; }
  [[nodiscard]] const Observation& observation() const noexcept { return observation_; }
  [[nodiscard]] const ChannelState& channel() const noexcept { return channel_; }
  [[nodiscard]] std::span<const double> lengths() const noexcept { return lengths_; }
  [[nodiscard]] int time_step() const noexcept { return t_; }
  [[nodiscard]] Rng& rng() noexcept { return rng_; }

 private:
  void draw_lengths() {
    lengths_.resize(cfg_.users());
    for (double& l : lengths_) l = rng_.uniform(cfg_.length_lo, cfg_.length_hi);
  }

  EnvConfig cfg_;
  Rng rng_;
  ChannelState channel_;
  std::vector<double> lengths_;
  Observation observation_;
  int t_ = 0;
};

/// Running averages over a block of steps (one episode or a logging window).
struct EpisodeMetrics {
  double min_rate = 0.0;   // mean reward
  double sum_rate = 0.0;   // mean sum-rate of penalty-free steps (0 otherwise)
  double covert_violation_rate = 0.0;
  double qos_violation_rate = 0.0;
  double mean_kl = 0.0;
  double mean_radiated_power = 0.0;
  double mean_penalty = 0.0;
  int steps = 0;

  void add(const StepOutcome& o) {
    const double n = static_cast<double>(++steps);
    auto upd = [n](double& acc, double x) { acc += (x - acc) / n; };
    upd(min_rate, o.reward);
    upd(sum_rate, o.penalty == 0.0 ? o.report.sum_rate : 0.0);
    upd(covert_violation_rate, o.covert_violated ? 1.0 : 0.0);
    const bool any_qos =
        std::any_of(o.qos_violated.begin(), o.qos_violated.end(), [](bool b) { return b; });
    upd(qos_violation_rate, any_qos ? 1.0 : 0.0);
    upd(mean_kl, o.kl);
    upd(mean_radiated_power, o.radiated_power);
    upd(mean_penalty, o.penalty);
  }

  /// Equal-weight average of several blocks.
  static EpisodeMetrics average(std::span<const EpisodeMetrics> blocks) {
    EpisodeMetrics m;
    if (blocks.empty()) return m;
    for (const auto& b : blocks) {
      m.min_rate += b.min_rate;
      m.sum_rate += b.sum_rate;
      m.covert_violation_rate += b.covert_violation_rate;
      m.qos_violation_rate += b.qos_violation_rate;
      m.mean_kl += b.mean_kl;
      m.mean_radiated_power += b.mean_radiated_power;
      m.mean_penalty += b.mean_penalty;
      m.steps += b.steps;
    }
    const double n = static_cast<double>(blocks.size());
    m.min_rate /= n;
    m.sum_rate /= n;
    m.covert_violation_rate /= n;
    m.qos_violation_rate /= n;
    m.mean_kl /= n;
    m.mean_radiated_power /= n;
    m.mean_penalty /= n;
    return m;
  }
};

}  // namespace covert_rsma
