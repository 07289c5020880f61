#pragma once

// Myopic baseline: per step, random candidate logits are scored on the current
// state and the best immediate reward is committed.

#include <cstddef>
#include <deque>
#include <optional>
#include <span>
#include <vector>

#include "covert_rsma/env.hpp"
#include "covert_rsma/numerics.hpp"

namespace covert_rsma {

struct GreedyConfig {
  int candidates = 64;        // N per step, including the historical best
  double logit_range = 3.0;   // candidates uniform in [-c, c]^(3K+1)
  std::size_t buffer_capacity = 1024;
  bool reuse_best = true;     // seed each step's candidates with the best so far

  void validate() const {
    if (candidates < 1) throw ConfigError("greedy: candidates must be >= 1");
    if (!(logit_range > 0.0)) throw ConfigError("greedy: logit_range must be > 0");
    if (buffer_capacity < 1) throw ConfigError("greedy: buffer_capacity must be >= 1");
  }
};

struct GreedyRecord {
  std::vector<double> action;
  double reward = 0.0;
};

class GreedyState {
 public:
  explicit GreedyState(GreedyConfig cfg = {}) : cfg_(cfg) { cfg_.validate(); }

  [[nodiscard]] const GreedyConfig& config() const noexcept { return cfg_; }
  [[nodiscard]] const std::deque<GreedyRecord>& history() const noexcept { return history_; }
  [[nodiscard]] const std::optional<GreedyRecord>& best() const noexcept { return best_; }
  [[nodiscard]] double best_reward() const noexcept { return best_ ? best_->reward : 0.0; }

  /// Appends to the ring buffer; the best record is replaced only on a strict
  /// improvement.
  void record(std::vector<double> action, double reward) {
    if (!best_ || reward > best_->reward) best_ = GreedyRecord{action, reward};
    history_.push_back({std::move(action), reward});
    if (history_.size() > cfg_.buffer_capacity) history_.pop_front();
  }

 private:
  GreedyConfig cfg_;
  std::deque<GreedyRecord> history_;
  std::optional<GreedyRecord> best_;
};

/// Index of the first maximum.
inline std::size_t first_argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

struct GreedyStep {
  std::vector<double> action;
  StepOutcome outcome;
  std::vector<double> candidate_rewards;
};

/// Scores the candidates on the environment's current state, commits the
/// argmax (first on ties) via env.step, and records it. The historical best
/// action, when present, is candidate 0.
inline GreedyStep greedy_step(Environment& env, GreedyState& greedy, Rng& rng) {
  const GreedyConfig& gc = greedy.config();
  const std::size_t dim = env.config().action_dim();
  std::vector<std::vector<double>> candidates;
  candidates.reserve(static_cast<std::size_t>(gc.candidates));
  if (gc.reuse_best && greedy.best()) candidates.push_back(greedy.best()->action);
  while (candidates.size() < static_cast<std::size_t>(gc.candidates)) {
    std::vector<double> c(dim);
    for (double& x : c) x = rng.uniform(-gc.logit_range, gc.logit_range);
    candidates.push_back(std::move(c));
  }
  GreedyStep out;
  out.candidate_rewards.reserve(candidates.size());
  for (const auto& c : candidates) out.candidate_rewards.push_back(env.evaluate(c).reward);
  const std::size_t pick = first_argmax(out.candidate_rewards);
  out.action = candidates[pick];
  out.outcome = env.step(out.action).outcome;
  greedy.record(out.action, out.outcome.reward);
  return out;
}

struct GreedyRun {
  std::vector<EpisodeMetrics> episodes;
  GreedyState state;
};

/// `episodes` blocks of episode_length greedy steps each.
inline GreedyRun run_greedy(const EnvConfig& cfg, const GreedyConfig& gc, int episodes,
                            std::uint64_t seed) {
  Rng root(seed);
  Environment env(cfg, root.derive(2));
  Rng rng = root.derive(4);
  GreedyRun run{{}, GreedyState(gc)};
  run.episodes.reserve(static_cast<std::size_t>(episodes));
  for (int e = 0; e < episodes; ++e) {
    EpisodeMetrics m;
    env.reset();
    for (int t = 0; t < cfg.episode_length; ++t) m.add(greedy_step(env, run.state, rng).outcome);
    run.episodes.push_back(m);
  }
  return run;
}

}  // namespace covert_rsma
