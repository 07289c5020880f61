#pragma once

// Proximal policy optimization with a diagonal-Gaussian policy, implemented
// directly on top of the hand-differentiated MLP.

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <istream>
#include <numbers>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "covert_rsma/env.hpp"
#include "covert_rsma/mlp.hpp"
#include "covert_rsma/numerics.hpp"

namespace covert_rsma {

struct PpoHyper {
  double discount = 0.99;  // tau
  double gae_lambda = 0.95;
  double clip = 0.2;  // epsilon of the clipped surrogate
  double learning_rate = 3e-4;
  int epochs = 10;
  int minibatch = 64;
  int updates = 2000;
  double entropy_coef = 0.0;
  double log_std_init = std::log(0.5);
  int hidden = 64;
  // Finite-blocklength runs start the policy mean at this radiated power
  // (watts); 0, or a value at or above P_t, keeps the zero output bias.
  double init_radiated_power = 1.0;

  void validate() const {
    if (!(discount > 0.0 && discount < 1.0)) throw ConfigError("ppo: discount must lie in (0, 1)");
    if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) {
      throw ConfigError("ppo: gae_lambda must lie in [0, 1]");
    }
    if (!(clip > 0.0)) throw ConfigError("ppo: clip must be > 0");
    if (!(learning_rate >= 0.0)) throw ConfigError("ppo: learning_rate must be >= 0");
    if (epochs < 1 || minibatch < 1 || updates < 0 || hidden < 1) {
      throw ConfigError("ppo: epochs, minibatch, hidden must be >= 1 and updates >= 0");
    }
    if (!(init_radiated_power >= 0.0)) throw ConfigError("ppo: init_radiated_power must be >= 0");
  }
};

struct GaussianPolicy {
  Mlp net;          // observation -> action mean
  VectorXd log_std; // state independent

  GaussianPolicy() = default;
  GaussianPolicy(std::size_t obs_dim, std::size_t action_dim, std::size_t hidden,
                 double log_std_init)
      : net(obs_dim, hidden, action_dim),
        log_std(VectorXd::Constant(static_cast<Eigen::Index>(action_dim), log_std_init)) {}
};

struct PolicyOutput {
  VectorXd mean;
  VectorXd log_std;
};

inline PolicyOutput policy_forward(const GaussianPolicy& policy,
                                   std::span<const double> obs) {
  if (obs.size() != policy.net.input_dim()) {
    throw DimensionError("policy_forward: observation has " + std::to_string(obs.size()) +
                         " entries, expected " + std::to_string(policy.net.input_dim()));
  }
  return {policy.net.forward(obs), policy.log_std};
}

inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;  // ln(2 pi) / 2

/// Diagonal-Gaussian log-density of `action`.
inline double gaussian_log_prob(const VectorXd& mean, const VectorXd& log_std,
                                const VectorXd& action) {
  double lp = 0.0;
  for (Eigen::Index i = 0; i < mean.size(); ++i) {
    const double z = (action[i] - mean[i]) * std::exp(-log_std[i]);
    lp += -0.5 * z * z - log_std[i] - kLogSqrt2Pi;
  }
  return lp;
}

struct SampledAction {
  VectorXd action;
  double log_prob = 0.0;
};

inline SampledAction sample_action(const VectorXd& mean, const VectorXd& log_std,
                                   Rng& rng) {
  if (mean.size() != log_std.size()) throw DimensionError("sample_action: size mismatch");
  SampledAction s;
  s.action.resize(mean.size());
  for (Eigen::Index i = 0; i < mean.size(); ++i) {
    s.action[i] = mean[i] + std::exp(log_std[i]) * rng.normal();
  }
  s.log_prob = gaussian_log_prob(mean, log_std, s.action);
  return s;
}

struct Transition {
  std::vector<double> observation;
  VectorXd action;
  double log_prob = 0.0;
  double reward = 0.0;
  double value = 0.0;
  bool done = false;  // episode ended after this step
};

using Trajectory = std::vector<Transition>;

struct Advantages {
  std::vector<double> raw;         // GAE before normalization
  std::vector<double> normalized;  // zero mean, unit variance
  std::vector<double> returns;     // discounted reward-to-go within the episode
};

inline Advantages compute_advantages(const Trajectory& traj, const PpoHyper& hyper) {
  if (traj.empty()) throw DomainError("compute_advantages: empty trajectory");
  const std::size_t n = traj.size();
  Advantages a;
  a.raw.assign(n, 0.0);
  a.returns.assign(n, 0.0);
  double gae = 0.0;
  double ret = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    const Transition& tr = traj[i];
    const bool last = tr.done || i + 1 == n;
    const double next_value = last ? 0.0 : traj[i + 1].value;
    if (last) {
      gae = 0.0;
      ret = 0.0;
    }
    const double td = tr.reward + hyper.discount * next_value - tr.value;
    gae = td + hyper.discount * hyper.gae_lambda * gae;
    ret = tr.reward + hyper.discount * ret;
    a.raw[i] = gae;
    a.returns[i] = ret;
  }
  const double mean = std::accumulate(a.raw.begin(), a.raw.end(), 0.0) / static_cast<double>(n);
  double var = 0.0;
  for (double x : a.raw) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / static_cast<double>(n));
  a.normalized.resize(n);
  for (std::size_t i = 0; i < n; ++i) a.normalized[i] = (a.raw[i] - mean) / (sd + 1e-8);
  return a;
}

/// (1 + eps) A for A >= 0, (1 - eps) A otherwise.
inline double clip_term(double ratio, double advantage, double clip) {
  (void)ratio;
  return advantage >= 0.0 ? (1.0 + clip) * advantage : (1.0 - clip) * advantage;
}

/// True when the clipped branch of the surrogate is the strict minimum.
inline bool clip_active(double ratio, double advantage, double clip) {
  return clip_term(ratio, advantage, clip) < ratio * advantage;
}

inline double ppo_loss(double ratio, double advantage, double clip) {
  return std::min(ratio * advantage, clip_term(ratio, advantage, clip));
}

/// d ppo_loss / d ratio: A on the unclipped branch, 0 on the clipped one.
inline double ppo_loss_dratio(double ratio, double advantage, double clip) {
  return clip_active(ratio, advantage, clip) ? 0.0 : advantage;
}

/// Column-batched training data for one minibatch.
struct Batch {
  MatrixXd observations;  // obs_dim x n
  MatrixXd actions;       // action_dim x n
  VectorXd old_log_probs;
  VectorXd advantages;
  VectorXd returns;
};

struct SurrogateEval {
  double objective = 0.0;  // mean surrogate (+ entropy bonus)
  VectorXd grad_net;
  VectorXd grad_log_std;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
};

/// Mean clipped surrogate over the batch and its exact gradient.
inline SurrogateEval surrogate_and_grad(const GaussianPolicy& policy, const Batch& b,
                                        double clip, double entropy_coef = 0.0) {
  const Eigen::Index n = b.observations.cols();
  const Eigen::Index d = policy.log_std.size();
  Mlp::Cache cache;
  const MatrixXd mean = policy.net.forward(b.observations, &cache);
  const VectorXd inv_var = (-2.0 * policy.log_std).array().exp();
  MatrixXd d_mean(d, n);
  VectorXd d_log_std = VectorXd::Zero(d);
  SurrogateEval out;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const VectorXd diff = b.actions.col(j) - mean.col(j);
    double lp = 0.0;
    for (Eigen::Index i = 0; i < d; ++i) {
      lp += -0.5 * diff[i] * diff[i] * inv_var[i] - policy.log_std[i] - kLogSqrt2Pi;
    }
    const double log_ratio = lp - b.old_log_probs[j];
    const double ratio = std::exp(log_ratio);
    const double adv = b.advantages[j];
    out.objective += ppo_loss(ratio, adv, clip) * inv_n;
    out.approx_kl += -log_ratio * inv_n;
    if (clip_active(ratio, adv, clip)) out.clip_fraction += inv_n;
    // dL/dlogp = dL/dratio * ratio
    const double g = ppo_loss_dratio(ratio, adv, clip) * ratio * inv_n;
    for (Eigen::Index i = 0; i < d; ++i) {
      d_mean(i, j) = g * diff[i] * inv_var[i];
      d_log_std[i] += g * (diff[i] * diff[i] * inv_var[i] - 1.0);
    }
  }
  if (entropy_coef != 0.0) {
    // H = sum(log_std) + d (1 + ln 2 pi) / 2
    out.objective += entropy_coef * (policy.log_std.sum() +
                                     static_cast<double>(d) * (0.5 + kLogSqrt2Pi));
    d_log_std.array() += entropy_coef;
  }
  out.grad_net = policy.net.backward(cache, d_mean);
  out.grad_log_std = std::move(d_log_std);
  return out;
}

struct ValueEval {
  double loss = 0.0;  // mean squared error
  VectorXd grad;
};

inline ValueEval value_loss_and_grad(const Mlp& value, const MatrixXd& observations,
                                     const VectorXd& returns) {
  Mlp::Cache cache;
  const MatrixXd v = value.forward(observations, &cache);
  const Eigen::Index n = observations.cols();
  const MatrixXd err = v - returns.transpose();
  ValueEval out;
  out.loss = err.squaredNorm() / static_cast<double>(n);
  out.grad = value.backward(cache, (2.0 / static_cast<double>(n)) * err);
  return out;
}

struct UpdateDiagnostics {
  double policy_objective = 0.0;
  double value_loss = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  double mean_log_std = 0.0;
};

class PpoAgent {
 public:
  PpoAgent() = default;
  PpoAgent(std::size_t obs_dim, std::size_t action_dim, const PpoHyper& hyper, Rng& init_rng)
      : hyper_(hyper),
        policy_(obs_dim, action_dim, static_cast<std::size_t>(hyper.hidden), hyper.log_std_init),
        value_(obs_dim, static_cast<std::size_t>(hyper.hidden), 1) {
    hyper_.validate();
    policy_.net.initialize(init_rng, 1.0, 0.01);
    value_.initialize(init_rng, 1.0, 1.0);
    reset_optimizers();
  }

  void reset_optimizers() {
    policy_opt_ = Adam(policy_.net.params().size());
    log_std_opt_ = Adam(policy_.log_std.size());
    value_opt_ = Adam(value_.params().size());
  }

  [[nodiscard]] const PpoHyper& hyper() const noexcept { return hyper_; }
  PpoHyper& hyper() noexcept { return hyper_; }
  [[nodiscard]] const GaussianPolicy& policy() const noexcept { return policy_; }
  GaussianPolicy& policy() noexcept { return policy_; }
  [[nodiscard]] const Mlp& value() const noexcept { return value_; }
  Mlp& value() noexcept { return value_; }

  [[nodiscard]] double value_of(std::span<const double> obs) const {
    return value_.forward(obs)[0];
  }

  /// Epochs of shuffled minibatch ascent on the clipped surrogate and descent
  /// on the value regression loss.
  UpdateDiagnostics update(const Trajectory& traj, Rng& rng) {
    const Advantages adv = compute_advantages(traj, hyper_);
    const std::size_t n = traj.size();
    const auto od = static_cast<Eigen::Index>(policy_.net.input_dim());
    const auto ad = static_cast<Eigen::Index>(policy_.net.output_dim());
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    UpdateDiagnostics diag;
    int batches = 0;
    for (int epoch = 0; epoch < hyper_.epochs; ++epoch) {
      for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
      for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(hyper_.minibatch)) {
        const std::size_t stop = std::min(n, start + static_cast<std::size_t>(hyper_.minibatch));
        const auto m = static_cast<Eigen::Index>(stop - start);
        Batch b;
        b.observations.resize(od, m);
        b.actions.resize(ad, m);
        b.old_log_probs.resize(m);
        b.advantages.resize(m);
        b.returns.resize(m);
        for (Eigen::Index j = 0; j < m; ++j) {
          const std::size_t idx = order[start + static_cast<std::size_t>(j)];
          const Transition& tr = traj[idx];
          b.observations.col(j) =
              Eigen::Map<const VectorXd>(tr.observation.data(), od);
          b.actions.col(j) = tr.action;
          b.old_log_probs[j] = tr.log_prob;
          b.advantages[j] = adv.normalized[idx];
          b.returns[j] = adv.returns[idx];
        }
        const SurrogateEval s = surrogate_and_grad(policy_, b, hyper_.clip, hyper_.entropy_coef);
        const ValueEval v = value_loss_and_grad(value_, b.observations, b.returns);
        if (!s.grad_net.allFinite() || !s.grad_log_std.allFinite() || !v.grad.allFinite()) {
          throw NumericalError("ppo update: non-finite gradient (objective=" +
                               std::to_string(s.objective) +
                               ", value_loss=" + std::to_string(v.loss) + ")");
        }
        policy_opt_.ascend(policy_.net.params(), s.grad_net, hyper_.learning_rate);
        log_std_opt_.ascend(policy_.log_std, s.grad_log_std, hyper_.learning_rate);
        value_opt_.descend(value_.params(), v.grad, hyper_.learning_rate);
        diag.policy_objective += s.objective;
        diag.value_loss += v.loss;
        diag.approx_kl += s.approx_kl;
        diag.clip_fraction += s.clip_fraction;
        ++batches;
      }
    }
    if (batches > 0) {
      diag.policy_objective /= batches;
      diag.value_loss /= batches;
      diag.approx_kl /= batches;
      diag.clip_fraction /= batches;
    }
    diag.mean_log_std = policy_.log_std.mean();
    return diag;
  }

  /// Text checkpoint. Field order:
  ///   covert_rsma_checkpoint <version>
  ///   hyper <discount> <gae_lambda> <clip> <learning_rate> <epochs> <minibatch>
  ///         <updates> <entropy_coef> <log_std_init> <hidden> <init_radiated_power>
  ///   dims <obs_dim> <action_dim>
  ///   then vectors as `<name> <len> <values...>`: policy, log_std, value,
  ///   policy_m, policy_v, log_std_m, log_std_v, value_m, value_v,
  ///   then `adam_steps <policy> <log_std> <value>` and `rng <seed> <engine state>`.
  void save(std::ostream& os, const Rng& rng) const {
    os << "covert_rsma_checkpoint " << kCheckpointVersion << '\n';
    os << std::setprecision(17);
    os << "hyper " << hyper_.discount << ' ' << hyper_.gae_lambda << ' ' << hyper_.clip << ' '
       << hyper_.learning_rate << ' ' << hyper_.epochs << ' ' << hyper_.minibatch << ' '
       << hyper_.updates << ' ' << hyper_.entropy_coef << ' ' << hyper_.log_std_init << ' '
       << hyper_.hidden << ' ' << hyper_.init_radiated_power << '\n';
    os << "dims " << policy_.net.input_dim() << ' ' << policy_.net.output_dim() << '\n';
    write_vec(os, "policy", policy_.net.params());
    write_vec(os, "log_std", policy_.log_std);
    write_vec(os, "value", value_.params());
    write_vec(os, "policy_m", policy_opt_.first_moment());
    write_vec(os, "policy_v", policy_opt_.second_moment());
    write_vec(os, "log_std_m", log_std_opt_.first_moment());
    write_vec(os, "log_std_v", log_std_opt_.second_moment());
    write_vec(os, "value_m", value_opt_.first_moment());
    write_vec(os, "value_v", value_opt_.second_moment());
    os << "adam_steps " << policy_opt_.steps() << ' ' << log_std_opt_.steps() << ' '
       << value_opt_.steps() << '\n';
    os << "rng " << rng << '\n';
  }

  static PpoAgent load(std::istream& is, Rng& rng) {
    std::string tag;
    int version = 0;
    is >> tag >> version;
    if (tag != "covert_rsma_checkpoint" || version != kCheckpointVersion) {
      throw ConfigError("checkpoint: unrecognized header");
    }
    PpoHyper h;
    expect(is, "hyper");
    is >> h.discount >> h.gae_lambda >> h.clip >> h.learning_rate >> h.epochs >> h.minibatch >>
        h.updates >> h.entropy_coef >> h.log_std_init >> h.hidden >>
        h.init_radiated_power;
    std::size_t obs_dim = 0;
    std::size_t action_dim = 0;
    expect(is, "dims");
    is >> obs_dim >> action_dim;
    if (!is) throw ConfigError("checkpoint: malformed header fields");
    PpoAgent a;
    a.hyper_ = h;
    a.policy_ = GaussianPolicy(obs_dim, action_dim, static_cast<std::size_t>(h.hidden),
                               h.log_std_init);
    a.value_ = Mlp(obs_dim, static_cast<std::size_t>(h.hidden), 1);
    a.reset_optimizers();
    read_vec(is, "policy", a.policy_.net.params());
    read_vec(is, "log_std", a.policy_.log_std);
    read_vec(is, "value", a.value_.params());
    read_vec(is, "policy_m", a.policy_opt_.first_moment());
    read_vec(is, "policy_v", a.policy_opt_.second_moment());
    read_vec(is, "log_std_m", a.log_std_opt_.first_moment());
    read_vec(is, "log_std_v", a.log_std_opt_.second_moment());
    read_vec(is, "value_m", a.value_opt_.first_moment());
    read_vec(is, "value_v", a.value_opt_.second_moment());
    expect(is, "adam_steps");
    is >> a.policy_opt_.steps() >> a.log_std_opt_.steps() >> a.value_opt_.steps();
    expect(is, "rng");
    is >> rng;
    if (!is) throw ConfigError("checkpoint: truncated file");
    return a;
  }

  static constexpr int kCheckpointVersion = 1;

 private:
  static void write_vec(std::ostream& os, const char* name, const VectorXd& v) {
    os << name << ' ' << v.size();
    for (Eigen::Index i = 0; i < v.size(); ++i) os << ' ' << v[i];
    os << '\n';
  }
  static void expect(std::istream& is, const char* name) {
    std::string tag;
    is >> tag;
    if (tag != name) {
      throw ConfigError(std::string("checkpoint: expected field '") + name + "', got '" + tag + "'");
    }
  }
  static void read_vec(std::istream& is, const char* name, VectorXd& v) {
    expect(is, name);
    Eigen::Index len = 0;
    is >> len;
    if (!is || len != v.size()) {
      throw ConfigError(std::string("checkpoint: field '") + name + "' has wrong length");
    }
    for (Eigen::Index i = 0; i < len; ++i) is >> v[i];
  }

  PpoHyper hyper_;
  GaussianPolicy policy_;
  Mlp value_;
  Adam policy_opt_;
  Adam log_std_opt_;
  Adam value_opt_;
};

/// Runs one episode with the current policy; returns transitions and metrics.
inline Trajectory collect_episode(Environment& env, const PpoAgent& agent, Rng& rng,
                                  EpisodeMetrics& metrics) {
  Trajectory traj;
  const int horizon = env.config().episode_length;
  traj.reserve(static_cast<std::size_t>(horizon));
  env.reset();
  for (int t = 0; t < horizon; ++t) {
    Transition tr;
    tr.observation = env.observation().features;
    const PolicyOutput out = policy_forward(agent.policy(), tr.observation);
    SampledAction s = sample_action(out.mean, out.log_std, rng);
    tr.value = agent.value_of(tr.observation);
    const StepResult r = env.step(std::span<const double>(s.action.data(),
                                                          static_cast<std::size_t>(s.action.size())));
    tr.action = std::move(s.action);
    tr.log_prob = s.log_prob;
    tr.reward = r.outcome.reward;
    tr.done = r.done;
    metrics.add(r.outcome);
    traj.push_back(std::move(tr));
  }
  return traj;
}

/// Deterministic roll-out using the policy mean.
inline EpisodeMetrics evaluate_policy(Environment& env, const GaussianPolicy& policy) {
  EpisodeMetrics m;
  env.reset();
  for (int t = 0; t < env.config().episode_length; ++t) {
    const PolicyOutput out = policy_forward(policy, env.observation().features);
    const StepResult r = env.step(std::span<const double>(out.mean.data(),
                                                          static_cast<std::size_t>(out.mean.size())));
    m.add(r.outcome);
  }
  return m;
}

struct TrainResult {
  PpoAgent agent;
  std::vector<EpisodeMetrics> episodes;
  std::vector<UpdateDiagnostics> diagnostics;
  Rng rng;
};

using EpisodeCallback =
    std::function<void(int episode, const EpisodeMetrics&, const UpdateDiagnostics&)>;

/// Output bias b shared by the stream power logits so that, with the idle
/// logit at 0, the decoded radiated power equals `target`:
/// n e^b / (n e^b + 1) P_t = target.
inline double stream_logit_bias(double target, double total_power, std::size_t streams) {
  if (!(target > 0.0 && target < total_power) || streams == 0) {
    throw ConfigError("ppo: init_radiated_power must lie in (0, P_t)");
  }
  return std::log(target / (static_cast<double>(streams) * (total_power - target)));
}

/// Sets the policy output bias of the power logits (common slot first).
inline void set_power_bias(GaussianPolicy& policy, const EnvConfig& cfg, double bias) {
  auto b = policy.net.bias(policy.net.layers() - 1);
  for (std::size_t i = 0; i <= cfg.users(); ++i) b[static_cast<Eigen::Index>(i)] = bias;
}

/// One episode of |B| = episode_length steps per update.
inline TrainResult train(const EnvConfig& cfg, const PpoHyper& hyper, std::uint64_t seed,
                         const EpisodeCallback& on_episode = {}) {
  Rng root(seed);
  Rng init_rng = root.derive(1);
  Environment env(cfg, root.derive(2));
  TrainResult result{PpoAgent(cfg.observation_dim(), cfg.action_dim(), hyper, init_rng),
                     {}, {}, root.derive(3)};
  result.episodes.reserve(static_cast<std::size_t>(hyper.updates));
  if (cfg.regime == Regime::kFinite && hyper.init_radiated_power > 0.0 &&
      hyper.init_radiated_power < cfg.power) {
    const std::size_t streams = cfg.access == Access::kRsma ? cfg.users() + 1 : cfg.users();
    set_power_bias(result.agent.policy(), cfg,
                   stream_logit_bias(hyper.init_radiated_power, cfg.power, streams));
  }
  for (int k = 0; k < hyper.updates; ++k) {
    EpisodeMetrics m;
    const Trajectory traj = collect_episode(env, result.agent, result.rng, m);
    const UpdateDiagnostics d = result.agent.update(traj, result.rng);
    result.episodes.push_back(m);
    result.diagnostics.push_back(d);
    if (on_episode) on_episode(k, m, d);
  }
  return result;
}

}  // namespace covert_rsma
