#pragma once

// Oracle checks shared by the `selftest` command and the acceptance suite.
// Each returns a named pass/fail verdict with a one-line measurement.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "covert_rsma/covert.hpp"
#include "covert_rsma/env.hpp"
#include "covert_rsma/numerics.hpp"
#include "covert_rsma/ppo.hpp"
#include "covert_rsma/ratesplit.hpp"

namespace covert_rsma {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

namespace detail {

inline std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), f, a, b, c);
  return buf;
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline double relative_error(const VectorXd& a, const VectorXd& b) {
  const double scale = std::max({a.norm(), b.norm(), 1e-12});
  return (a - b).norm() / scale;
}

}  // namespace detail

/// Closed-form divergence against quadrature over the 3 x 6 x 3 grid.
inline CheckResult check_kl_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (double g : {0.1, 0.4, 1.0}) {
    for (double p : {0.0, 0.1, 1.0, 10.0, 100.0, 1e4}) {
      for (double s : {0.5, 1.0, 2.0}) {
        worst = std::max(worst, std::abs(kl_closed_form(g, p, s) - kl_numeric(g, p, s)));
      }
    }
  }
  const double secs = detail::seconds_since(t0);
  return {"kl closed form vs quadrature", worst < 1e-6 && secs < 10.0,
          detail::fmt("max |diff| = %.3g, %.2f s", worst, secs)};
}

/// Detection bound at the budget threshold equals 1 - epsilon exactly.
inline CheckResult check_detection_identity() {
  bool ok = true;
  double worst = 0.0;
  for (double eps : {0.01, 0.05, 0.1, 0.2, 0.5}) {
    const double bound = detection_error_lower_bound(CovertBudget(eps).threshold());
    ok = ok && bound == 1.0 - eps;
    worst = std::max(worst, std::abs(bound - (1.0 - eps)));
  }
  return {"detection bound at threshold", ok, detail::fmt("max |diff| = %.3g", worst)};
}

/// Dispersion term vanishes at very long blocklengths.
inline CheckResult check_fbl_limit() {
  double worst = 0.0;
  for (double g : {0.1, 1.0, 10.0, 100.0}) {
    worst = std::max(worst, std::abs(fbl_rate(g, 1e7, 1e-3) - shannon_rate(g)));
  }
  return {"finite-blocklength rate approaches capacity", worst < 1e-2,
          detail::fmt("max |diff| = %.3g at l = 1e7", worst)};
}

struct DominanceResult {
  double best_rsma = 0.0;
  double best_sdma = 0.0;
  std::size_t rsma_points = 0;
  std::size_t sdma_points = 0;
  double seconds = 0.0;
};

namespace detail {

/// Logits decoding (idle slot negligible) to the given power fractions.
inline double fraction_logit(double f) { return f > 0.0 ? std::log(f) + 40.0 : -1e3; }
inline double share_logit(double s) { return s > 0.0 ? std::log(s) : -1e3; }

/// All points of the K=3 simplex with resolution 1/n.
inline std::vector<std::array<double, 3>> simplex3(int n) {
  std::vector<std::array<double, 3>> out;
  for (int a = 0; a <= n; ++a) {
    for (int b = 0; a + b <= n; ++b) {
      out.push_back({static_cast<double>(a) / n, static_cast<double>(b) / n,
                     static_cast<double>(n - a - b) / n});
    }
  }
  return out;
}

}  // namespace detail

/// Exhaustive search of decoded actions on the error-free default channels,
/// infinite-blocklength rates, three users. RSMA: common fraction in steps of
/// 1/10, private split and common shares on 1/10 simplices. SDMA: private
/// split on a 1/140 simplex.
inline DominanceResult grid_dominance(double power_db = 30.0) {
  const auto t0 = std::chrono::steady_clock::now();
  EnvConfig cfg;
  cfg.power = db_to_linear(power_db);
  cfg.regime = Regime::kInfinite;
  ChannelState ch;
  for (std::size_t i = 0; i < cfg.users(); ++i) {
    ch.estimated.push_back(realize_deterministic(cfg.channel.gains[i], cfg.channel.phases[i],
                                                 cfg.channel.antennas));
    ch.error.emplace_back(cfg.antennas());
  }
  ch.realized = ch.estimated;
  ch.warden = realize_deterministic(cfg.channel.warden_gain, cfg.channel.warden_phase,
                                    cfg.channel.antennas);
  const std::vector<double> lengths(cfg.users(), cfg.length_hi);

  DominanceResult r;
  std::vector<double> raw(cfg.action_dim(), 0.0);
  const auto coarse = detail::simplex3(10);
  cfg.access = Access::kRsma;
  for (int c = 0; c <= 10; ++c) {
    const double common = c / 10.0;
    for (const auto& priv : coarse) {
      raw[0] = detail::fraction_logit(common);
      for (int i = 0; i < 3; ++i) raw[1 + i] = detail::fraction_logit((1.0 - common) * priv[i]);
      for (const auto& share : coarse) {
        for (int i = 0; i < 3; ++i) raw[7 + i] = detail::share_logit(share[i]);
        r.best_rsma = std::max(r.best_rsma, evaluate_action(raw, ch, lengths, cfg).report.min_rate);
        ++r.rsma_points;
      }
    }
  }
  cfg.access = Access::kSdma;
  std::fill(raw.begin(), raw.end(), 0.0);
  for (const auto& priv : detail::simplex3(140)) {
    for (int i = 0; i < 3; ++i) raw[1 + i] = detail::fraction_logit(priv[i]);
    r.best_sdma = std::max(r.best_sdma, evaluate_action(raw, ch, lengths, cfg).report.min_rate);
    ++r.sdma_points;
  }
  r.seconds = detail::seconds_since(t0);
  return r;
}

inline CheckResult check_structural_dominance() {
  const DominanceResult r = grid_dominance();
  const bool ok = r.best_rsma >= r.best_sdma && r.rsma_points >= 10000 &&
                  r.sdma_points >= 10000 && r.seconds < 120.0;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "RSMA %.6g (%zu pts) vs SDMA %.6g (%zu pts), %.2f s",
                r.best_rsma, r.rsma_points, r.best_sdma, r.sdma_points, r.seconds);
  return {"RSMA min-rate dominates SDMA on grid", ok, buf};
}

namespace detail {

inline Batch random_batch(const GaussianPolicy& policy, Rng& rng, Eigen::Index n) {
  const auto d_obs = static_cast<Eigen::Index>(policy.net.input_dim());
  const auto d_act = policy.log_std.size();
  Batch b;
  b.observations.resize(d_obs, n);
  b.actions.resize(d_act, n);
  b.old_log_probs.resize(n);
  b.advantages.resize(n);
  b.returns.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < d_obs; ++i) b.observations(i, j) = rng.uniform(0.0, 3.0);
    const VectorXd mean = policy.net.forward(
        std::span<const double>(b.observations.col(j).data(), static_cast<std::size_t>(d_obs)));
    const SampledAction s = sample_action(mean, policy.log_std, rng);
    b.actions.col(j) = s.action;
    // Off-policy by a small random log-ratio so both clip branches appear.
    b.old_log_probs[j] = s.log_prob + rng.uniform(-0.3, 0.3);
    b.advantages[j] = rng.normal();
    b.returns[j] = rng.normal();
  }
  return b;
}

}  // namespace detail

/// Central differences (h = 1e-5) against the analytic surrogate and value
/// gradients on `instances` random networks and batches.
inline CheckResult check_gradients(int instances = 10, std::uint64_t seed = 7) {
  const auto t0 = std::chrono::steady_clock::now();
  constexpr double h = 1e-5;
  Rng rng(seed);
  double worst = 0.0;
  for (int inst = 0; inst < instances; ++inst) {
    GaussianPolicy policy(6, 10, 16, std::log(0.5));
    policy.net.initialize(rng, 1.0, 1.0);
    for (Eigen::Index i = 0; i < policy.log_std.size(); ++i) {
      policy.log_std[i] = rng.uniform(-1.0, 0.0);
    }
    Mlp value(6, 16, 1);
    value.initialize(rng, 1.0, 1.0);
    const Batch b = detail::random_batch(policy, rng, 16);
    const double clip = 0.2;

    const SurrogateEval an = surrogate_and_grad(policy, b, clip);
    VectorXd fd_net(policy.net.params().size());
    for (Eigen::Index i = 0; i < fd_net.size(); ++i) {
      GaussianPolicy p = policy;
      p.net.params()[i] += h;
      const double up = surrogate_and_grad(p, b, clip).objective;
      p.net.params()[i] -= 2.0 * h;
      const double dn = surrogate_and_grad(p, b, clip).objective;
      fd_net[i] = (up - dn) / (2.0 * h);
    }
    VectorXd fd_ls(policy.log_std.size());
    for (Eigen::Index i = 0; i < fd_ls.size(); ++i) {
      GaussianPolicy p = policy;
      p.log_std[i] += h;
      const double up = surrogate_and_grad(p, b, clip).objective;
      p.log_std[i] -= 2.0 * h;
      const double dn = surrogate_and_grad(p, b, clip).objective;
      fd_ls[i] = (up - dn) / (2.0 * h);
    }
    worst = std::max(worst, detail::relative_error(an.grad_net, fd_net));
    worst = std::max(worst, detail::relative_error(an.grad_log_std, fd_ls));

    const ValueEval va = value_loss_and_grad(value, b.observations, b.returns);
    VectorXd fd_v(value.params().size());
    for (Eigen::Index i = 0; i < fd_v.size(); ++i) {
      Mlp v = value;
      v.params()[i] += h;
      const double up = value_loss_and_grad(v, b.observations, b.returns).loss;
      v.params()[i] -= 2.0 * h;
      const double dn = value_loss_and_grad(v, b.observations, b.returns).loss;
      fd_v[i] = (up - dn) / (2.0 * h);
    }
    worst = std::max(worst, detail::relative_error(va.grad, fd_v));
  }
  const double secs = detail::seconds_since(t0);
  return {"surrogate and value gradients vs finite differences", worst < 1e-4 && secs < 30.0,
          detail::fmt("max relative error = %.3g over %g instances, %.2f s", worst, instances,
                      secs)};
}

/// d L / d ratio is 0 on the clipped branch and A on the unclipped branch.
inline CheckResult check_clipping_contract(int samples = 10000, std::uint64_t seed = 11) {
  Rng rng(seed);
  const double clip = 0.2;
  bool ok = true;
  int clipped = 0;
  for (int i = 0; i < samples; ++i) {
    const double ratio = rng.uniform(0.0, 2.0);
    const double adv = rng.uniform() < 0.5 ? -1.0 : 1.0;
    const double g = ppo_loss_dratio(ratio, adv, clip);
    if (clip_active(ratio, adv, clip)) {
      ++clipped;
      ok = ok && g == 0.0 && ppo_loss(ratio, adv, clip) == clip_term(ratio, adv, clip);
    } else {
      ok = ok && g == adv && ppo_loss(ratio, adv, clip) == ratio * adv;
    }
  }
  return {"clipping derivative contract", ok && clipped > 0 && clipped < samples,
          detail::fmt("%g samples, %g on the clipped branch", samples, clipped)};
}

/// Largest covert power for the default warden, cross-checked by quadrature.
inline CheckResult check_covert_power() {
  const CovertBudget budget(0.1);
  const double p = max_covert_power(budget, 0.4, 1.0);
  const double kl = kl_numeric(0.4, p, 1.0);
  const bool ok = p >= 0.80 && p <= 0.92 && std::abs(kl - budget.threshold()) < 1e-8;
  return {"maximum covert power", ok,
          detail::fmt("P* = %.9g W, quadrature kl = %.12g", p, kl)};
}

/// Extra oracles: inverse Q round trip and its reference point.
inline CheckResult check_q_inverse() {
  double worst = 0.0;
  for (double p : {1e-9, 1e-6, 1e-3, 0.1, 0.5, 0.9}) {
    worst = std::max(worst, std::abs(q_function(q_inverse(p)) - p) / p);
  }
  const double ref = q_inverse(1e-3);
  return {"inverse Q function", worst < 1e-10 && std::abs(ref - 3.090232306) < 1e-8,
          detail::fmt("max relative round-trip error = %.3g, Qinv(1e-3) = %.10g", worst, ref)};
}

/// Fast oracle checks (everything except training runs).
inline std::vector<CheckResult> run_oracle_checks() {
  return {check_q_inverse(),           check_kl_oracle(),        check_detection_identity(),
          check_fbl_limit(),           check_structural_dominance(), check_gradients(),
          check_clipping_contract(),   check_covert_power()};
}

}  // namespace covert_rsma
