#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "covert_rsma/env.hpp"

using namespace covert_rsma;

namespace {

ChannelState error_free(const EnvConfig& cfg) {
  ChannelState s;
  for (std::size_t k = 0; k < cfg.users(); ++k) {
    s.estimated.push_back(realize_deterministic(cfg.channel.gains[k], cfg.channel.phases[k],
                                                cfg.channel.antennas));
    s.error.emplace_back(cfg.antennas());
  }
  s.realized = s.estimated;
  s.warden = realize_deterministic(cfg.channel.warden_gain, cfg.channel.warden_phase,
                                   cfg.channel.antennas);
  return s;
}

RateReport report_with_totals(std::vector<double> totals) {
  RateReport r;
  r.totals = std::move(totals);
  return r;
}

}  // namespace

TEST(EnvConfigDefaults, Dimensions) {
  const EnvConfig cfg;
  EXPECT_EQ(cfg.users(), 3u);
  EXPECT_EQ(cfg.observation_dim(), 6u);
  EXPECT_EQ(cfg.action_dim(), 10u);
  EXPECT_DOUBLE_EQ(cfg.power, 100.0);
  EXPECT_NO_THROW(cfg.validate());
}

TEST(Decode, AllZeroLogits) {
  const EnvConfig cfg;
  const std::vector<double> raw(10, 0.0);
  const std::vector<double> lengths(3, 500.0);
  const DecodedAction d = decode_action(raw, error_free(cfg), lengths, cfg);
  for (double p : d.action.powers) EXPECT_NEAR(p, 100.0 / 5, 1e-12);
  for (double s : d.action.splits) EXPECT_DOUBLE_EQ(s, 0.5);
  for (double s : d.action.shares) EXPECT_NEAR(s, 1.0 / 3, 1e-15);
  EXPECT_NEAR(d.beamformer.total_power(), 80.0, 1e-9);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_DOUBLE_EQ(d.lengths.common[k] + d.lengths.priv[k], 500.0);
  }
}

TEST(Decode, IdleDominatesSoNothingRadiates) {
  EnvConfig cfg;
  std::vector<double> raw(10, 0.0);
  for (int i = 0; i < 4; ++i) raw[i] = -800.0;
  const std::vector<double> lengths(3, 500.0);
  const ChannelState ch = error_free(cfg);
  const DecodedAction d = decode_action(raw, ch, lengths, cfg);
  EXPECT_LT(d.beamformer.total_power(), 1e-300);
  for (double eps : {1e-3, 0.1, 0.9}) {
    EXPECT_TRUE(is_covert(d.beamformer, cfg.channel, CovertBudget(eps)).covert);
  }
}

TEST(Decode, PrecodersMatchEstimatedChannels) {
  const EnvConfig cfg;
  Rng rng(4);
  ChannelState ch = draw_channel_state(cfg.channel, cfg.power, rng);
  std::vector<double> raw(10);
  for (double& x : raw) x = rng.uniform(-2, 2);
  const DecodedAction d = decode_action(raw, ch, std::vector<double>(3, 300.0), cfg);
  for (std::size_t k = 0; k < 3; ++k) {
    const double pk = d.action.powers[k + 1];
    const Complex c = inner_product(ch.estimated[k], d.beamformer.privates[k]);
    // Aligned: |h^H p| = |h| |p|.
    EXPECT_NEAR(std::abs(c), ch.estimated[k].norm() * std::sqrt(pk), 1e-9);
  }
}

TEST(Decode, FeasibleForArbitraryLogits) {
  const EnvConfig cfg;
  Rng rng(9);
  const ChannelState ch = error_free(cfg);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<double> raw(10);
    for (double& x : raw) x = rng.uniform(-50, 50);
    std::vector<double> lengths(3);
    for (double& l : lengths) l = rng.uniform(0, 1000);
    const DecodedAction d = decode_action(raw, ch, lengths, cfg);
    EXPECT_LE(d.beamformer.total_power(), cfg.power * (1 + 1e-12));
    double share_sum = 0.0;
    for (std::size_t k = 0; k < 3; ++k) {
      share_sum += d.action.shares[k];
      EXPECT_GE(d.lengths.common[k], 0.0);
      EXPECT_GE(d.lengths.priv[k], 0.0);
      EXPECT_NEAR(d.lengths.common[k] + d.lengths.priv[k], lengths[k], 1e-9);
      if (lengths[k] >= 2 * kMinBlocklength) {
        EXPECT_GE(d.lengths.common[k], kMinBlocklength);
        EXPECT_GE(d.lengths.priv[k], kMinBlocklength);
      }
    }
    EXPECT_NEAR(share_sum, 1.0, 1e-12);
  }
}

TEST(Decode, SdmaMasksCommonStream) {
  EnvConfig cfg;
  cfg.access = Access::kSdma;
  std::vector<double> raw(10, 0.0);
  raw[0] = 30.0;
  const DecodedAction d = decode_action(raw, error_free(cfg), std::vector<double>(3, 400.0), cfg);
  EXPECT_EQ(d.action.powers[0], 0.0);
  EXPECT_EQ(d.beamformer.common.squared_norm(), 0.0);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_NEAR(d.action.powers[k + 1], 25.0, 1e-12);
    EXPECT_EQ(d.lengths.common[k], 0.0);
    EXPECT_EQ(d.lengths.priv[k], 400.0);
  }
}

TEST(Decode, WrongLengthThrows) {
  const EnvConfig cfg;
  const std::vector<double> raw(9, 0.0);
  EXPECT_THROW(decode_action(raw, error_free(cfg), std::vector<double>(3, 1.0), cfg),
               DimensionError);
}

TEST(Penalty, NoViolations) {
  const EnvConfig cfg;
  EXPECT_EQ(compute_penalty(report_with_totals({1, 1, 1}), 0.0, cfg), 0.0);
}

TEST(Penalty, OnlyCovertViolated) {
  const EnvConfig cfg;
  EXPECT_DOUBLE_EQ(compute_penalty(report_with_totals({1, 1, 1}), 0.5, cfg), 0.25);
}

TEST(Penalty, EverythingViolated) {
  const EnvConfig cfg;
  EXPECT_DOUBLE_EQ(compute_penalty(report_with_totals({0, 0, 0}), 0.5, cfg), 1.0);
}

TEST(Penalty, MeetingQosExactlyIsNotPenalized) {
  const EnvConfig cfg;
  EXPECT_EQ(compute_penalty(report_with_totals({1e-4, 1e-4, 1e-4}), 0.02, cfg), 0.0);
}

TEST(Penalty, CovertTermSkippedWhenInactive) {
  const EnvConfig cfg;
  EXPECT_EQ(compute_penalty(report_with_totals({1, 1, 1}), 0.5, cfg, false), 0.0);
}

TEST(Penalty, AllWeightsZeroThrows) {
  EnvConfig cfg;
  cfg.covert_weight = 0.0;
  cfg.qos_weights = {0.0, 0.0, 0.0};
  EXPECT_THROW(compute_penalty(report_with_totals({1, 1, 1}), 0.0, cfg), ConfigError);
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Observation, ZeroChannel) {
  ChannelState s;
  s.realized.assign(3, ComplexVector(3));
  const std::vector<double> lengths{100, 200, 300};
  const Observation o = make_observation(s, lengths, 1000.0);
  for (int k = 0; k < 3; ++k) EXPECT_EQ(o.features[k], 0.0);
  EXPECT_DOUBLE_EQ(o.features[4], 0.2);
}

TEST(Observation, FullLengthIsOne) {
  const EnvConfig cfg;
  const Observation o =
      make_observation(error_free(cfg), std::vector<double>(3, 1000.0), 1000.0);
  for (int k = 3; k < 6; ++k) EXPECT_EQ(o.features[k], 1.0);
}

TEST(Observation, ErrorFreeNorms) {
  const EnvConfig cfg;
  const Observation o = make_observation(error_free(cfg), std::vector<double>(3, 1.0), 1000.0);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_NEAR(o.features[k], cfg.channel.gains[k] * std::sqrt(3.0), 1e-14);
  }
}

TEST(Step, ZeroPowerFiniteIsCovertButFailsQos) {
  const EnvConfig cfg;
  Environment env(cfg, Rng(1));
  std::vector<double> raw(10, 0.0);
  for (int i = 0; i < 4; ++i) raw[i] = -800.0;
  const StepOutcome o = env.step(raw).outcome;
  EXPECT_FALSE(o.covert_violated);
  EXPECT_GT(o.penalty, 0.0);
  EXPECT_EQ(o.reward, 0.0);
}

TEST(Step, GenerousInfiniteActionEarnsMinRate) {
  EnvConfig cfg;
  cfg.power = db_to_linear(30.0);
  cfg.regime = Regime::kInfinite;
  Environment env(cfg, Rng(1));
  const std::vector<double> raw(10, 0.0);
  const StepOutcome o = env.step(raw).outcome;
  EXPECT_EQ(o.penalty, 0.0);
  EXPECT_GT(o.reward, 0.0);
  EXPECT_EQ(o.reward, o.report.min_rate);
  // Divergence is still reported for logging.
  EXPECT_GT(o.kl, 1.0);
  EXPECT_FALSE(o.covert_violated);
}

TEST(Step, FiniteFullPowerViolatesCovertness) {
  const EnvConfig cfg;
  Environment env(cfg, Rng(1));
  const StepOutcome o = env.step(std::vector<double>(10, 0.0)).outcome;
  EXPECT_TRUE(o.covert_violated);
  EXPECT_EQ(o.reward, 0.0);
}

TEST(Step, RewardPositiveIffPenaltyZero) {
  for (Regime regime : {Regime::kFinite, Regime::kInfinite}) {
    EnvConfig cfg;
    cfg.regime = regime;
    Environment env(cfg, Rng(6));
    Rng rng(7);
    for (int t = 0; t < 3000; ++t) {
      std::vector<double> raw(10);
      for (double& x : raw) x = rng.uniform(-8, 3);
      const StepOutcome o = env.step(raw).outcome;
      ASSERT_GE(o.penalty, 0.0);
      ASSERT_LE(o.penalty, 1.0);
      if (o.penalty == 0.0) {
        ASSERT_EQ(o.reward, o.report.min_rate);
      } else {
        ASSERT_EQ(o.reward, 0.0);
      }
      ASSERT_EQ(o.reward > 0.0, o.penalty == 0.0 && o.report.min_rate > 0.0);
    }
  }
}

TEST(Step, EvaluateDoesNotAdvance) {
  const EnvConfig cfg;
  Environment env(cfg, Rng(3));
  const std::vector<double> raw(10, -1.0);
  const auto before = env.observation().features;
  const StepOutcome a = env.evaluate(raw);
  const StepOutcome b = env.evaluate(raw);
  EXPECT_EQ(a.reward, b.reward);
  EXPECT_EQ(env.observation().features, before);
  EXPECT_EQ(env.time_step(), 0);
  const StepResult r = env.step(raw);
  EXPECT_EQ(r.outcome.reward, a.reward);
  EXPECT_NE(r.next.features, before);
}

TEST(Step, EpisodeEndsAfterConfiguredLength) {
  EnvConfig cfg;
  cfg.episode_length = 5;
  Environment env(cfg, Rng(2));
  const std::vector<double> raw(10, 0.0);
  for (int t = 0; t < 4; ++t) EXPECT_FALSE(env.step(raw).done);
  EXPECT_TRUE(env.step(raw).done);
}

TEST(Step, SameSeedIdenticalTrajectory) {
  const EnvConfig cfg;
  Environment a(cfg, Rng(11));
  Environment b(cfg, Rng(11));
  Rng ra(5);
  Rng rb(5);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> x(10);
    std::vector<double> y(10);
    for (double& v : x) v = ra.uniform(-6, 2);
    for (double& v : y) v = rb.uniform(-6, 2);
    const StepOutcome oa = a.step(x).outcome;
    const StepOutcome ob = b.step(y).outcome;
    ASSERT_EQ(oa.reward, ob.reward);
    ASSERT_EQ(oa.kl, ob.kl);
    ASSERT_EQ(oa.report.totals, ob.report.totals);
  }
}

TEST(Step, PerEpisodeRedrawKeepsErrors) {
  EnvConfig cfg;
  cfg.redraw = ErrorRedraw::kPerEpisode;
  Environment env(cfg, Rng(2));
  const auto err = env.channel().error;
  env.step(std::vector<double>(10, 0.0));
  EXPECT_EQ(env.channel().error[0], err[0]);
  cfg.redraw = ErrorRedraw::kPerStep;
  Environment env2(cfg, Rng(2));
  const auto err2 = env2.channel().error;
  env2.step(std::vector<double>(10, 0.0));
  EXPECT_NE(env2.channel().error[0], err2[0]);
}

TEST(Metrics, AveragesAndSumRateOnlyWhenPenaltyFree) {
  EpisodeMetrics m;
  StepOutcome ok;
  ok.reward = 2.0;
  ok.report.sum_rate = 6.0;
  ok.qos_violated = {false, false, false};
  StepOutcome bad;
  bad.penalty = 0.25;
  bad.covert_violated = true;
  bad.report.sum_rate = 9.0;
  bad.qos_violated = {false, false, false};
  m.add(ok);
  m.add(bad);
  EXPECT_DOUBLE_EQ(m.min_rate, 1.0);
  EXPECT_DOUBLE_EQ(m.sum_rate, 3.0);
  EXPECT_DOUBLE_EQ(m.covert_violation_rate, 0.5);
  EXPECT_EQ(m.steps, 2);
}
