#include <cmath>
#include <limits>
#include <sstream>

#include <gtest/gtest.h>

#include "covert_rsma/greedy.hpp"
#include "covert_rsma/ppo.hpp"
#include "covert_rsma/selftest.hpp"

using namespace covert_rsma;

namespace {

Transition step_with(double reward, double value, bool done = false) {
  Transition t;
  t.reward = reward;
  t.value = value;
  t.done = done;
  return t;
}

PpoHyper quick_hyper(int updates) {
  PpoHyper h;
  h.updates = updates;
  return h;
}

}  // namespace

TEST(Mlp, ZeroWeightsGiveZeroOutput) {
  GaussianPolicy p(6, 10, 64, std::log(0.5));
  const std::vector<double> obs{1, 2, 3, 4, 5, 6};
  const PolicyOutput out = policy_forward(p, obs);
  EXPECT_EQ(out.mean.size(), 10);
  EXPECT_TRUE(out.mean.isZero(0.0));
  EXPECT_NEAR(out.log_std[0], std::log(0.5), 1e-15);
}

TEST(Mlp, PureAndFinite) {
  Rng rng(3);
  GaussianPolicy p(6, 10, 64, 0.0);
  p.net.initialize(rng, 1.0, 1.0);
  const std::vector<double> obs{10, -2, 3, 40, 5, -6};
  const VectorXd a = policy_forward(p, obs).mean;
  const VectorXd b = policy_forward(p, obs).mean;
  EXPECT_EQ(a, b);
  EXPECT_TRUE(a.allFinite());
  EXPECT_THROW(policy_forward(p, std::vector<double>(5, 0.0)), DimensionError);
}

TEST(Mlp, OrthogonalInitialization) {
  Rng rng(5);
  Mlp net(6, 64, 10);
  net.initialize(rng, 1.0, 0.01);
  const MatrixXd w0 = net.weight(0);  // 64 x 6, orthonormal columns
  EXPECT_LT((w0.transpose() * w0 - MatrixXd::Identity(6, 6)).norm(), 1e-12);
  const MatrixXd w1 = net.weight(1);
  EXPECT_LT((w1.transpose() * w1 - MatrixXd::Identity(64, 64)).norm(), 1e-12);
  const MatrixXd w2 = net.weight(2);  // 10 x 64, orthonormal rows scaled by 0.01
  EXPECT_LT((w2 * w2.transpose() - 1e-4 * MatrixXd::Identity(10, 10)).norm(), 1e-14);
  EXPECT_TRUE(net.bias(2).isZero(0.0));
}

TEST(Sampling, VanishingStdReturnsMean) {
  VectorXd mean(3);
  mean << 0.5, -1.0, 2.0;
  const VectorXd log_std = VectorXd::Constant(3, -800.0);
  Rng rng(1);
  EXPECT_EQ(sample_action(mean, log_std, rng).action, mean);
}

TEST(Sampling, LogProbAtMean) {
  VectorXd mean = VectorXd::Zero(10);
  VectorXd log_std = VectorXd::LinSpaced(10, -1.0, 0.5);
  const double want = -log_std.sum() - 5.0 * std::log(2.0 * std::numbers::pi);
  EXPECT_NEAR(gaussian_log_prob(mean, log_std, mean), want, 1e-12);
}

TEST(Sampling, MonteCarloMean) {
  VectorXd mean(2);
  mean << 1.5, -0.3;
  const VectorXd log_std = VectorXd::Constant(2, std::log(0.5));
  Rng rng(12);
  const int n = 100000;
  VectorXd acc = VectorXd::Zero(2);
  for (int i = 0; i < n; ++i) acc += sample_action(mean, log_std, rng).action;
  acc /= n;
  for (int i = 0; i < 2; ++i) EXPECT_LT(std::abs(acc[i] - mean[i]), 3 * 0.5 / std::sqrt(n));
}

TEST(Sampling, LogProbMatchesDensity) {
  VectorXd mean(2);
  mean << 0.2, 0.4;
  VectorXd log_std(2);
  log_std << -0.5, 0.1;
  Rng rng(2);
  const SampledAction s = sample_action(mean, log_std, rng);
  double lp = 0.0;
  for (int i = 0; i < 2; ++i) {
    const double sd = std::exp(log_std[i]);
    const double z = (s.action[i] - mean[i]) / sd;
    lp += std::log(std::exp(-0.5 * z * z) / (sd * std::sqrt(2 * std::numbers::pi)));
  }
  EXPECT_NEAR(s.log_prob, lp, 1e-12);
}

TEST(Advantages, SingleStep) {
  const Advantages a = compute_advantages({step_with(1.0, 0.0, true)}, PpoHyper{});
  EXPECT_DOUBLE_EQ(a.raw[0], 1.0);
  EXPECT_DOUBLE_EQ(a.returns[0], 1.0);
}

TEST(Advantages, ConstantRewardGeometricReturn) {
  PpoHyper h;
  h.gae_lambda = 1.0;
  Trajectory traj;
  const int t = 200;
  for (int i = 0; i < t; ++i) traj.push_back(step_with(0.7, 0.0, i + 1 == t));
  const Advantages a = compute_advantages(traj, h);
  EXPECT_NEAR(a.returns[0], 0.7 * (1 - std::pow(0.99, t)) / (1 - 0.99), 1e-10);
}

TEST(Advantages, LambdaOneIsReturnMinusValue) {
  PpoHyper h;
  h.gae_lambda = 1.0;
  Rng rng(4);
  Trajectory traj;
  for (int i = 0; i < 50; ++i) traj.push_back(step_with(rng.normal(), rng.normal(), i == 49));
  const Advantages a = compute_advantages(traj, h);
  for (std::size_t i = 0; i < traj.size(); ++i) {
    EXPECT_NEAR(a.raw[i], a.returns[i] - traj[i].value, 1e-12);
  }
}

TEST(Advantages, NormalizedPerBatch) {
  Rng rng(8);
  Trajectory traj;
  for (int i = 0; i < 100; ++i) traj.push_back(step_with(rng.uniform(), rng.normal(), i == 99));
  const Advantages a = compute_advantages(traj, PpoHyper{});
  double mean = 0.0;
  double sq = 0.0;
  for (double x : a.normalized) mean += x;
  mean /= 100;
  for (double x : a.normalized) sq += (x - mean) * (x - mean);
  EXPECT_NEAR(mean, 0.0, 1e-12);
  EXPECT_NEAR(sq / 100, 1.0, 1e-6);
}

TEST(Advantages, EmptyThrows) { EXPECT_THROW(compute_advantages({}, PpoHyper{}), DomainError); }

TEST(Clip, Term) {
  EXPECT_DOUBLE_EQ(clip_term(1.7, 1.0, 0.2), 1.2);
  EXPECT_DOUBLE_EQ(clip_term(0.3, -1.0, 0.2), -0.8);
  EXPECT_EQ(clip_term(1.0, 0.0, 0.2), 0.0);
}

TEST(Clip, Loss) {
  EXPECT_DOUBLE_EQ(ppo_loss(1.5, 1.0, 0.2), 1.2);
  EXPECT_DOUBLE_EQ(ppo_loss(0.5, -1.0, 0.2), -0.8);
  for (double a : {-2.0, -0.3, 0.0, 0.4, 3.0}) {
    EXPECT_EQ(ppo_loss(1.0, a, 0.2), a);
    EXPECT_EQ(ppo_loss_dratio(1.0, a, 0.2), a);
  }
}

TEST(Clip, OneSided) {
  EXPECT_EQ(ppo_loss_dratio(1.5, 1.0, 0.2), 0.0);
  EXPECT_EQ(ppo_loss_dratio(0.5, -1.0, 0.2), 0.0);
  EXPECT_EQ(ppo_loss_dratio(0.5, 1.0, 0.2), 1.0);
  EXPECT_EQ(ppo_loss_dratio(1.5, -1.0, 0.2), -1.0);
}

TEST(Clip, ContractOnSampledRatios) { EXPECT_TRUE(check_clipping_contract().passed); }

TEST(Gradients, MatchFiniteDifferences) {
  const CheckResult r = check_gradients();
  EXPECT_TRUE(r.passed) << r.detail;
}

TEST(Gradients, SmallToyProblem) {
  const CheckResult r = check_gradients(3, 99);
  EXPECT_TRUE(r.passed) << r.detail;
}

TEST(Update, ZeroAdvantagesLeavePolicyUnchanged) {
  Rng init(1);
  PpoAgent agent(6, 10, PpoHyper{}, init);
  agent.value().params().setZero();
  const VectorXd before = agent.policy().net.params();
  const VectorXd ls_before = agent.policy().log_std;
  Trajectory traj;
  Rng rng(2);
  for (int i = 0; i < 200; ++i) {
    Transition t = step_with(0.0, 0.0, i == 199);
    t.observation.assign(6, 0.5);
    const SampledAction s = sample_action(policy_forward(agent.policy(), t.observation).mean,
                                          agent.policy().log_std, rng);
    t.action = s.action;
    t.log_prob = s.log_prob;
    traj.push_back(t);
  }
  agent.update(traj, rng);
  EXPECT_EQ(agent.policy().net.params(), before);
  EXPECT_EQ(agent.policy().log_std, ls_before);
}

TEST(Update, ValueRegressionLossDecreases) {
  Rng rng(3);
  Mlp value(6, 64, 1);
  value.initialize(rng, 1.0, 1.0);
  Adam opt(value.params().size());
  MatrixXd obs(6, 64);
  for (Eigen::Index i = 0; i < obs.size(); ++i) obs.data()[i] = rng.uniform(0, 2);
  const VectorXd target = VectorXd::Constant(64, 2.5);
  const double initial = value_loss_and_grad(value, obs, target).loss;
  double prev = std::numeric_limits<double>::infinity();
  for (int epoch = 0; epoch < 100; ++epoch) {
    const ValueEval v = value_loss_and_grad(value, obs, target);
    EXPECT_LT(v.loss, prev);
    prev = v.loss;
    opt.descend(value.params(), v.grad, PpoHyper{}.learning_rate);
  }
  EXPECT_LT(prev, 0.5 * initial);
}

TEST(Update, NonFiniteGradientAborts) {
  Rng init(1);
  PpoAgent agent(6, 10, PpoHyper{}, init);
  agent.policy().net.params()[0] = std::numeric_limits<double>::quiet_NaN();
  Trajectory traj;
  for (int i = 0; i < 4; ++i) {
    Transition t = step_with(i, 0.0, i == 3);
    t.observation.assign(6, 1.0);
    t.action = VectorXd::Zero(10);
    traj.push_back(t);
  }
  Rng rng(2);
  EXPECT_THROW(agent.update(traj, rng), NumericalError);
}

TEST(Collect, RatioAgainstSelfIsOne) {
  EnvConfig cfg;
  Rng init(4);
  PpoAgent agent(cfg.observation_dim(), cfg.action_dim(), PpoHyper{}, init);
  Environment env(cfg, Rng(5));
  Rng rng(6);
  EpisodeMetrics m;
  const Trajectory traj = collect_episode(env, agent, rng, m);
  ASSERT_EQ(traj.size(), 200u);
  EXPECT_TRUE(traj.back().done);
  for (const auto& t : traj) {
    const double lp =
        gaussian_log_prob(policy_forward(agent.policy(), t.observation).mean,
                          agent.policy().log_std, t.action);
    EXPECT_NEAR(std::exp(lp - t.log_prob), 1.0, 1e-12);
  }
}

TEST(Train, ZeroStepSizeStillLogsFiniteMetrics) {
  EnvConfig cfg;
  PpoHyper h = quick_hyper(3);
  h.learning_rate = 0.0;
  const TrainResult r = train(cfg, h, 1);
  ASSERT_EQ(r.episodes.size(), 3u);
  for (const auto& m : r.episodes) {
    EXPECT_TRUE(std::isfinite(m.min_rate));
    EXPECT_TRUE(std::isfinite(m.mean_kl));
    EXPECT_EQ(m.steps, 200);
  }
}

TEST(Train, SameSeedBitIdentical) {
  EnvConfig cfg;
  const TrainResult a = train(cfg, quick_hyper(4), 9);
  const TrainResult b = train(cfg, quick_hyper(4), 9);
  for (std::size_t i = 0; i < a.episodes.size(); ++i) {
    EXPECT_EQ(a.episodes[i].min_rate, b.episodes[i].min_rate);
    EXPECT_EQ(a.episodes[i].mean_kl, b.episodes[i].mean_kl);
  }
  EXPECT_EQ(a.agent.policy().net.params(), b.agent.policy().net.params());
}

TEST(Train, InitialRadiatedPowerInFiniteRegime) {
  EnvConfig cfg;
  PpoHyper h = quick_hyper(0);
  h.learning_rate = 0.0;
  const TrainResult r = train(cfg, h, 3);
  VectorXd mean = r.agent.policy().net.bias(2);
  Environment env(cfg, Rng(1));
  const DecodedAction d = decode_action(
      std::span<const double>(mean.data(), static_cast<std::size_t>(mean.size())),
      env.channel(), env.lengths(), cfg);
  EXPECT_NEAR(d.beamformer.total_power(), h.init_radiated_power, 1e-9);
  EXPECT_THROW(stream_logit_bias(200.0, 100.0, 4), ConfigError);
}

TEST(Checkpoint, RoundTripAndResume) {
  EnvConfig cfg;
  TrainResult r = train(cfg, quick_hyper(2), 5);
  std::stringstream ss;
  r.agent.save(ss, r.rng);
  Rng loaded_rng(0);
  PpoAgent loaded = PpoAgent::load(ss, loaded_rng);
  EXPECT_EQ(loaded.policy().net.params(), r.agent.policy().net.params());
  EXPECT_EQ(loaded.policy().log_std, r.agent.policy().log_std);
  EXPECT_EQ(loaded.value().params(), r.agent.value().params());
  EXPECT_EQ(loaded_rng, r.rng);
  EXPECT_EQ(loaded.hyper().updates, 2);

  // Resuming from the checkpoint continues identically.
  Environment e1(cfg, Rng(8));
  Environment e2(cfg, Rng(8));
  EpisodeMetrics m1;
  EpisodeMetrics m2;
  const Trajectory t1 = collect_episode(e1, r.agent, r.rng, m1);
  const Trajectory t2 = collect_episode(e2, loaded, loaded_rng, m2);
  r.agent.update(t1, r.rng);
  loaded.update(t2, loaded_rng);
  EXPECT_EQ(loaded.policy().net.params(), r.agent.policy().net.params());
}

TEST(Checkpoint, RejectsForeignInput) {
  std::stringstream ss("not_a_checkpoint 1\n");
  Rng rng;
  EXPECT_THROW(PpoAgent::load(ss, rng), ConfigError);
}

TEST(Hyper, Validation) {
  PpoHyper h;
  h.discount = 1.0;
  EXPECT_THROW(h.validate(), ConfigError);
  h = PpoHyper{};
  h.clip = 0.0;
  EXPECT_THROW(h.validate(), ConfigError);
}

TEST(Train, InfiniteRegimeBeatsGreedySumRate) {
  EnvConfig cfg;
  cfg.power = db_to_linear(30.0);
  cfg.regime = Regime::kInfinite;
  const TrainResult ppo = train(cfg, quick_hyper(2000), 1);
  const GreedyRun greedy = run_greedy(cfg, GreedyConfig{}, 2000, 1);
  const auto tail = [](const std::vector<EpisodeMetrics>& e) {
    return EpisodeMetrics::average(std::span(e).subspan(e.size() - 200)).sum_rate;
  };
  EXPECT_GT(tail(ppo.episodes), tail(greedy.episodes));
}
