#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "covert_rsma/experiment.hpp"
#include "covert_rsma/plot.hpp"
#include "covert_rsma/ppo.hpp"
#include "covert_rsma/selftest.hpp"

namespace fs = std::filesystem;
using namespace covert_rsma;

namespace {

struct CommonOptions {
  std::string config;
  std::string out = "results";
  std::vector<std::uint64_t> seeds;
  std::string scheme;
  std::string regime;
  std::optional<int> updates;
  std::optional<int> workers;
};

void add_common(CLI::App* app, CommonOptions& o) {
  app->add_option("--config", o.config, "key = value configuration file")->check(CLI::ExistingFile);
  app->add_option("--out", o.out, "output directory")->capture_default_str();
  app->add_option("--seeds", o.seeds, "comma-separated seeds")->delimiter(',');
  app->add_option("--scheme", o.scheme, "P-RSMA, P-SDMA, G-RSMA or G-SDMA");
  app->add_option("--regime", o.regime, "FBL or IBL");
  app->add_option("--updates", o.updates, "PPO updates (episodes for greedy schemes)");
  app->add_option("--workers", o.workers, "parallel jobs");
}

ExperimentSpec load_spec(const CommonOptions& o) {
  ExperimentSpec spec;
  if (!o.config.empty()) {
    spec = parse_config(o.config);
  } else {
    std::istringstream empty;
    spec = parse_config_stream(empty);
  }
  if (!o.seeds.empty()) spec.seeds = o.seeds;
  if (!o.scheme.empty()) spec.scheme = parse_scheme(o.scheme);
  if (!o.regime.empty()) spec.regime = parse_regime(o.regime);
  if (o.updates) spec.ppo.updates = *o.updates;
  if (o.workers) spec.workers = *o.workers;
  if (const char* s = std::getenv("COVERT_RSMA_SEED")) {
    try {
      spec.master_seed = std::stoull(s);
    } catch (const std::exception&) {
      throw ConfigError("COVERT_RSMA_SEED must be a non-negative integer, got '" +
                        std::string(s) + "'");
    }
  }
  spec.env.regime = spec.regime;
  spec.env.access = access_of(spec.scheme);
  spec.validate();
  return spec;
}

std::string file_stem(const ExperimentSpec& spec, const std::string& family) {
  std::string s = family + "_" + std::string(to_string(spec.scheme)) + "_" +
                  std::string(to_string(spec.regime));
  for (char& c : s) {
    if (c == '-') c = '_';
  }
  return s;
}

void report_plateau(const ExperimentSpec& spec, const ExperimentResult& res) {
  for (std::size_t i = 0; i < res.summary.size(); ++i) {
    const auto& r = res.summary[i];
    const bool plateau = std::abs(res.tail_slopes[i]) < 1e-5;
    std::printf("%s %s sweep=%s seed=%llu min=%.6g sum=%.6g covert_viol=%.3g slope=%.3g%s\n",
                r.scheme.c_str(), r.regime.c_str(), format_real(r.sweep_value).c_str(),
                static_cast<unsigned long long>(r.seed), r.avg_min_rate, r.avg_sum_rate,
                r.covert_violation_rate, res.tail_slopes[i], plateau ? " (plateau)" : "");
  }
  (void)spec;
}

int run_family(const CommonOptions& o, SweepVariable sweep, const std::string& family,
               bool checkpoints) {
  ExperimentSpec spec = load_spec(o);
  spec.use_sweep(sweep);
  spec.validate();
  const ExperimentResult res = run_experiment(spec, checkpoints);
  fs::create_directories(o.out);
  const std::string stem = file_stem(spec, family);
  write_csv_file((fs::path(o.out) / (stem + "_series.csv")).string(), res.series);
  write_csv_file((fs::path(o.out) / (stem + "_summary.csv")).string(), res.summary);
  if (checkpoints) {
    std::size_t job = 0;
    for (double v : spec.points()) {
      for (std::uint64_t seed : spec.seeds) {
        const std::string& ck = res.checkpoints[job++];
        if (ck.empty()) continue;
        const auto path = fs::path(o.out) /
                          (stem + "_" + format_real(v) + "_seed" + std::to_string(seed) + ".ckpt");
        std::ofstream out(path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
        out << ck;
      }
    }
  }
  report_plateau(spec, res);
  return 0;
}

int run_eval(const CommonOptions& o, const std::string& checkpoint, int episodes) {
  ExperimentSpec spec = load_spec(o);
  std::ifstream in(checkpoint);
  if (!in) throw ConfigError("cannot open checkpoint '" + checkpoint + "'");
  Rng saved(0);
  const PpoAgent agent = PpoAgent::load(in, saved);
  EnvConfig env = spec.env_at(spec.power_db);
  if (agent.policy().net.input_dim() != env.observation_dim() ||
      agent.policy().net.output_dim() != env.action_dim()) {
    throw ConfigError("checkpoint dimensions do not match the configured users");
  }
  std::vector<MetricRow> rows;
  for (std::uint64_t seed : spec.seeds) {
    Environment e(env, Rng(job_seed(spec.master_seed, seed)).derive(5));
    for (int k = 0; k < episodes; ++k) {
      rows.push_back(make_row(spec, spec.power_db, seed, k + 1, evaluate_policy(e, agent.policy())));
    }
  }
  fs::create_directories(o.out);
  const auto path = fs::path(o.out) / (file_stem(spec, "eval") + ".csv");
  write_csv_file(path.string(), rows);
  std::vector<EpisodeMetrics> all;
  for (const auto& r : rows) {
    EpisodeMetrics m;
    m.min_rate = r.avg_min_rate;
    m.sum_rate = r.avg_sum_rate;
    m.covert_violation_rate = r.covert_violation_rate;
    m.qos_violation_rate = r.qos_violation_rate;
    m.mean_kl = r.mean_kl;
    m.mean_radiated_power = r.mean_radiated_power;
    m.steps = 1;
    all.push_back(m);
  }
  const EpisodeMetrics avg = EpisodeMetrics::average(all);
  std::printf("eval %s: min=%.6g sum=%.6g covert_viol=%.3g qos_viol=%.3g power=%.6g W\n",
              path.string().c_str(), avg.min_rate, avg.sum_rate, avg.covert_violation_rate,
              avg.qos_violation_rate, avg.mean_radiated_power);
  return 0;
}

int run_selftest() {
  int failed = 0;
  for (const auto& c : run_oracle_checks()) {
    std::printf("[%s] %s: %s\n", c.passed ? "PASS" : "FAIL", c.name.c_str(), c.detail.c_str());
    if (!c.passed) ++failed;
  }
  std::printf("%d check(s) failed\n", failed);
  return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Covert rate-splitting downlink: training, sweeps and oracle checks"};
  app.require_subcommand(1);

  CommonOptions train_o, power_o, eps_o, block_o, eval_o;
  auto* train = app.add_subcommand("train", "train or run one scheme at the base setting");
  add_common(train, train_o);
  auto* sp = app.add_subcommand("sweep-power", "sweep transmit power (dB)");
  add_common(sp, power_o);
  auto* se = app.add_subcommand("sweep-epsilon", "sweep the covert requirement");
  add_common(se, eps_o);
  auto* sb = app.add_subcommand("sweep-blocklength", "sweep the blocklength interval");
  add_common(sb, block_o);

  auto* ev = app.add_subcommand("eval", "roll deterministic episodes from a checkpoint");
  add_common(ev, eval_o);
  std::string checkpoint;
  int episodes = 10;
  ev->add_option("--checkpoint", checkpoint, "checkpoint written by train")
      ->required()
      ->check(CLI::ExistingFile);
  ev->add_option("--episodes", episodes, "episodes per seed")->capture_default_str();

  auto* st = app.add_subcommand("selftest", "run the oracle checks");

  auto* pl = app.add_subcommand("plot", "render SVG charts from metric CSVs");
  std::vector<std::string> csvs;
  std::string plot_out = "plots";
  pl->add_option("csv", csvs, "metric CSV files")->required()->check(CLI::ExistingFile);
  pl->add_option("--out", plot_out, "output directory")->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train) return run_family(train_o, SweepVariable::kNone, "train", true);
    if (*sp) return run_family(power_o, SweepVariable::kPowerDb, "sweep_power", false);
    if (*se) return run_family(eps_o, SweepVariable::kEpsilon, "sweep_epsilon", false);
    if (*sb) return run_family(block_o, SweepVariable::kBlocklength, "sweep_blocklength", false);
    if (*ev) return run_eval(eval_o, checkpoint, episodes);
    if (*st) return run_selftest();
    if (*pl) {
      std::vector<fs::path> paths(csvs.begin(), csvs.end());
      for (const auto& p : render_plots(paths, plot_out)) std::printf("wrote %s\n", p.c_str());
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
