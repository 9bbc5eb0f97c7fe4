#include <cmath>
#include <cstdint>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "streamtree/experiment.hpp"

namespace {

constexpr int kExitInvalidConfig = 2;
constexpr int kExitDataError = 3;

struct CommonOpts {
  std::string config_path;
  std::string out_dir;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  int repeats = 0;
  int threads = 0;
  bool seed_set = false, repeats_set = false, threads_set = false, out_set = false;
};

void add_common(CLI::App* cmd, CommonOpts* opts) {
  cmd->add_option("--config", opts->config_path, "key = value config file");
  cmd->add_option("--set", opts->overrides, "override, key=value (repeatable)")
      ->type_name("KEY=VALUE");
  cmd->add_option("--seed", opts->seed, "base RNG seed")
      ->each([opts](const std::string&) { opts->seed_set = true; });
  cmd->add_option("--out", opts->out_dir, "output directory")
      ->each([opts](const std::string&) { opts->out_set = true; });
  cmd->add_option("--repeats", opts->repeats, "independent repeats")
      ->each([opts](const std::string&) { opts->repeats_set = true; });
  cmd->add_option("--threads", opts->threads, "worker threads for repeats")
      ->each([opts](const std::string&) { opts->threads_set = true; });
}

streamtree::ExperimentConfig build_config(const CommonOpts& opts) {
  streamtree::ExperimentConfig cfg;
  if (!opts.config_path.empty()) {
    cfg = streamtree::parse_config(opts.config_path, opts.overrides);
  } else {
    std::map<std::string, std::string> kv;
    for (const std::string& ov : opts.overrides) {
      const auto eq = ov.find('=');
      if (eq == std::string::npos)
        throw std::invalid_argument("override must be key=value: " + ov);
      kv[ov.substr(0, eq)] = ov.substr(eq + 1);
    }
    cfg = streamtree::config_from_pairs(kv);
  }
  if (opts.seed_set) cfg.seed = opts.seed;
  if (opts.out_set) cfg.out_dir = opts.out_dir;
  if (opts.repeats_set) cfg.repeats = opts.repeats;
  if (opts.threads_set) cfg.threads = opts.threads;
  return cfg;
}

std::vector<double> parse_values(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(std::stod(item));
  if (out.empty()) throw std::invalid_argument("empty sweep value list");
  return out;
}

int run_cmd(const CommonOpts& opts) {
  streamtree::ExperimentConfig cfg = build_config(opts);
  streamtree::RunSummary summary = streamtree::run_experiment(cfg, true);
  for (const std::string& m :
       streamtree::RunSummary::metric_names(cfg.cloud.task))
    std::cout << m << " mean=" << summary.mean(m)
              << " q05=" << summary.quantile(m, 0.05)
              << " q95=" << summary.quantile(m, 0.95) << "\n";
  std::cout << "wrote " << cfg.out_dir << "/summary.csv\n";
  return 0;
}

int sweep_cmd(const CommonOpts& opts, const std::string& parameter,
              const std::string& values_csv) {
  streamtree::ExperimentConfig cfg = build_config(opts);
  const std::vector<double> values = parse_values(values_csv);
  const auto rows = streamtree::sweep_experiment(cfg, parameter, values, true);
  for (const auto& row : rows)
    std::cout << parameter << "=" << row.value << " " << row.metric
              << " mean=" << row.mean << " q05=" << row.q05
              << " q95=" << row.q95 << "\n";
  std::cout << "wrote " << cfg.out_dir << "/sweep.csv\n";
  return 0;
}

int height_cmd(const CommonOpts& opts) {
  streamtree::ExperimentConfig cfg = build_config(opts);
  streamtree::HeightTrace trace = streamtree::height_study(cfg, true);
  auto mean_of = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
  };
  std::cout << "mean height: full=" << mean_of(trace.full)
            << " lambda1=" << mean_of(trace.lambda1)
            << " lambda0.9=" << mean_of(trace.lambda09) << "\n";
  std::cout << "wrote " << cfg.out_dir << "/heights.csv\n";
  return 0;
}

bool report(const char* name, bool ok) {
  std::cout << (ok ? "[ok]   " : "[FAIL] ") << name << "\n";
  return ok;
}

int check_cmd() {
  using namespace streamtree;
  bool all = true;

  {  // rectangle integral against the unit-interval closed form
    Eigen::VectorXd a(1), b(1), g(1);
    a << 0.0;
    b << 1.0;
    g << 1.0;
    all &= report("rect_integral unit interval",
                  std::abs(rect_integral(a, b, g, 0.0) - 1.0 / 3.0) < 1e-12);
  }
  {  // effective sample size formula
    const double ess = effective_sample_size({1.0, 1.0, 2.0});
    all &= report("effective sample size", std::abs(ess - 16.0 / 6.0) < 1e-12);
  }
  {  // split/pool prior round trip
    LeafPrior prior = LeafPrior::Regression(2);
    Eigen::VectorXd x(2);
    x << 0.3, -1.2;
    Observation obs{x, 2.0, 0, 0};
    for (int i = 0; i < 7; ++i) {
      obs.x[0] += 0.1;
      obs.y -= 0.2;
      retire_into_prior(prior, LeafModel::kLinear, obs, 1.0);
    }
    auto [l, r] = split_prior(prior, LeafModel::kLinear, 0.4);
    LeafPrior back = pool_priors(l, r, LeafModel::kLinear);
    all &= report("split/pool prior round trip",
                  (back.reg.gram - prior.reg.gram).norm() < 1e-9 &&
                      std::abs(back.reg.n - prior.reg.n) < 1e-9);
  }
  {  // short run: conservation + determinism + checkpoint round trip
    CloudConfig cc;
    cc.n_particles = 20;
    cc.capacity = 40;
    cc.seed = 7;
    auto data = gen_friedman(220, 11);
    std::vector<Observation> init(data.begin(), data.begin() + 10);
    std::vector<Observation> rest(data.begin() + 10, data.end());
    ParticleCloud c1 = ParticleCloud::init(init, cc);
    ParticleCloud c2 = ParticleCloud::init(init, cc);
    MetricTrace t1 = prequential_eval(c1, rest);
    MetricTrace t2 = prequential_eval(c2, rest);
    all &= report("single-thread determinism", t1.rmse() == t2.rmse());
    bool conserved = true;
    for (const Tree& tree : c1.particles())
      conserved = conserved &&
                  tree.total_active() == static_cast<int>(c1.pool_size());
    all &= report("active-count conservation", conserved);
    std::stringstream buf;
    c1.save(buf);
    ParticleCloud c3 = ParticleCloud::load(buf);
    Eigen::VectorXd q = rest.back().x;
    all &= report("checkpoint round trip",
                  c1.predict(q).mean == c3.predict(q).mean);
  }
  {  // AD cache coherence under the ALC policy
    CloudConfig cc;
    cc.n_particles = 10;
    cc.capacity = 30;
    cc.policy = DiscardPolicy::kAlc;
    cc.seed = 3;
    auto data = gen_parabola(160, 5);
    std::vector<Observation> init(data.begin(), data.begin() + 10);
    ParticleCloud cloud = ParticleCloud::init(init, cc);
    for (std::size_t i = 10; i < data.size(); ++i) cloud.update(data[i]);
    AdTotals fresh = cloud.rebuild_ad_totals();
    bool coherent = true;
    for (int id : cloud.pool().live_ids()) {
      const double cached = cloud.ad_totals().score(id, DiscardPolicy::kAlc);
      const double exact = fresh.score(id, DiscardPolicy::kAlc);
      if (std::isfinite(cached) != std::isfinite(exact) ||
          (std::isfinite(cached) && std::abs(cached - exact) > 1e-7))
        coherent = false;
    }
    all &= report("AD cache coherence (ALC)", coherent);
  }
  std::cout << (all ? "all checks passed" : "CHECK FAILURES") << "\n";
  return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"streaming dynamic-tree regression/classification harness"};
  app.require_subcommand(1);

  CommonOpts run_opts, sweep_opts, height_opts;
  std::string sweep_parameter, sweep_values;

  CLI::App* run = app.add_subcommand("run", "prequential experiment");
  add_common(run, &run_opts);

  CLI::App* sweep = app.add_subcommand("sweep", "sweep one parameter");
  add_common(sweep, &sweep_opts);
  sweep->add_option("--parameter", sweep_parameter, "lambda | k | w")->required();
  sweep->add_option("--values", sweep_values, "comma-separated values")->required();

  CLI::App* height =
      app.add_subcommand("height-study", "tree-height adaptation study");
  add_common(height, &height_opts);

  app.add_subcommand("check", "run the built-in self checks");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return run_cmd(run_opts);
    if (sweep->parsed()) return sweep_cmd(sweep_opts, sweep_parameter, sweep_values);
    if (height->parsed()) return height_cmd(height_opts);
    return check_cmd();
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid config: " << e.what() << "\n";
    return kExitInvalidConfig;
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitDataError;
  }
}
