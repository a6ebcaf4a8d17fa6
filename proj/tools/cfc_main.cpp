// Command-line front end: scenario runs, controller comparisons, and the
// theorem validators, all emitting CSV traces and key=value summaries.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <vector>

#include "cfc/harness.hpp"

namespace {

using namespace cfc;

struct CommonOpts {
  std::string scenario = "abrupt";
  std::string controller = "cf";
  long seed = 0;
  int steps = -1;
  std::string config_path;
  std::string out_dir;
  std::string model = "linear";
  bool no_noise = false;
  bool stress = false;
};

RunConfig build_config(const CommonOpts& opts) {
  RunConfig cfg;
  if (!opts.config_path.empty()) {
    if (!std::filesystem::exists(opts.config_path)) {
      throw ConfigError("config file not found: " + opts.config_path);
    }
    load_config_file(cfg, opts.config_path);
  }
  cfg.scenario.kind = scenario_from_name(opts.scenario);
  cfg.seed = std::uint64_t(opts.seed);
  if (opts.steps > 0) { cfg.steps = opts.steps; }
  if (!opts.out_dir.empty()) { cfg.out_dir = opts.out_dir; }
  if (opts.model == "mlp") {
    cfg.model_kind = ModelKind::Mlp;
  } else if (opts.model != "linear") {
    throw ConfigError("--model must be linear or mlp");
  }
  if (opts.no_noise) { cfg.scenario.noise = false; }
  if (opts.stress) { apply_stress_preset(cfg); }
  return cfg;
}

int cmd_run(const CommonOpts& opts, const std::string& save_params,
            const std::string& load_params) {
  RunConfig cfg = build_config(opts);
  const ControllerKind kind = controller_from_name(opts.controller);

  ModelVariant warm_start;
  const ModelVariant* initial = nullptr;
  if (!load_params.empty()) {
    std::ifstream is(load_params);
    if (!is) { throw ConfigError("cannot read parameter snapshot: " + load_params); }
    warm_start = ModelVariant::load(is);
    initial = &warm_start;
  }

  RunResult result = run_closed_loop(cfg, kind, initial);

  const RunPaths paths = run_output_paths(cfg, kind);
  write_trace_csv(paths.trace_csv, result.trace);
  write_summary(paths.summary_txt, result.summary);
  if (!save_params.empty()) {
    std::ofstream os(save_params);
    if (!os) { throw ConfigError("cannot write " + save_params); }
    result.theta_final.save(os);
  }

  std::cout << "trace:   " << paths.trace_csv << "\n"
            << "summary: " << paths.summary_txt << "\n"
            << "rmse_pre=" << result.summary.rmse_pre
            << " rmse_post_steady=" << result.summary.rmse_post_steady
            << " violations_x=" << result.summary.violation_count_x
            << " violations_u=" << result.summary.violation_count_u
            << " relaxed=" << result.summary.relaxed_count << "\n";
  return 0;
}

int cmd_compare(const CommonOpts& opts, const std::string& controllers_csv) {
  RunConfig cfg = build_config(opts);
  std::vector<ControllerKind> kinds;
  std::stringstream ss(controllers_csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) { kinds.push_back(controller_from_name(item)); }
  }
  if (kinds.size() < 2) { throw ConfigError("compare needs at least two controllers"); }

  const ComparisonResult result = run_comparison(cfg, kinds);
  const std::string table = format_comparison(result);
  std::cout << table;

  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);
  const std::string path = cfg.out_dir + "/compare_" + scenario_name(cfg.scenario.kind) + ".txt";
  std::ofstream os(path);
  os << table;
  std::cout << "written: " << path << "\n";
  return 0;
}

int cmd_validate(const CommonOpts& opts) {
  RunConfig cfg = build_config(opts);
  bool all_pass = true;

  for (double delta : {0.05, 0.5}) {
    const LemmaReport report = validate_lemma_tightening(delta, 10000, cfg.seed);
    std::cout << (report.pass ? "[PASS]" : "[FAIL]") << " tightening lemma: delta=" << delta
              << " rate=" << report.rate << " ci=" << report.ci_half_width << "\n";
    all_pass = all_pass && report.pass;
  }

  for (const char* scenario : {"abrupt", "obs-drift", "gradual"}) {
    RunConfig run_cfg = cfg;
    run_cfg.scenario.kind = scenario_from_name(scenario);
    const RunResult result = run_closed_loop(run_cfg, ControllerKind::Cf);
    const DriftReport drift = validate_drift_bound(result.trace, run_cfg.adapt);
    const bool cfi_ok = [&] {
      for (const TraceRecord& r : result.trace) {
        if (r.cfi > 1.0 + 1e-9) { return false; }
      }
      return true;
    }();
    std::cout << (drift.pass && cfi_ok ? "[PASS]" : "[FAIL]") << " drift bound (" << scenario
              << "): max drift/(alpha*L) = " << drift.max_ratio
              << (cfi_ok ? ", CFI <= 1" : ", CFI exceeded 1") << "\n";
    all_pass = all_pass && drift.pass && cfi_ok;
  }
  return all_pass ? 0 : 1;
}

int cmd_grad_check(const CommonOpts& opts) {
  RunConfig cfg = build_config(opts);
  SeededStream rng(cfg.seed, Stream::MonteCarlo);

  // quick linear + mlp likelihood-gradient spot checks
  double max_err = 0.0;
  for (int rep = 0; rep < 10; ++rep) {
    ModelVariant model = make_linear_initial(0.05, 0.05);
    Vector theta = model.flatten();
    for (Index i = 0; i < theta.size(); ++i) { theta(i) += 0.05 * rng.normal(); }
    model.set_params(theta);
    GaussianBelief belief(Vector::Zero(2), 0.1 * Matrix::Identity(2, 2));
    belief.mean << rng.normal(), rng.normal();
    Vector o(2);
    o << rng.normal(), rng.normal();
    const double u = rng.normal();

    const auto [value, grad] = model.loglik_and_grad(belief, u, o);
    (void)value;
    const double h = 1e-5;
    for (Index i = 0; i < theta.size(); ++i) {
      Vector tp = theta, tm = theta;
      tp(i) += h;
      tm(i) -= h;
      ModelVariant mp = model, mm = model;
      mp.set_params(tp);
      mm.set_params(tm);
      const double fd = (mp.loglik(belief, u, o) - mm.loglik(belief, u, o)) / (2 * h);
      const double denom = std::max({std::abs(fd), std::abs(grad(i)), 1e-4});
      max_err = std::max(max_err, std::abs(fd - grad(i)) / denom);
    }
  }

  const ModelVariant mlp = make_mlp_initial(0.1, 0.1, cfg.seed);
  const double mlp_err = std::max(mlp_grad_check(mlp.mlp().transition, cfg.seed + 1),
                                  mlp_grad_check(mlp.mlp().observation, cfg.seed + 2));

  const bool pass = max_err <= 1e-5 && mlp_err <= 1e-5;
  std::cout << (pass ? "[PASS]" : "[FAIL]") << " gradient checks: linear=" << max_err
            << " mlp=" << mlp_err << "\n";
  return pass ? 0 : 1;
}

int cmd_oracle_filter(const CommonOpts& opts) {
  // 50-step closed-loop Kalman run vs 10 x 10^4 bootstrap particles.
  RunConfig cfg = build_config(opts);
  const ParticleOracleReport report = validate_filter_oracle(cfg.seed, 50, 10, 10000);
  std::cout << (report.pass ? "[PASS]" : "[FAIL]")
            << " particle-filter oracle: max |kf - pf| / (3 stderr) = " << report.max_ratio
            << "\n";
  return report.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cognitive-flexible control stack: scenario runner and validators"};
  app.require_subcommand(1);

  CommonOpts opts;

  auto add_common = [&opts](CLI::App* cmd, bool with_controller) {
    cmd->add_option("--scenario", opts.scenario, "abrupt | obs-drift | gradual | none");
    if (with_controller) {
      cmd->add_option("--controller", opts.controller,
                      "cf | nominal | robust | fixed-model | no-tightening | no-rate-limit");
    }
    cmd->add_option("--seed", opts.seed, "master seed");
    cmd->add_option("--steps", opts.steps, "run length");
    cmd->add_option("--config", opts.config_path, "key = value config file");
    cmd->add_option("--out", opts.out_dir, "output directory");
    cmd->add_option("--model", opts.model, "linear | mlp");
    cmd->add_flag("--no-noise", opts.no_noise, "disable plant noise");
    cmd->add_flag("--stress", opts.stress, "amplified-noise stress preset");
  };

  std::string save_params, load_params, controllers_csv = "cf,nominal,robust";

  CLI::App* run = app.add_subcommand("run", "single closed-loop run");
  add_common(run, true);
  run->add_option("--save-params", save_params, "write final parameter snapshot");
  run->add_option("--load-params", load_params, "parameter snapshot to warm-start from");

  CLI::App* compare = app.add_subcommand("compare", "shared-noise controller comparison");
  add_common(compare, false);
  compare->add_option("--controllers", controllers_csv, "comma-separated controller list");

  CLI::App* validate = app.add_subcommand("validate", "run the theorem validators");
  add_common(validate, false);

  CLI::App* grad = app.add_subcommand("grad-check", "likelihood-gradient finite-difference check");
  add_common(grad, false);

  CLI::App* oracle = app.add_subcommand("oracle-filter", "Kalman vs bootstrap particle filter");
  add_common(oracle, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (run->parsed()) { return cmd_run(opts, save_params, load_params); }
    if (compare->parsed()) { return cmd_compare(opts, controllers_csv); }
    if (validate->parsed()) { return cmd_validate(opts); }
    if (grad->parsed()) { return cmd_grad_check(opts); }
    if (oracle->parsed()) { return cmd_oracle_filter(opts); }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
