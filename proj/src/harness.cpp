#include "cfc/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <future>
#include <limits>
#include <sstream>

namespace cfc {

namespace {

bool adapts_model(ControllerKind kind) {
  return kind == ControllerKind::Cf || kind == ControllerKind::NoTightening ||
         kind == ControllerKind::NoRateLimit;
}

AdaptConfig adapt_config_for(const RunConfig& cfg, ControllerKind kind) {
  AdaptConfig a = cfg.adapt;
  if (kind == ControllerKind::NoRateLimit) {
    a.l_delta = std::numeric_limits<double>::infinity();
    a.decay = false;
  }
  return a;
}

std::vector<Vector> reference_window(int t, int horizon) {
  std::vector<Vector> refs;
  refs.reserve(size_t(horizon));
  for (int k = 1; k <= horizon; ++k) {
    Vector r(2);
    r << reference(t + k), 0.0;
    refs.push_back(r);
  }
  return refs;
}

ModelVariant initial_model(const RunConfig& cfg) {
  if (cfg.model_kind == ModelKind::Linear) {
    return make_linear_initial(cfg.model_sigma_w, cfg.model_sigma_v);
  }
  return make_mlp_initial(cfg.model_sigma_w, cfg.model_sigma_v, cfg.seed);
}

}  // namespace

RunResult run_closed_loop(const RunConfig& cfg, ControllerKind kind,
                          const ModelVariant* initial) {
  cfg.validate();
  validate_schedule(cfg.scenario, cfg.steps);

  Plant plant(cfg.scenario, cfg.seed);
  ModelVariant model = initial != nullptr ? *initial : initial_model(cfg);
  FilterState filter = init_belief(cfg.filter_init);
  AdaptState adapt_state;

  const ConstraintSet constraints = cfg.make_constraints();
  MpcController warm_ctrl(ControllerKind::Cf, cfg.mpc, constraints);
  MpcController main_ctrl(kind, cfg.mpc, constraints);

  const AdaptConfig warm_adapt = cfg.adapt;
  const AdaptConfig main_adapt = adapt_config_for(cfg, kind);

  RunResult out;
  out.trace.reserve(size_t(cfg.steps));

  ModelVariant theta0 = model;
  bool theta0_frozen = false;
  double last_shifted_surprise = 0.0;

  for (int t = 0; t < cfg.steps; ++t) {
    const bool in_warmup = t < cfg.warmup_steps;
    if (!in_warmup && !theta0_frozen) {
      theta0 = model;
      theta0_frozen = true;
    }

    MpcController& ctrl = in_warmup ? warm_ctrl : main_ctrl;
    const AdaptConfig& adapt_cfg = in_warmup ? warm_adapt : main_adapt;
    const bool adapting = cfg.adapt.enabled && (in_warmup || adapts_model(kind));
    const ModelVariant& control_model = (in_warmup || adapts_model(kind)) ? model : theta0;

    const auto [u, sol] =
        ctrl.step(control_model, filter.belief, last_shifted_surprise, reference_window(t, cfg.mpc.horizon));

    const Vector o_next = plant.step(u);
    const Vector x_next = plant.state();

    const ModelVariant& surprise_model = control_model;
    const Surprise s = surprise(surprise_model, filter, u, o_next);
    last_shifted_surprise = s.shifted;

    TraceRecord rec;
    rec.t = t;
    rec.x1 = x_next(0);
    rec.x2 = x_next(1);
    rec.ref = reference(t + 1);
    rec.o1 = o_next(0);
    rec.o2 = o_next(1);
    rec.u = u;
    rec.s_raw = s.raw;
    rec.s_shifted = s.shifted;
    rec.max_margin = sol.margins.size() > 0 ? sol.margins.maxCoeff() : 0.0;
    rec.feasible = sol.feasible;
    rec.relaxed = sol.relaxed;
    rec.violation_x = std::abs(x_next(0)) > cfg.x1_max || std::abs(x_next(1)) > cfg.x2_max;
    rec.violation_u = std::abs(u) > cfg.u_max + 1e-12;

    if (adapting && s.shifted > cfg.surprise_gate) {
      // With fixed conservative noise (the default), adaptation follows the
      // prediction-error score; otherwise the full likelihood gradient,
      // including the log-Cholesky noise coordinates.
      auto [loglik, grad] = cfg.adapt_noise_coords
                                ? surprise_model.loglik_and_grad(filter.belief, u, o_next)
                                : surprise_model.loglik_and_grad_mean_path(filter.belief, u,
                                                                           o_next);
      (void)loglik;
      auto [next_model, next_state] = adapt_step(surprise_model, grad, s.shifted, adapt_state, adapt_cfg);
      model = next_model;
      adapt_state = next_state;
      rec.alpha = adapt_state.last_alpha;
      rec.cfi = adapt_state.last_cfi;
      rec.drift_norm = adapt_state.last_drift_norm;
    }

    const ModelVariant& filter_model = (in_warmup || adapts_model(kind)) ? model : theta0;
    filter = filter_update(filter_model, filter, u, o_next);
    filter.last_surprise_raw = s.raw;

    rec.belief_mean1 = filter.belief.mean(0);
    rec.belief_mean2 = filter.belief.mean(1);
    rec.belief_cov_trace = filter.belief.cov.trace();
    out.trace.push_back(rec);
  }

  out.summary = summarize_trace(out.trace, cfg.warmup_steps, cfg.scenario.t_s);
  out.theta0 = theta0_frozen ? theta0 : model;
  out.theta_final = model;
  out.process_draws = plant.process_draw_log();
  out.measurement_draws = plant.measurement_draw_log();
  return out;
}

namespace {

struct FieldAccessor {
  const char* name;
  double (*get)(const RunSummary&);
};

const FieldAccessor kSummaryFields[] = {
    {"rmse_pre", [](const RunSummary& s) { return s.rmse_pre; }},
    {"rmse_post_full", [](const RunSummary& s) { return s.rmse_post_full; }},
    {"rmse_post_steady", [](const RunSummary& s) { return s.rmse_post_steady; }},
    {"recovery_time", [](const RunSummary& s) { return double(s.recovery_time); }},
    {"violation_count_x", [](const RunSummary& s) { return double(s.violation_count_x); }},
    {"violation_count_u", [](const RunSummary& s) { return double(s.violation_count_u); }},
    {"relaxed_count", [](const RunSummary& s) { return double(s.relaxed_count); }},
    {"max_cfi_burst", [](const RunSummary& s) { return s.max_cfi_burst; }},
    {"mean_cfi_pre", [](const RunSummary& s) { return s.mean_cfi_pre; }},
    {"median_cfi_pre", [](const RunSummary& s) { return s.median_cfi_pre; }},
    {"median_cfi_post", [](const RunSummary& s) { return s.median_cfi_post; }},
    {"cumulative_drift", [](const RunSummary& s) { return s.cumulative_drift; }},
    {"max_drift_norm", [](const RunSummary& s) { return s.max_drift_norm; }},
};

double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) { return 0.0; }
  const double pos = q * double(sorted.size() - 1);
  const size_t lo = size_t(std::floor(pos));
  const size_t hi = size_t(std::ceil(pos));
  const double w = pos - double(lo);
  return (1.0 - w) * sorted[lo] + w * sorted[hi];
}

}  // namespace

ComparisonResult run_comparison(const RunConfig& cfg, const std::vector<ControllerKind>& kinds) {
  require(kinds.size() >= 2, "run_comparison: need at least two controllers");
  ComparisonResult result;
  result.kinds = kinds;

  for (int i = 0; i < cfg.seeds_for_aggregate; ++i) {
    RunConfig seed_cfg = cfg;
    seed_cfg.seed = cfg.seed + std::uint64_t(i);

    std::vector<std::future<RunResult>> jobs;
    jobs.reserve(kinds.size());
    for (ControllerKind kind : kinds) {
      jobs.push_back(std::async(std::launch::async,
                                [seed_cfg, kind] { return run_closed_loop(seed_cfg, kind); }));
    }
    std::vector<RunResult> runs;
    runs.reserve(kinds.size());
    for (auto& j : jobs) { runs.push_back(j.get()); }

    // identical-noise audit: the plant substreams must agree across controllers
    for (size_t k = 1; k < runs.size(); ++k) {
      require(runs[k].process_draws == runs[0].process_draws &&
                  runs[k].measurement_draws == runs[0].measurement_draws,
              "run_comparison: controllers consumed different noise streams");
    }
    for (size_t k = 0; k < kinds.size(); ++k) {
      result.summaries[controller_name(kinds[k])].push_back(runs[k].summary);
    }
  }

  for (ControllerKind kind : kinds) {
    const auto& sums = result.summaries[controller_name(kind)];
    for (const FieldAccessor& field : kSummaryFields) {
      std::vector<double> values;
      values.reserve(sums.size());
      for (const RunSummary& s : sums) { values.push_back(field.get(s)); }
      std::sort(values.begin(), values.end());
      AggregateStat stat;
      stat.median = quantile_sorted(values, 0.5);
      stat.iqr = quantile_sorted(values, 0.75) - quantile_sorted(values, 0.25);
      result.stats[controller_name(kind)][field.name] = stat;
    }
  }
  return result;
}

std::string format_comparison(const ComparisonResult& result) {
  std::ostringstream os;
  os << "field";
  for (ControllerKind kind : result.kinds) {
    os << "\t" << controller_name(kind) << " (median, IQR)";
  }
  os << "\n";
  for (const FieldAccessor& field : kSummaryFields) {
    os << field.name;
    for (ControllerKind kind : result.kinds) {
      const AggregateStat& st = result.stats.at(controller_name(kind)).at(field.name);
      char buf[64];
      std::snprintf(buf, sizeof(buf), "\t%.6g (%.6g)", st.median, st.iqr);
      os << buf;
    }
    os << "\n";
  }
  return os.str();
}

LemmaReport validate_lemma_tightening(double delta, long trials, std::uint64_t seed) {
  require(delta > 0.0 && delta < 1.0, "lemma validation: delta in (0,1)");
  SeededStream rng(seed, Stream::MonteCarlo);
  const double quantile = normal_quantile(1.0 - delta);

  long violations = 0;
  for (long trial = 0; trial < trials; ++trial) {
    // random stable dynamics and SPD covariances
    Matrix a(2, 2);
    for (int i = 0; i < 4; ++i) { a(i / 2, i % 2) = 0.4 * rng.normal(); }
    Matrix g(2, 2);
    for (int i = 0; i < 4; ++i) { g(i / 2, i % 2) = rng.normal(); }
    const Matrix sigma_w = 0.01 * (g * g.transpose() + 0.1 * Matrix::Identity(2, 2));
    Matrix g2(2, 2);
    for (int i = 0; i < 4; ++i) { g2(i / 2, i % 2) = rng.normal(); }
    const Matrix p0 = 0.05 * (g2 * g2.transpose() + 0.1 * Matrix::Identity(2, 2));

    const Matrix sigma1 = symmetrize(a * p0 * a.transpose() + sigma_w);
    const double sigma_max = max_eig_sqrt(sigma1);

    Vector dir(2);
    dir << rng.normal(), rng.normal();
    if (dir.norm() < 1e-12) { dir << 1.0, 0.0; }
    dir.normalize();

    const double beta = quantile * dir.norm() * sigma_max;
    const double b = 1.0;
    // place the predicted mean so the tightened constraint is active
    const Vector zhat = (b - beta) * dir;

    // draw the true next state from the predictive distribution
    const Matrix l = cholesky_spd(sigma1);
    Vector noise(2);
    noise << rng.normal(), rng.normal();
    const Vector z = zhat + l * noise;
    if (dir.dot(z) > b) { ++violations; }
  }

  LemmaReport report;
  report.delta = delta;
  report.trials = trials;
  report.violations = violations;
  report.rate = double(violations) / double(trials);
  const double z99 = normal_quantile(0.995);
  report.ci_half_width = z99 * std::sqrt(delta * (1.0 - delta) / double(trials));
  report.pass = report.rate <= delta + report.ci_half_width;
  return report;
}

DriftReport validate_drift_bound(const std::vector<TraceRecord>& trace, const AdaptConfig& adapt) {
  DriftReport report;
  if (!std::isfinite(adapt.l_delta)) {
    report.applicable = false;
    return report;
  }
  for (const TraceRecord& r : trace) {
    if (r.drift_norm > 0.0 && r.alpha > 0.0) {
      report.max_ratio = std::max(report.max_ratio, r.drift_norm / (r.alpha * adapt.l_delta));
    }
  }
  report.pass = report.max_ratio <= 1.0 + 1e-9;
  return report;
}

namespace {

/// One bootstrap particle filter: propagate, weight, report mean, resample.
class BootstrapFilter {
 public:
  BootstrapFilter(const LinearGaussianParams& p, const FilterInit& init, int n,
                  std::uint64_t seed, std::uint64_t rep)
      : params_(p),
        rng_(seed + 7919 * (rep + 1), Stream::Particles),
        particles_(size_t(n), Vector::Zero(2)),
        weights_(size_t(n), 1.0 / double(n)),
        lw_(cholesky_spd(p.sigma_w())),
        noise_model_(Vector::Zero(2), p.sigma_v()) {
    const Matrix l0 = cholesky_spd(init.cov);
    for (auto& z : particles_) {
      Vector e(2);
      e << rng_.normal(), rng_.normal();
      z = init.mean + l0 * e;
    }
  }

  Vector step(double u, const Vector& o) {
    const int n = int(particles_.size());
    std::vector<double> logw(size_t(n), 0.0);
    double maxlog = -1e300;
    for (int i = 0; i < n; ++i) {
      Vector e(2);
      e << rng_.normal(), rng_.normal();
      particles_[size_t(i)] = params_.A * particles_[size_t(i)] + params_.B * u + lw_ * e;
      logw[size_t(i)] = log_density(noise_model_, o - params_.C * particles_[size_t(i)]);
      maxlog = std::max(maxlog, logw[size_t(i)]);
    }
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      weights_[size_t(i)] = std::exp(logw[size_t(i)] - maxlog);
      sum += weights_[size_t(i)];
    }
    Vector mean = Vector::Zero(2);
    for (int i = 0; i < n; ++i) {
      weights_[size_t(i)] /= sum;
      mean += weights_[size_t(i)] * particles_[size_t(i)];
    }
    // systematic resampling every step
    std::vector<Vector> next(size_t(n), Vector::Zero(2));
    const double stride = 1.0 / n;
    double pos = stride * rng_.uniform();
    double cum = weights_[0];
    size_t j = 0;
    for (int i = 0; i < n; ++i) {
      while (cum < pos && j + 1 < size_t(n)) { cum += weights_[++j]; }
      next[size_t(i)] = particles_[j];
      pos += stride;
    }
    particles_.swap(next);
    std::fill(weights_.begin(), weights_.end(), 1.0 / double(n));
    return mean;
  }

 private:
  LinearGaussianParams params_;
  SeededStream rng_;
  std::vector<Vector> particles_;
  std::vector<double> weights_;
  Matrix lw_;
  GaussianBelief noise_model_;
};

}  // namespace

ParticleOracleReport validate_filter_oracle(std::uint64_t seed, int steps, int n_reps,
                                            int particles_per_rep) {
  ScenarioSpec spec;
  spec.kind = ScenarioKind::None;
  spec.rho = 0.0;  // exactly linear-Gaussian plant
  Plant plant(spec, seed);

  LinearGaussianParams p;
  p.A = env_a1();
  p.B = env_b();
  p.C = Matrix::Identity(2, 2);
  p.lw = LinearGaussianParams::logchol_from_cov(spec.sigma_w * spec.sigma_w *
                                                Matrix::Identity(2, 2));
  p.lv = LinearGaussianParams::logchol_from_cov(spec.sigma_v * spec.sigma_v *
                                                Matrix::Identity(2, 2));
  const ModelVariant model{p};

  const FilterInit init{};
  FilterState kf = init_belief(init);
  std::vector<BootstrapFilter> reps;
  reps.reserve(size_t(n_reps));
  for (int r = 0; r < n_reps; ++r) {
    reps.emplace_back(p, init, particles_per_rep, seed, std::uint64_t(r));
  }

  ParticleOracleReport report;
  for (int t = 0; t < steps; ++t) {
    // proportional feedback keeps the loop closed without pulling in the MPC
    const double u =
        std::clamp(1.5 * (reference(t) - kf.belief.mean(0)), -2.0, 2.0);
    const Vector o = plant.step(u);

    std::vector<Vector> means;
    means.reserve(size_t(n_reps));
    for (auto& rep : reps) { means.push_back(rep.step(u, o)); }
    Vector pf_mean = Vector::Zero(2);
    for (const Vector& m : means) { pf_mean += m; }
    pf_mean /= double(n_reps);
    Vector var = Vector::Zero(2);
    for (const Vector& m : means) {
      const Vector d = m - pf_mean;
      var += d.cwiseProduct(d);
    }
    var /= double(n_reps - 1);

    kf = filter_update(model, kf, u, o);
    for (int axis = 0; axis < 2; ++axis) {
      const double se = std::sqrt(var(axis) / double(n_reps));
      report.max_ratio =
          std::max(report.max_ratio, std::abs(kf.belief.mean(axis) - pf_mean(axis)) / (3.0 * se));
    }
  }
  report.pass = report.max_ratio <= 1.0;
  return report;
}

RunPaths run_output_paths(const RunConfig& cfg, ControllerKind kind) {
  const std::string base = cfg.out_dir + "/" + scenario_name(cfg.scenario.kind) + "_" +
                           controller_name(kind) + "_seed" + std::to_string(cfg.seed);
  return {base + "_trace.csv", base + "_summary.txt"};
}

}  // namespace cfc
