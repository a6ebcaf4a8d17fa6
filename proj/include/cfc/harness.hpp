#pragma once

#include <map>
#include <string>
#include <vector>

#include "cfc/config.hpp"
#include "cfc/trace.hpp"

namespace cfc {

struct RunResult {
  std::vector<TraceRecord> trace;
  RunSummary summary;
  ModelVariant theta0;       // warm-up result, the baselines' frozen model
  ModelVariant theta_final;
  std::vector<double> process_draws;      // first draws, shared-noise audit
  std::vector<double> measurement_draws;
};

/// Closed loop: infer belief, plan, apply, observe, measure surprise, adapt.
/// The first warmup_steps run with adaptation on in the nominal regime; the
/// resulting parameters are frozen as theta0 for the baseline controllers.
/// A non-null initial model (e.g. a saved snapshot) replaces the built-in
/// warm-start guess.
RunResult run_closed_loop(const RunConfig& cfg, ControllerKind kind,
                          const ModelVariant* initial = nullptr);

struct AggregateStat {
  double median = 0.0;
  double iqr = 0.0;
};

struct ComparisonResult {
  std::vector<ControllerKind> kinds;
  // per controller, per summary field
  std::map<std::string, std::map<std::string, AggregateStat>> stats;
  std::map<std::string, std::vector<RunSummary>> summaries;  // keyed by controller name
};

/// Runs every controller on identical noise realizations across
/// cfg.seeds_for_aggregate seeds (master seeds cfg.seed .. cfg.seed+n-1)
/// and aggregates medians and interquartile ranges.
ComparisonResult run_comparison(const RunConfig& cfg, const std::vector<ControllerKind>& kinds);

std::string format_comparison(const ComparisonResult& result);

struct LemmaReport {
  double delta = 0.0;
  long trials = 0;
  long violations = 0;
  double rate = 0.0;
  double ci_half_width = 0.0;  // 99% binomial CI half width
  bool pass = false;
};

/// Monte-Carlo check that quantile tightening bounds the one-step violation
/// frequency: random one-step Gaussian instances with the tightened
/// constraint active, violation rate must stay below delta + CI.
LemmaReport validate_lemma_tightening(double delta, long trials, std::uint64_t seed);

struct DriftReport {
  bool applicable = true;   // false for the unclipped ablation
  double max_ratio = 0.0;   // max drift_norm / (alpha * l_delta)
  bool pass = true;
};

DriftReport validate_drift_bound(const std::vector<TraceRecord>& trace, const AdaptConfig& adapt);

struct ParticleOracleReport {
  double max_ratio = 0.0;  // max over steps/axes of |kf - pf| / (3 * stderr)
  bool pass = false;
};

/// Kalman posterior vs a bootstrap particle filter on an exactly
/// linear-Gaussian closed loop (proportional feedback on the filtered mean).
/// The particle estimate uses n_reps independent sub-filters so the standard
/// error includes resampling noise, not just the weighted-sample variance.
ParticleOracleReport validate_filter_oracle(std::uint64_t seed, int steps = 50, int n_reps = 10,
                                            int particles_per_rep = 10000);

/// Run artifacts written under <out_dir>/<scenario>_<controller>_seed<seed>.*
struct RunPaths {
  std::string trace_csv;
  std::string summary_txt;
};
RunPaths run_output_paths(const RunConfig& cfg, ControllerKind kind);

}  // namespace cfc
