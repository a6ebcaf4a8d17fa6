#pragma once

#include <string>
#include <vector>

#include "cfc/types.hpp"

namespace cfc {

/// One closed-loop step. x/o are the post-step plant state and its
/// observation, so record t carries the (u_t, o_{t+1}) pair and the state it
/// produced; ref is the target the recorded state is compared against.
struct TraceRecord {
  int t = 0;
  double x1 = 0, x2 = 0;
  double ref = 0;
  double o1 = 0, o2 = 0;
  double u = 0;
  double s_raw = 0, s_shifted = 0;
  double alpha = 0, cfi = 0, drift_norm = 0;
  double max_margin = 0;
  bool feasible = true, relaxed = false;
  bool violation_x = false, violation_u = false;
  double belief_mean1 = 0, belief_mean2 = 0, belief_cov_trace = 0;
};

struct RunSummary {
  double rmse_pre = 0;
  double rmse_post_full = 0;
  double rmse_post_steady = 0;  // last 100 steps
  int recovery_time = 0;        // steps after t_s; steps - t_s when never reached
  long violation_count_x = 0;
  long violation_count_u = 0;
  long relaxed_count = 0;
  double max_cfi_burst = 0;     // max CFI over [t_s, t_s + 50)
  double mean_cfi_pre = 0;      // mean CFI over [warmup_end, t_s)
  double median_cfi_pre = 0;    // median CFI over the same window
  double median_cfi_post = 0;   // median CFI over [t_s + 50, end)
  double cumulative_drift = 0;
  double max_drift_norm = 0;
  double max_abs_x1 = 0, max_abs_x2 = 0, max_abs_u = 0;
};

/// Summary recomputed purely from trace records (used both to build the
/// summary after a run and to audit an emitted CSV).
RunSummary summarize_trace(const std::vector<TraceRecord>& trace, int warmup_steps, int t_s);

std::string trace_csv_header();
std::string trace_csv_row(const TraceRecord& r);

/// Atomic writes: temp file in the target directory, then rename.
void write_trace_csv(const std::string& path, const std::vector<TraceRecord>& trace);
void write_summary(const std::string& path, const RunSummary& s);

std::vector<TraceRecord> read_trace_csv(const std::string& path);

double median(std::vector<double> values);
double rmse(const std::vector<double>& values);

}  // namespace cfc
