#include "cfc/trace.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace cfc {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

/// Centered 50-step window RMSE of the tracking error at index t.
double window_rmse(const std::vector<TraceRecord>& trace, int t, int half = 25) {
  const int lo = std::max(0, t - half);
  const int hi = std::min(int(trace.size()), t + half);
  double acc = 0.0;
  for (int i = lo; i < hi; ++i) {
    const double e = trace[size_t(i)].x1 - trace[size_t(i)].ref;
    acc += e * e;
  }
  return std::sqrt(acc / std::max(1, hi - lo));
}

}  // namespace

double median(std::vector<double> values) {
  if (values.empty()) { return 0.0; }
  std::sort(values.begin(), values.end());
  const size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double rmse(const std::vector<double>& values) {
  if (values.empty()) { return 0.0; }
  double acc = 0.0;
  for (double v : values) { acc += v * v; }
  return std::sqrt(acc / double(values.size()));
}

RunSummary summarize_trace(const std::vector<TraceRecord>& trace, int warmup_steps, int t_s) {
  RunSummary s;
  const int n = int(trace.size());
  std::vector<double> err_pre, err_post, err_steady, cfi_pre, cfi_post;
  for (const TraceRecord& r : trace) {
    const double e = r.x1 - r.ref;
    if (r.t >= warmup_steps && r.t < t_s) {
      err_pre.push_back(e);
      cfi_pre.push_back(r.cfi);
    }
    if (r.t >= t_s) { err_post.push_back(e); }
    if (r.t >= n - 100) { err_steady.push_back(e); }
    if (r.t >= t_s && r.t < t_s + 50) { s.max_cfi_burst = std::max(s.max_cfi_burst, r.cfi); }
    if (r.t >= t_s + 50) { cfi_post.push_back(r.cfi); }
    s.violation_count_x += r.violation_x ? 1 : 0;
    s.violation_count_u += r.violation_u ? 1 : 0;
    s.relaxed_count += r.relaxed ? 1 : 0;
    s.cumulative_drift += r.drift_norm;
    s.max_drift_norm = std::max(s.max_drift_norm, r.drift_norm);
    s.max_abs_x1 = std::max(s.max_abs_x1, std::abs(r.x1));
    s.max_abs_x2 = std::max(s.max_abs_x2, std::abs(r.x2));
    s.max_abs_u = std::max(s.max_abs_u, std::abs(r.u));
  }
  s.rmse_pre = rmse(err_pre);
  s.rmse_post_full = rmse(err_post);
  s.rmse_post_steady = rmse(err_steady);
  if (!cfi_pre.empty()) {
    double acc = 0.0;
    for (double c : cfi_pre) { acc += c; }
    s.mean_cfi_pre = acc / double(cfi_pre.size());
    s.median_cfi_pre = median(cfi_pre);
  }
  s.median_cfi_post = median(cfi_post);

  s.recovery_time = std::max(0, n - t_s);
  for (int t = t_s + 1; t + 25 <= n; ++t) {
    if (window_rmse(trace, t) <= 1.2 * s.rmse_pre) {
      s.recovery_time = t - t_s;
      break;
    }
  }
  return s;
}

std::string trace_csv_header() {
  return "t,x1,x2,ref,o1,o2,u,s_raw,s_shifted,alpha,cfi,drift_norm,max_margin,"
         "feasible,relaxed,violation_x,violation_u,belief_mean1,belief_mean2,belief_cov_trace";
}

std::string trace_csv_row(const TraceRecord& r) {
  std::ostringstream os;
  os << r.t << ',' << fmt(r.x1) << ',' << fmt(r.x2) << ',' << fmt(r.ref) << ',' << fmt(r.o1)
     << ',' << fmt(r.o2) << ',' << fmt(r.u) << ',' << fmt(r.s_raw) << ',' << fmt(r.s_shifted)
     << ',' << fmt(r.alpha) << ',' << fmt(r.cfi) << ',' << fmt(r.drift_norm) << ','
     << fmt(r.max_margin) << ',' << int(r.feasible) << ',' << int(r.relaxed) << ','
     << int(r.violation_x) << ',' << int(r.violation_u) << ',' << fmt(r.belief_mean1) << ','
     << fmt(r.belief_mean2) << ',' << fmt(r.belief_cov_trace);
  return os.str();
}

namespace {

void atomic_write(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) { fs::create_directories(target.parent_path()); }
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::trunc);
    if (!os) { throw std::runtime_error("cannot write " + tmp.string()); }
    os << content;
  }
  fs::rename(tmp, target);
}

}  // namespace

void write_trace_csv(const std::string& path, const std::vector<TraceRecord>& trace) {
  std::ostringstream os;
  os << trace_csv_header() << '\n';
  for (const TraceRecord& r : trace) { os << trace_csv_row(r) << '\n'; }
  atomic_write(path, os.str());
}

void write_summary(const std::string& path, const RunSummary& s) {
  std::ostringstream os;
  os << "rmse_pre = " << fmt(s.rmse_pre) << '\n'
     << "rmse_post_full = " << fmt(s.rmse_post_full) << '\n'
     << "rmse_post_steady = " << fmt(s.rmse_post_steady) << '\n'
     << "recovery_time = " << s.recovery_time << '\n'
     << "violation_count_x = " << s.violation_count_x << '\n'
     << "violation_count_u = " << s.violation_count_u << '\n'
     << "relaxed_count = " << s.relaxed_count << '\n'
     << "max_cfi_burst = " << fmt(s.max_cfi_burst) << '\n'
     << "mean_cfi_pre = " << fmt(s.mean_cfi_pre) << '\n'
     << "median_cfi_pre = " << fmt(s.median_cfi_pre) << '\n'
     << "median_cfi_post = " << fmt(s.median_cfi_post) << '\n'
     << "cumulative_drift = " << fmt(s.cumulative_drift) << '\n'
     << "max_drift_norm = " << fmt(s.max_drift_norm) << '\n'
     << "max_abs_x1 = " << fmt(s.max_abs_x1) << '\n'
     << "max_abs_x2 = " << fmt(s.max_abs_x2) << '\n'
     << "max_abs_u = " << fmt(s.max_abs_u) << '\n';
  atomic_write(path, os.str());
}

std::vector<TraceRecord> read_trace_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) { throw std::runtime_error("cannot read " + path); }
  std::string line;
  if (!std::getline(is, line) || line != trace_csv_header()) {
    throw std::runtime_error("bad trace header in " + path);
  }
  std::vector<TraceRecord> out;
  while (std::getline(is, line)) {
    if (line.empty()) { continue; }
    std::istringstream ls(line);
    TraceRecord r;
    char c;
    int feasible, relaxed, vx, vu;
    ls >> r.t >> c >> r.x1 >> c >> r.x2 >> c >> r.ref >> c >> r.o1 >> c >> r.o2 >> c >> r.u >>
        c >> r.s_raw >> c >> r.s_shifted >> c >> r.alpha >> c >> r.cfi >> c >> r.drift_norm >>
        c >> r.max_margin >> c >> feasible >> c >> relaxed >> c >> vx >> c >> vu >> c >>
        r.belief_mean1 >> c >> r.belief_mean2 >> c >> r.belief_cov_trace;
    if (!ls) { throw std::runtime_error("bad trace row in " + path); }
    r.feasible = feasible != 0;
    r.relaxed = relaxed != 0;
    r.violation_x = vx != 0;
    r.violation_u = vu != 0;
    out.push_back(r);
  }
  return out;
}

}  // namespace cfc
