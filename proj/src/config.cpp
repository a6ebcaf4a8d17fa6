#include "cfc/config.hpp"

#include <cctype>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>

namespace cfc {

namespace {

double parse_double(const std::string& v) {
  try {
    size_t pos = 0;
    const double x = std::stod(v, &pos);
    while (pos < v.size() && std::isspace(static_cast<unsigned char>(v[pos]))) { ++pos; }
    if (pos != v.size()) { throw ConfigError("bad numeric value '" + v + "'"); }
    return x;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    throw ConfigError("bad numeric value '" + v + "'");
  }
}

long parse_long(const std::string& v) {
  try {
    size_t pos = 0;
    const long x = std::stol(v, &pos);
    while (pos < v.size() && std::isspace(static_cast<unsigned char>(v[pos]))) { ++pos; }
    if (pos != v.size()) { throw ConfigError("bad integer value '" + v + "'"); }
    return x;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    throw ConfigError("bad integer value '" + v + "'");
  }
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "on" || v == "1") { return true; }
  if (v == "false" || v == "off" || v == "0") { return false; }
  throw ConfigError("bad boolean value '" + v + "'");
}

Matrix parse_matrix2(const std::string& v) {
  std::istringstream is(v);
  Matrix m(2, 2);
  if (!(is >> m(0, 0) >> m(0, 1) >> m(1, 0) >> m(1, 1))) {
    throw ConfigError("expected four numbers, got '" + v + "'");
  }
  return m;
}

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) { return ""; }
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

ControllerKind controller_from_name(const std::string& name) {
  if (name == "cf") { return ControllerKind::Cf; }
  if (name == "nominal") { return ControllerKind::Nominal; }
  if (name == "robust") { return ControllerKind::Robust; }
  if (name == "fixed-model") { return ControllerKind::FixedModel; }
  if (name == "no-tightening") { return ControllerKind::NoTightening; }
  if (name == "no-rate-limit") { return ControllerKind::NoRateLimit; }
  throw ConfigError("unknown controller '" + name + "'");
}

std::string controller_name(ControllerKind kind) {
  switch (kind) {
    case ControllerKind::Cf: return "cf";
    case ControllerKind::Nominal: return "nominal";
    case ControllerKind::Robust: return "robust";
    case ControllerKind::FixedModel: return "fixed-model";
    case ControllerKind::NoTightening: return "no-tightening";
    case ControllerKind::NoRateLimit: return "no-rate-limit";
  }
  return "unknown";
}

ScenarioKind scenario_from_name(const std::string& name) {
  if (name == "abrupt") { return ScenarioKind::AbruptShift; }
  if (name == "obs-drift") { return ScenarioKind::ObservationDrift; }
  if (name == "gradual") { return ScenarioKind::GradualDrift; }
  if (name == "none") { return ScenarioKind::None; }
  throw ConfigError("unknown scenario '" + name + "'");
}

std::string scenario_name(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::AbruptShift: return "abrupt";
    case ScenarioKind::ObservationDrift: return "obs-drift";
    case ScenarioKind::GradualDrift: return "gradual";
    case ScenarioKind::None: return "none";
  }
  return "unknown";
}

void RunConfig::validate() const {
  scenario.validate();
  adapt.validate();
  mpc.validate();
  make_constraints().validate();
  if (steps <= 0) { throw ConfigError("run.steps must be > 0"); }
  if (scenario.kind != ScenarioKind::None) {
    if (steps <= scenario.t_s) { throw ConfigError("run.steps must exceed scenario.t_s"); }
    if (warmup_steps >= scenario.t_s) {
      throw ConfigError("run.warmup_steps must be below scenario.t_s");
    }
  }
  if (warmup_steps < 0 || warmup_steps >= steps) {
    throw ConfigError("run.warmup_steps must be in [0, steps)");
  }
  if (seeds_for_aggregate < 1) { throw ConfigError("run.seeds must be >= 1"); }
  if (!(model_sigma_w > 0.0 && model_sigma_v > 0.0)) {
    throw ConfigError("model noise stds must be > 0");
  }
  if (surprise_gate < 0.0) { throw ConfigError("adapt.surprise_gate must be >= 0"); }
  Eigen::LLT<Matrix> llt(filter_init.cov);
  if (llt.info() != Eigen::Success) { throw ConfigError("filter.p0 must be SPD"); }
}

void apply_config_line(RunConfig& cfg, const std::string& key, const std::string& value) {
  using Setter = std::function<void(RunConfig&, const std::string&)>;
  static const std::map<std::string, Setter> setters = {
      {"scenario.kind", [](RunConfig& c, const std::string& v) { c.scenario.kind = scenario_from_name(v); }},
      {"scenario.t_s", [](RunConfig& c, const std::string& v) { c.scenario.t_s = int(parse_long(v)); }},
      {"scenario.tau_c", [](RunConfig& c, const std::string& v) { c.scenario.tau_c = parse_double(v); }},
      {"scenario.tau_a", [](RunConfig& c, const std::string& v) { c.scenario.tau_a = parse_double(v); }},
      {"scenario.rho", [](RunConfig& c, const std::string& v) { c.scenario.rho = parse_double(v); }},
      {"scenario.sigma_w", [](RunConfig& c, const std::string& v) { c.scenario.sigma_w = parse_double(v); }},
      {"scenario.sigma_v", [](RunConfig& c, const std::string& v) { c.scenario.sigma_v = parse_double(v); }},
      {"scenario.delta_c", [](RunConfig& c, const std::string& v) { c.scenario.delta_c = parse_matrix2(v); }},
      {"scenario.noise", [](RunConfig& c, const std::string& v) { c.scenario.noise = parse_bool(v); }},
      {"run.steps", [](RunConfig& c, const std::string& v) { c.steps = int(parse_long(v)); }},
      {"run.warmup_steps", [](RunConfig& c, const std::string& v) { c.warmup_steps = int(parse_long(v)); }},
      {"run.seed", [](RunConfig& c, const std::string& v) { c.seed = std::uint64_t(parse_long(v)); }},
      {"run.seeds", [](RunConfig& c, const std::string& v) { c.seeds_for_aggregate = int(parse_long(v)); }},
      {"run.out_dir", [](RunConfig& c, const std::string& v) { c.out_dir = v; }},
      {"model.kind", [](RunConfig& c, const std::string& v) {
         if (v == "linear") { c.model_kind = ModelKind::Linear; }
         else if (v == "mlp") { c.model_kind = ModelKind::Mlp; }
         else { throw ConfigError("model.kind must be linear or mlp"); }
       }},
      {"model.sigma_w", [](RunConfig& c, const std::string& v) { c.model_sigma_w = parse_double(v); }},
      {"model.sigma_v", [](RunConfig& c, const std::string& v) { c.model_sigma_v = parse_double(v); }},
      {"adapt.eta_max", [](RunConfig& c, const std::string& v) { c.adapt.eta_max = parse_double(v); }},
      {"adapt.l_delta", [](RunConfig& c, const std::string& v) { c.adapt.l_delta = parse_double(v); }},
      {"adapt.epsilon", [](RunConfig& c, const std::string& v) { c.adapt.epsilon = parse_double(v); }},
      {"adapt.decay_p", [](RunConfig& c, const std::string& v) { c.adapt.decay_p = parse_double(v); }},
      {"adapt.decay_tau", [](RunConfig& c, const std::string& v) { c.adapt.decay_tau = parse_double(v); }},
      {"adapt.enabled", [](RunConfig& c, const std::string& v) { c.adapt.enabled = parse_bool(v); }},
      {"adapt.noise_coords", [](RunConfig& c, const std::string& v) { c.adapt_noise_coords = parse_bool(v); }},
      {"adapt.surprise_gate", [](RunConfig& c, const std::string& v) { c.surprise_gate = parse_double(v); }},
      {"mpc.horizon", [](RunConfig& c, const std::string& v) { c.mpc.horizon = int(parse_long(v)); }},
      {"mpc.q", [](RunConfig& c, const std::string& v) {
         std::istringstream is(v);
         double q1, q2;
         if (!(is >> q1 >> q2)) { throw ConfigError("mpc.q expects two numbers"); }
         c.mpc.Q = Matrix::Zero(2, 2);
         c.mpc.Q(0, 0) = q1;
         c.mpc.Q(1, 1) = q2;
       }},
      {"mpc.r", [](RunConfig& c, const std::string& v) { c.mpc.R = parse_double(v); }},
      {"mpc.terminal", [](RunConfig& c, const std::string& v) {
         if (v == "riccati") { c.mpc.terminal = TerminalWeight::Riccati; }
         else if (v == "scaled_q") { c.mpc.terminal = TerminalWeight::ScaledQ; }
         else { throw ConfigError("mpc.terminal must be riccati or scaled_q"); }
       }},
      {"mpc.beta_fixed", [](RunConfig& c, const std::string& v) { c.mpc.beta_fixed = parse_double(v); }},
      {"mpc.qp_tol_abs", [](RunConfig& c, const std::string& v) { c.mpc.qp.tol_abs = parse_double(v); }},
      {"mpc.qp_tol_rel", [](RunConfig& c, const std::string& v) { c.mpc.qp.tol_rel = parse_double(v); }},
      {"mpc.qp_max_iter", [](RunConfig& c, const std::string& v) { c.mpc.qp.max_iter = int(parse_long(v)); }},
      {"constraints.x1_max", [](RunConfig& c, const std::string& v) { c.x1_max = parse_double(v); }},
      {"constraints.x2_max", [](RunConfig& c, const std::string& v) { c.x2_max = parse_double(v); }},
      {"constraints.u_max", [](RunConfig& c, const std::string& v) { c.u_max = parse_double(v); }},
      {"constraints.c_sens", [](RunConfig& c, const std::string& v) { c.c_sens = parse_double(v); }},
      {"constraints.delta", [](RunConfig& c, const std::string& v) { c.chance_delta = parse_double(v); }},
      {"filter.mean", [](RunConfig& c, const std::string& v) {
         std::istringstream is(v);
         if (!(is >> c.filter_init.mean(0) >> c.filter_init.mean(1))) {
           throw ConfigError("filter.mean expects two numbers");
         }
       }},
      {"filter.p0", [](RunConfig& c, const std::string& v) { c.filter_init.cov = parse_matrix2(v); }},
  };
  const auto it = setters.find(key);
  if (it == setters.end()) { throw ConfigError("unknown config key '" + key + "'"); }
  it->second(cfg, value);
}

void load_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream is(path);
  if (!is) { throw ConfigError("cannot open config file: " + path); }
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) { line = line.substr(0, hash); }
    line = trim(line);
    if (line.empty()) { continue; }
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
    }
    apply_config_line(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

std::string dump_config(const RunConfig& cfg) {
  std::ostringstream os;
  os << "scenario.kind = " << scenario_name(cfg.scenario.kind) << "\n"
     << "scenario.t_s = " << cfg.scenario.t_s << "\n"
     << "scenario.tau_c = " << cfg.scenario.tau_c << "\n"
     << "scenario.tau_a = " << cfg.scenario.tau_a << "\n"
     << "scenario.rho = " << cfg.scenario.rho << "\n"
     << "scenario.sigma_w = " << cfg.scenario.sigma_w << "\n"
     << "scenario.sigma_v = " << cfg.scenario.sigma_v << "\n"
     << "scenario.delta_c = " << cfg.scenario.delta_c(0, 0) << " " << cfg.scenario.delta_c(0, 1)
     << " " << cfg.scenario.delta_c(1, 0) << " " << cfg.scenario.delta_c(1, 1) << "\n"
     << "scenario.noise = " << (cfg.scenario.noise ? "on" : "off") << "\n"
     << "run.steps = " << cfg.steps << "\n"
     << "run.warmup_steps = " << cfg.warmup_steps << "\n"
     << "run.seed = " << cfg.seed << "\n"
     << "run.seeds = " << cfg.seeds_for_aggregate << "\n"
     << "run.out_dir = " << cfg.out_dir << "\n"
     << "model.kind = " << (cfg.model_kind == ModelKind::Linear ? "linear" : "mlp") << "\n"
     << "model.sigma_w = " << cfg.model_sigma_w << "\n"
     << "model.sigma_v = " << cfg.model_sigma_v << "\n"
     << "adapt.eta_max = " << cfg.adapt.eta_max << "\n"
     << "adapt.l_delta = " << cfg.adapt.l_delta << "\n"
     << "adapt.epsilon = " << cfg.adapt.epsilon << "\n"
     << "adapt.decay_p = " << cfg.adapt.decay_p << "\n"
     << "adapt.decay_tau = " << cfg.adapt.decay_tau << "\n"
     << "adapt.enabled = " << (cfg.adapt.enabled ? "on" : "off") << "\n"
     << "adapt.noise_coords = " << (cfg.adapt_noise_coords ? "on" : "off") << "\n"
     << "adapt.surprise_gate = " << cfg.surprise_gate << "\n"
     << "mpc.horizon = " << cfg.mpc.horizon << "\n"
     << "mpc.q = " << cfg.mpc.Q(0, 0) << " " << cfg.mpc.Q(1, 1) << "\n"
     << "mpc.r = " << cfg.mpc.R << "\n"
     << "mpc.terminal = " << (cfg.mpc.terminal == TerminalWeight::Riccati ? "riccati" : "scaled_q")
     << "\n"
     << "mpc.beta_fixed = " << cfg.mpc.beta_fixed << "\n"
     << "mpc.qp_tol_abs = " << cfg.mpc.qp.tol_abs << "\n"
     << "mpc.qp_tol_rel = " << cfg.mpc.qp.tol_rel << "\n"
     << "mpc.qp_max_iter = " << cfg.mpc.qp.max_iter << "\n"
     << "constraints.x1_max = " << cfg.x1_max << "\n"
     << "constraints.x2_max = " << cfg.x2_max << "\n"
     << "constraints.u_max = " << cfg.u_max << "\n"
     << "constraints.c_sens = " << cfg.c_sens << "\n"
     << "constraints.delta = " << cfg.chance_delta << "\n"
     << "filter.mean = " << cfg.filter_init.mean(0) << " " << cfg.filter_init.mean(1) << "\n"
     << "filter.p0 = " << cfg.filter_init.cov(0, 0) << " " << cfg.filter_init.cov(0, 1) << " "
     << cfg.filter_init.cov(1, 0) << " " << cfg.filter_init.cov(1, 1) << "\n";
  return os.str();
}

void apply_stress_preset(RunConfig& cfg) {
  cfg.scenario.sigma_w = 0.05;
  cfg.model_sigma_w = 0.05;   // model noise at the true (amplified) scale
  cfg.model_sigma_v = cfg.scenario.sigma_v;
  cfg.x1_max = 1.0;           // the sinusoid now pushes against the box
  cfg.x2_max = 1.0;
  cfg.chance_delta = 1e-6;    // margins sized for a zero-violation budget
}

}  // namespace cfc
