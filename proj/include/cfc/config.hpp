#pragma once

#include <cstdint>
#include <string>

#include "cfc/adapt.hpp"
#include "cfc/filter.hpp"
#include "cfc/mpc.hpp"
#include "cfc/plant.hpp"

namespace cfc {

/// Everything a closed-loop run needs. Loadable from a flat `key = value`
/// file with dotted section prefixes; unknown keys are errors.
struct RunConfig {
  ScenarioSpec scenario;
  int steps = 600;
  int warmup_steps = 200;
  std::uint64_t seed = 0;
  int seeds_for_aggregate = 20;

  ModelKind model_kind = ModelKind::Linear;
  // Model noise covariances act as conservative uncertainty proxies: wider
  // than the plant's true noise, held fixed during adaptation (see
  // adapt_noise_coords). Tightening margins and the filter gain both read
  // them, so they are safety-side constants rather than fitted quantities.
  double model_sigma_w = 0.1;   // model process-noise std
  double model_sigma_v = 0.1;   // model measurement-noise std
  bool adapt_noise_coords = false;  // gradient steps move (A, B, C) only
  double surprise_gate = 0.05;      // adapt only when S_shifted exceeds this

  AdaptConfig adapt;
  MpcConfig mpc;

  double x1_max = 3.0, x2_max = 3.0, u_max = 2.0;
  double c_sens = 0.02;
  double chance_delta = 0.05;

  FilterInit filter_init;
  std::string out_dir = "results";

  ConstraintSet make_constraints() const {
    return ConstraintSet::box(x1_max, x2_max, u_max, c_sens, chance_delta);
  }

  void validate() const;
};

/// Applies one `section.key = value` assignment; throws ConfigError on
/// unknown keys or malformed values.
void apply_config_line(RunConfig& cfg, const std::string& key, const std::string& value);

/// Loads assignments from a file (`#` comments, one per line).
void load_config_file(RunConfig& cfg, const std::string& path);

/// Writes every key with its current value (the shipped default config).
std::string dump_config(const RunConfig& cfg);

/// Amplified-noise stress preset: sigma_w = 0.05, a task box the reference
/// actually pushes against, a much smaller chance level, and model noise
/// held at the plant's true scales.
void apply_stress_preset(RunConfig& cfg);

ControllerKind controller_from_name(const std::string& name);
std::string controller_name(ControllerKind kind);
ScenarioKind scenario_from_name(const std::string& name);
std::string scenario_name(ScenarioKind kind);

}  // namespace cfc
