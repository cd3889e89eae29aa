#pragma once

#include <vector>

#include "platoonctl/mcctm.hpp"
#include "platoonctl/platoon.hpp"
#include "platoonctl/queue_predictor.hpp"

namespace platoonctl {

// ---- Ideal per-class actuation ----

/// Class-b target density per cell (0..bottleneck cell): sigma_+ minus the
/// one-lane platoon density for cells whose free-flow arrival at X_b falls
/// inside a platoon's passage, sigma_+ elsewhere.
std::vector<double> ideal_target_density(const ScenarioConfig& config, const std::vector<PlatoonState>& platoons);

/// Deadbeat class-b speeds for cells 0..rho_b.size()-1; the last cell moves at V.
std::vector<double> ideal_speed_field(const std::vector<double>& rho_b, const std::vector<double>& target,
                                      double free_flow_speed, double min_speed);

/// Writes the ideal class-b speeds into the engine.
void apply_ideal_field(CtmEngine& engine, const ScenarioConfig& config, const std::vector<PlatoonState>& platoons);

// ---- Cap laws ----

double reference_flow(double q_hi, double platoon_inflow) noexcept;

struct CapLawInputs {
  double t = 0.0;
  double n_b = 0.0;
  double prev_arrival = 0.0;  // t_{p-1}^u, -inf for the most downstream platoon
  double prev_queue = 0.0;    // queue at the downstream platoon
  double prev_cap = 0.0;      // cap of the downstream platoon at t
  double q_ref = 0.0;
  double q_hi = 0.0;
  double q_lo = 0.0;
  bool protected_between = false;  // a protected off-ramp lies between this platoon and the next downstream one
  double epsilon = 1e-9;
};

double cap_law_noramp(const CapLawInputs& in) noexcept;
double cap_law_wramp(const CapLawInputs& in) noexcept;

/// Cap schedule of platoon p from a prediction, with bottleneck-time origin `now`.
CapSchedule cap_schedule(const Prediction& prediction, std::size_t p, double now);

// ---- Speed planning ----

/// Closed-form leader speed when the follower's free-flow event precedes the
/// leader's arrival.
double closed_form_leader_speed(double q_hi, double q_lo, double distance, double queue_at_follower_event,
                                double clear_start) noexcept;

/// Queue at the leader when the follower's free-flow event arrives, under
/// the lower cap from the leader's own free-flow event.
double leader_queue_at(const QueueSnapshot& snapshot, double follower_event, const PredictorConfig& cfg);

/// Upper speed bound that keeps platoon p from catching the downstream one.
double no_merge_bound(double u_max, double x_p, double x_prev, double u_prev, double l_prev,
                      double bottleneck) noexcept;

struct SpeedSolution {
  double u = 0.0;
  bool feasible = false;
  bool closed_form = false;
};

/// Largest speed in [u_min, bound] such that platoon p's queue is empty on
/// arrival and the bottleneck queue stays empty from its clearance time
/// until arrival. Platoons 0..p-1 in `snapshot` keep their speeds.
SpeedSolution solve_platoon_speed(QueueSnapshot snapshot, std::size_t p, double bound, const RampForecast& forecast,
                                  const PredictorConfig& cfg, const ScenarioConfig& config);

/// Forecast for the ramp-aware law: mean on-ramp flows and splitting ratios.
RampForecast predict_ramp_flows(const ScenarioConfig& config, double demand_factor = 1.0);

/// Off-ramp flow forecast, negative for vehicles leaving.
double offramp_forecast(double feeding_flow, double upstream_ramp_flow, double split_ratio) noexcept;

struct PlanEntry {
  int id = 0;
  double u = 0.0;
  bool feasible = true;
  CapSchedule schedule;
};

struct Plan {
  std::vector<PlanEntry> entries;  // downstream first
  Prediction prediction;
};

/// Speeds and cap schedules for every platoon upstream of the bottleneck.
Plan plan_platoons(const QueueSnapshot& snapshot, const RampForecast& forecast, CapPolicy policy,
                   const ScenarioConfig& config, double now);

/// Bottleneck time from which a platoon driving at u is in the approach zone.
double approach_time(double x, double u, double bottleneck, double zone, double free_flow_speed) noexcept;

}  // namespace platoonctl
