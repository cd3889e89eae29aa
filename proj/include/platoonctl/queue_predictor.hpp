#pragma once

#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "platoonctl/mcctm.hpp"
#include "platoonctl/platoon.hpp"

namespace platoonctl {

inline constexpr double kNever = std::numeric_limits<double>::infinity();

struct EventTimes {
  double at_free_flow;  // t_p^V: free-flow characteristic from the head reaches X_b
  double at_platoon;    // t_p^u: the platoon reaches X_b
};

class PredictorError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Throws PredictorError when u <= 0.
EventTimes event_times(double x, double u, double bottleneck, double free_flow_speed);

/// Position whose flow, leaving the platoon, is the flow reaching the
/// bottleneck `t` after the platoon's free-flow event time.
double upstream_tail_position(double x, double u, double free_flow_speed, double t) noexcept;

struct RampForecastEntry {
  double position = 0.0;  // km
  bool onramp = true;
  double flow = 0.0;         // veh/h entering (on-ramps)
  double split_ratio = 0.0;  // R_k (off-ramps)
  bool protected_ramp = false;
};

/// Ramp flows used by the predictor, sorted by position.
struct RampForecast {
  std::vector<RampForecastEntry> ramps;
  bool empty() const noexcept { return ramps.empty(); }
};

struct PredictorPlatoon {
  int id = 0;
  double x = 0.0;              // head position, km
  double u = 0.0;              // mean speed to the bottleneck, km/h
  double length = 0.1;         // one-lane length used while passing the bottleneck, km
  double size = 2.0;           // PCE
  double initial_queue = 0.0;  // queue held behind the platoon at its free-flow event time
  /// Bottleneck time from which the platoon is forced to one lane.
  double one_lane_from = kNever;
  /// Forces the lower cap on the whole window (maximum control effort).
  bool force_low = false;
  /// Used by the fixed policy; entry k applies on [k dt, (k+1) dt).
  std::vector<double> cap;
};

struct QueueSnapshot {
  std::vector<double> rho;  // background density per cell, veh/km
  double cell_length = 0.02;
  double upstream_density = 0.0;  // background density upstream of the road
  double n_b = 0.0;
  std::vector<PredictorPlatoon> platoons;  // downstream first

  /// Background density at position y at the snapshot time.
  double density_at(double y) const noexcept;
};

enum class MergeRule {
  /// Platoon queue joins the bottleneck queue on arrival and the platoon's own
  /// flow adds to the bottleneck inflow while it passes.
  inflow_pulse,
  /// Platoon vehicles and queue join only a congested bottleneck.
  congested_jump,
};

enum class CapPolicy { fixed, noramp, wramp };

struct PredictorConfig {
  double free_flow_speed = 100.0;
  double bottleneck = 4.92;
  double q_cap = 4000.0;
  double q_dis = 3272.727;
  double q_hi = 4000.0;
  double q_lo = 2000.0;
  double sigma_lane = 20.0;
  double step = 0.0002;
  int horizon_steps = 0;
  MergeRule merge = MergeRule::inflow_pulse;
  CapPolicy policy = CapPolicy::fixed;
  double queue_epsilon = 1e-9;

  static PredictorConfig from(const ScenarioConfig& config);
};

struct RampSets {
  std::vector<int> bottleneck_from_platoon;  // K_p^b for the platoon feeding X_b (p given)
  std::vector<int> bottleneck_from_profile;  // K_rho^b
  std::vector<int> platoon_from_platoon;     // K_{p+1}^p
  std::vector<int> platoon_from_profile;     // K_rho^p
};

/// Ramp memberships at bottleneck time t for receiver platoon p (0-based)
/// and its upstream neighbour. Indices refer to `forecast.ramps`.
RampSets ramp_sets(double t, const std::vector<PredictorPlatoon>& platoons, std::size_t p,
                   const RampForecast& forecast, const PredictorConfig& cfg);

struct Prediction {
  std::vector<double> n_b, q_b_in, q_b_out;
  std::vector<std::vector<double>> n_p, cap_p, out_p;
  std::vector<EventTimes> events;
  std::vector<double> queue_at_arrival;  // platoon queue when it reaches X_b
  double decongestion_time = 0.0;        // time after which n_b stays 0 (kNever if not within horizon)
  double step = 0.0;

  double time(int k) const noexcept { return k * step; }
  int steps() const noexcept { return static_cast<int>(n_b.size()); }
};

/// Integrates the bottleneck and platoon queues over the horizon.
Prediction predict(const QueueSnapshot& snapshot, const RampForecast& forecast, const PredictorConfig& cfg);

/// Snapshot of the queueing state from the engine and the platoons on the
/// road. `upstream_density` is the mean background density entering.
QueueSnapshot snapshot_from_ctm(const CtmEngine& engine, const std::vector<PlatoonState>& platoons,
                                const ScenarioConfig& config, double upstream_density);

}  // namespace platoonctl
