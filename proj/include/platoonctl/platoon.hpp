#pragma once

#include <vector>

#include "platoonctl/mcctm.hpp"
#include "platoonctl/rng.hpp"

namespace platoonctl {

enum class LaneMode { one_lane, two_lane };
std::string_view to_string(LaneMode m) noexcept;

/// Cap schedule in bottleneck-arrival time: value k applies to overtaking
/// flow that reaches X_b at origin + k * step.
struct CapSchedule {
  double origin = 0.0;  // h, absolute
  double step = 0.0;    // h
  std::vector<double> cap;  // veh/h
  bool empty() const noexcept { return cap.empty(); }
  /// Value at absolute bottleneck time `t`; the last entry extends forward.
  double at(double t) const noexcept;
};

struct PlatoonState {
  int id = 0;
  double x = 0.0;       // head, km
  double u = 0.0;       // km/h
  LaneMode lane = LaneMode::one_lane;
  double size = 2.0;    // PCE
  double rho_ref = 20.0;
  double length = 0.1;  // km
  double arrival_time = 0.0;  // h, Poisson arrival
  double entry_time = 0.0;    // h, head crossed x = 0
  double commanded_speed = 0.0;
  CapSchedule schedule;
  bool in_approach = false;
  bool infeasible = false;

  double tail() const noexcept { return x - length; }
};

/// Poisson arrival times on [0, horizon).
std::vector<double> spawn_arrivals(Rng& rng, double rate, double horizon);

/// Steady-state background flow past a platoon occupying `rho_ref` of a cell
/// with critical density `sigma`.
double overtaking_flow(double free_flow_speed, double sigma, double rho_ref) noexcept;

struct ImposeScratch {
  std::vector<double> planned;  // planned class-a outflow per engine cell
};

/// Sets the class-a speed field so that, in free flow, every platoon's class-a
/// densities become its reference profile after one step. Cells before a
/// platoon's head up to the midpoint toward the next platoon hold stray
/// class-a at zero speed; the rest move at V. `platoons` must be ordered
/// downstream first.
void impose_platoon_field(CtmEngine& engine, const std::vector<PlatoonState>& platoons, double step,
                          ImposeScratch* scratch = nullptr);

/// Class-a density of a platoon's reference profile in cell j.
double reference_density(const PlatoonState& p, int j, double cell_length) noexcept;

/// Owns the platoons of one run.
class PlatoonFleet {
 public:
  PlatoonFleet(const ScenarioConfig& config, std::vector<double> arrivals);

  /// Ghost cells the engine needs upstream of the road.
  static int ghost_cells(const ScenarioConfig& config);

  /// Admits pending arrivals whose head may enter at x = 0.
  /// Returns the number admitted.
  int admit(double now, CtmEngine& engine);
  /// Applies lane mode from schedules and the approach-zone rule.
  void apply_commands(double now);
  void impose(CtmEngine& engine);
  /// Moves platoons after the engine step. Returns the number retired.
  int advance(const CtmEngine& engine);

  std::vector<PlatoonState>& platoons() noexcept { return platoons_; }
  const std::vector<PlatoonState>& platoons() const noexcept { return platoons_; }
  std::size_t pending() const noexcept { return arrivals_.size() - next_arrival_; }
  const std::vector<double>& arrivals() const noexcept { return arrivals_; }

  void set_lane(PlatoonState& p, LaneMode m) const noexcept;

 private:
  const ScenarioConfig* cfg_;
  std::vector<double> arrivals_;
  std::size_t next_arrival_ = 0;
  std::vector<PlatoonState> platoons_;
  int next_id_ = 1;
  ImposeScratch scratch_;
};

}  // namespace platoonctl
