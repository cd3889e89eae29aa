#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace platoonctl {

/// Vehicle classes of the multi-class model. `a` is the controlled platoon
/// class, `b` mainstream-bound and `c` off-ramp-bound background traffic.
enum class VehicleClass : int { a = 0, b = 1, c = 2 };
inline constexpr int kNumClasses = 3;

constexpr int index_of(VehicleClass k) noexcept { return static_cast<int>(k); }
char class_letter(VehicleClass k) noexcept;

enum class ControlCase { none, noramp, wramp, ideal };
std::string_view to_string(ControlCase c) noexcept;
ControlCase parse_control_case(std::string_view s);

/// Triangular fundamental diagram with a linear capacity drop.
struct FundamentalDiagram {
  double free_flow_speed = 100.0;           // km/h
  double critical_density_per_lane = 20.0;  // veh/km
  double jam_density_per_lane = 180.0;      // veh/km
  double capacity_drop = 0.4;               // alpha

  double critical_density(int lanes) const noexcept { return lanes * critical_density_per_lane; }
  double jam_density(int lanes) const noexcept { return lanes * jam_density_per_lane; }
  double capacity(int lanes) const noexcept { return free_flow_speed * critical_density(lanes); }
  /// Congestion wave speed; the lane count cancels out.
  double wave_speed() const noexcept {
    return free_flow_speed * critical_density_per_lane /
           (jam_density_per_lane - critical_density_per_lane);
  }
};

struct OnRamp {
  double position = 2.0;  // km, mainline cell starting here receives the flow
};

struct OffRamp {
  double position = 3.0;     // km, cell ending here feeds the ramp
  double capacity = 2000.0;  // veh/h
  double split_ratio = 0.4;  // R_k used by the ramp-aware controller
  bool protected_ramp = true;
};

struct RoadGeometry {
  double length = 5.0;         // km
  double cell_length = 0.02;   // km
  int lanes = 3;               // upstream of the lane drop
  int bottleneck_lanes = 2;    // downstream of the lane drop
  double bottleneck_position = 4.92;  // km, X_b
  std::vector<OnRamp> onramps{OnRamp{}};
  std::vector<OffRamp> offramps{OffRamp{}};

  int cells() const noexcept;
  /// First cell (0-based) with the reduced lane count.
  int first_bottleneck_cell() const noexcept;
  int lanes_of_cell(int i) const noexcept;
  /// 0-based index of the cell receiving on-ramp k.
  int onramp_cell(std::size_t k) const noexcept;
  /// 0-based index of the cell feeding off-ramp k.
  int offramp_cell(std::size_t k) const noexcept;
};

struct TimeGrid {
  double step = 0.0002;  // h
  int total_steps = 10000;
  int warmup_steps = 250;
  int cooldown_steps = 1000;

  double horizon() const noexcept { return step * total_steps; }
};

/// One stochastic inflow: uniform in [mean - half_width, mean + half_width],
/// redrawn every hold interval.
struct DemandStream {
  std::string origin = "mainline";  // "mainline" or "onrampK" (1-based)
  VehicleClass vehicle_class = VehicleClass::b;
  double mean = 0.0;        // veh/h
  double half_width = 0.0;  // veh/h

  double max() const noexcept { return mean + half_width; }
  double min() const noexcept { return mean - half_width; }
};

struct DemandProcess {
  std::vector<DemandStream> streams;
  double hold_interval = 0.004;  // h
  double warm_factor = 0.5;      // multiplier during warm-up and cool-down
};

struct PlatoonProcess {
  double arrival_rate = 81.0;  // platoons/h
  double size = 2.0;           // PCE
  double min_speed = 50.0;     // km/h
  double max_speed = 90.0;     // km/h
  double approach_zone = 1.0;  // km upstream of X_b where platoons revert to one lane

  double one_lane_density(const FundamentalDiagram& fd) const noexcept {
    return fd.critical_density_per_lane;
  }
  double two_lane_density(const FundamentalDiagram& fd) const noexcept {
    return 2.0 * fd.critical_density_per_lane;
  }
};

struct ControllerSettings {
  int replan_interval_steps = 20;
  double speed_search_step = 1.0;  // km/h
  double ideal_min_speed = 10.0;   // km/h, floor of the ideal law
};

struct ScenarioConfig {
  FundamentalDiagram fd;
  RoadGeometry road;
  TimeGrid time;
  DemandProcess demand;
  PlatoonProcess platoons;
  ControllerSettings controller;
  ControlCase control = ControlCase::none;
  std::uint64_t seed = 1;

  double sigma_up() const noexcept { return fd.critical_density(road.lanes); }
  double sigma_down() const noexcept { return fd.critical_density(road.bottleneck_lanes); }
  /// Bottleneck capacity V sigma_+.
  double q_cap() const noexcept { return fd.capacity(road.bottleneck_lanes); }
  /// Overtaking flow past a one-lane platoon, V (sigma_- - sigma_l), capped
  /// at the bottleneck capacity.
  double q_hi() const noexcept;
  /// Overtaking flow past a two-lane platoon, V (sigma_- - 2 sigma_l).
  double q_lo() const noexcept;
  double mean_inflow(std::string_view origin, VehicleClass k) const noexcept;
};

/// Configuration problems. Parse errors carry the offending line.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& what, int line = 0)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

struct Violation {
  std::string name;
  std::string detail;
};
using ValidationReport = std::vector<Violation>;

ValidationReport validate(const ScenarioConfig& config);

/// Highway scenario with an on-ramp, an off-ramp and a 3-to-2 lane drop.
ScenarioConfig reference_scenario();

/// Flat `section.key = value` text; `#` starts a comment.
ScenarioConfig parse_config(std::string_view text);
ScenarioConfig load_config(const std::filesystem::path& path);
/// Canonical text form: fixed key order, shortest round-trip numbers.
std::string serialize_config(const ScenarioConfig& config);

}  // namespace platoonctl
