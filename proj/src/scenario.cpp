#include "platoonctl/scenario.hpp"

#include <algorithm>
#include <cmath>

namespace platoonctl {

namespace {

bool near_integer(double x, double tol = 1e-6) { return std::abs(x - std::round(x)) <= tol; }

std::string num(double v) {
  char buf[64];
  int n = std::snprintf(buf, sizeof buf, "%.12g", v);
  return std::string(buf, n);
}

}  // namespace

char class_letter(VehicleClass k) noexcept {
  switch (k) {
    case VehicleClass::a: return 'a';
    case VehicleClass::b: return 'b';
    case VehicleClass::c: return 'c';
  }
  return '?';
}

std::string_view to_string(ControlCase c) noexcept {
  switch (c) {
    case ControlCase::none: return "none";
    case ControlCase::noramp: return "noramp";
    case ControlCase::wramp: return "wramp";
    case ControlCase::ideal: return "ideal";
  }
  return "none";
}

ControlCase parse_control_case(std::string_view s) {
  if (s == "none") return ControlCase::none;
  if (s == "noramp") return ControlCase::noramp;
  if (s == "wramp") return ControlCase::wramp;
  if (s == "ideal") return ControlCase::ideal;
  throw ConfigError("unknown control case '" + std::string(s) + "'");
}

int RoadGeometry::cells() const noexcept {
  return static_cast<int>(std::lround(length / cell_length));
}

int RoadGeometry::first_bottleneck_cell() const noexcept {
  return static_cast<int>(std::lround(bottleneck_position / cell_length));
}

int RoadGeometry::lanes_of_cell(int i) const noexcept {
  return i >= first_bottleneck_cell() ? bottleneck_lanes : lanes;
}

int RoadGeometry::onramp_cell(std::size_t k) const noexcept {
  return static_cast<int>(std::lround(onramps[k].position / cell_length));
}

int RoadGeometry::offramp_cell(std::size_t k) const noexcept {
  return static_cast<int>(std::lround(offramps[k].position / cell_length)) - 1;
}

double ScenarioConfig::q_hi() const noexcept {
  return std::min(fd.free_flow_speed * (sigma_up() - platoons.one_lane_density(fd)), q_cap());
}

double ScenarioConfig::q_lo() const noexcept {
  return fd.free_flow_speed * (sigma_up() - platoons.two_lane_density(fd));
}

double ScenarioConfig::mean_inflow(std::string_view origin, VehicleClass k) const noexcept {
  double sum = 0.0;
  for (const auto& s : demand.streams)
    if (s.origin == origin && s.vehicle_class == k) sum += s.mean;
  return sum;
}

ValidationReport validate(const ScenarioConfig& c) {
  ValidationReport r;
  auto fail = [&r](std::string name, std::string detail) {
    r.push_back({std::move(name), std::move(detail)});
  };
  const auto& fd = c.fd;
  const auto& road = c.road;
  const double V = fd.free_flow_speed;
  const double L = road.cell_length;

  if (!(V > 0)) fail("V > 0", "free_flow_speed = " + num(V));
  if (!(fd.critical_density_per_lane > 0 && fd.critical_density_per_lane < fd.jam_density_per_lane))
    fail("0 < sigma_l < P_l", "sigma_l = " + num(fd.critical_density_per_lane) +
                                  ", P_l = " + num(fd.jam_density_per_lane));
  if (!(fd.capacity_drop >= 0 && fd.capacity_drop < 1))
    fail("0 <= alpha < 1", "alpha = " + num(fd.capacity_drop));

  if (!(L > 0) || !(road.length > 0)) {
    fail("N L = length", "non-positive length");
  } else if (!near_integer(road.length / L)) {
    fail("N L = length", "length " + num(road.length) + " is not a multiple of L = " + num(L));
  }
  if (c.time.step > 0 && std::abs(L - V * c.time.step) > 1e-9 * std::max(1.0, L))
    fail("L = V T", "L = " + num(L) + ", V T = " + num(V * c.time.step));
  if (!(road.bottleneck_lanes >= 1 && road.bottleneck_lanes < road.lanes))
    fail("lane drop at bottleneck",
         "lanes " + std::to_string(road.lanes) + " -> " + std::to_string(road.bottleneck_lanes));
  if (L > 0) {
    if (!(road.bottleneck_position > 0 && road.bottleneck_position < road.length))
      fail("0 < X_b < length", "X_b = " + num(road.bottleneck_position));
    else if (!near_integer(road.bottleneck_position / L))
      fail("X_b on a cell boundary", "X_b = " + num(road.bottleneck_position));
  }
  auto check_ramp = [&](const char* kind, std::size_t k, double x) {
    std::string id = std::string(kind) + std::to_string(k + 1);
    if (!(x > 0 && x < road.bottleneck_position))
      fail("ramp inside (0, X_b)", id + " at " + num(x));
    else if (L > 0 && !near_integer(x / L))
      fail("ramp on a cell boundary", id + " at " + num(x));
  };
  for (std::size_t k = 0; k < road.onramps.size(); ++k) check_ramp("onramp", k, road.onramps[k].position);
  for (std::size_t k = 0; k < road.offramps.size(); ++k) {
    const auto& o = road.offramps[k];
    check_ramp("offramp", k, o.position);
    if (!(o.capacity > 0)) fail("off-ramp capacity > 0", "offramp" + std::to_string(k + 1));
    if (!(o.split_ratio >= 0 && o.split_ratio <= 1))
      fail("0 <= R_k <= 1", "offramp" + std::to_string(k + 1) + " R = " + num(o.split_ratio));
  }

  if (!(c.time.step > 0)) fail("T > 0", "step = " + num(c.time.step));
  if (c.time.warmup_steps < 0 || c.time.cooldown_steps < 0 ||
      c.time.warmup_steps + c.time.cooldown_steps >= c.time.total_steps)
    fail("warmup + cooldown < total steps",
         std::to_string(c.time.warmup_steps) + " + " + std::to_string(c.time.cooldown_steps) +
             " vs " + std::to_string(c.time.total_steps));

  for (const auto& s : c.demand.streams) {
    const std::string id = s.origin + "." + class_letter(s.vehicle_class);
    if (s.half_width < 0 || s.min() < 0) fail("mean - half_width >= 0", id);
    bool ok_origin = s.origin == "mainline";
    if (!ok_origin && s.origin.rfind("onramp", 0) == 0) {
      const std::string idx = s.origin.substr(6);
      const int k = idx.empty() ? 0 : std::atoi(idx.c_str());
      ok_origin = k >= 1 && static_cast<std::size_t>(k) <= road.onramps.size();
    }
    if (!ok_origin) fail("demand origin exists", id);
    if (s.vehicle_class == VehicleClass::a) fail("platoon class has no background demand", id);
  }
  if (c.time.step > 0 && !(c.demand.hold_interval > 0 && near_integer(c.demand.hold_interval / c.time.step)))
    fail("hold interval multiple of T", "hold = " + num(c.demand.hold_interval));
  if (!(c.demand.warm_factor >= 0)) fail("warm factor >= 0", num(c.demand.warm_factor));

  const auto& pp = c.platoons;
  if (!(pp.arrival_rate >= 0)) fail("lambda >= 0", num(pp.arrival_rate));
  if (!(pp.size > 0)) fail("platoon size > 0", num(pp.size));
  if (!(pp.min_speed > 0)) fail("U_min > 0", num(pp.min_speed));
  if (!(pp.min_speed <= pp.max_speed)) fail("U_min <= U_max", num(pp.min_speed) + " > " + num(pp.max_speed));
  if (!(pp.max_speed < V)) fail("U_max < V", "U_max = " + num(pp.max_speed) + ", V = " + num(V));
  const double shortest = pp.size / pp.two_lane_density(fd);
  if (!(shortest >= 2 * L - 1e-12))
    fail("platoon shorter than 2L", "n/rho*_2 = " + num(shortest) + " km, 2L = " + num(2 * L) + " km");
  if (!(pp.approach_zone >= 0)) fail("approach zone >= 0", num(pp.approach_zone));
  if (fd.critical_density(road.lanes) <= pp.two_lane_density(fd))
    fail("two-lane platoon leaves a lane free", "");

  if (c.controller.replan_interval_steps < 1) fail("replan interval >= 1", "");
  if (!(c.controller.speed_search_step > 0)) fail("speed search step > 0", "");
  if (!(c.controller.ideal_min_speed >= 0 && c.controller.ideal_min_speed <= V))
    fail("0 <= U_min^b <= V", num(c.controller.ideal_min_speed));
  return r;
}

ScenarioConfig reference_scenario() {
  ScenarioConfig c;
  c.demand.streams = {
      {"mainline", VehicleClass::b, 1500.0, 500.0},
      {"mainline", VehicleClass::c, 1000.0, 250.0},
      {"onramp1", VehicleClass::b, 1200.0, 300.0},
      {"onramp1", VehicleClass::c, 0.0, 0.0},
  };
  c.road.offramps[0].split_ratio = 1000.0 / (1500.0 + 1000.0);
  return c;
}

}  // namespace platoonctl
