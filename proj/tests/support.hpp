#pragma once

#include <cmath>
#include <vector>

#include "platoonctl/mcctm.hpp"
#include "platoonctl/platoon.hpp"

namespace platoonctl::testing {

/// One-platoon engine rig on a ramp-free road.
struct PlatoonRig {
  ScenarioConfig config;
  PlatoonFleet fleet;
  CtmEngine engine;
  CtmInputs inputs;
  int steps = 0;

  explicit PlatoonRig(ScenarioConfig c, std::vector<double> arrivals = {0.0})
      : config(strip(std::move(c))),
        fleet(config, std::move(arrivals)),
        engine(config, PlatoonFleet::ghost_cells(config)) {}

  static ScenarioConfig strip(ScenarioConfig c) {
    c.road.onramps.clear();
    c.road.offramps.clear();
    return c;
  }

  /// Admits, holds every platoon at speed u in the given lane mode, steps once.
  void step(double u, LaneMode lane = LaneMode::one_lane) {
    fleet.admit(steps * config.time.step, engine);
    for (auto& p : fleet.platoons()) {
      if (p.lane != lane) fleet.set_lane(p, lane);
      p.commanded_speed = u;
      p.u = u;
    }
    engine.reset_speeds();
    fleet.impose(engine);
    engine.step(inputs);
    fleet.advance(engine);
    ++steps;
  }

  /// Sup-norm gap between the class-a densities and the reference profile.
  double profile_error() const {
    const double L = config.road.cell_length;
    double worst = 0.0;
    for (int j = -engine.ghost(); j < engine.cells(); ++j) {
      double ref = 0.0;
      for (const auto& p : fleet.platoons()) ref += reference_density(p, j, L);
      worst = std::max(worst, std::abs(engine.rho(j)[0] - ref));
    }
    return worst;
  }
};

}  // namespace platoonctl::testing
