#include <cmath>

#include "doctest.h"
#include "platoonctl/platoon.hpp"
#include "support.hpp"

using namespace platoonctl;
using platoonctl::testing::PlatoonRig;

TEST_CASE("Poisson platoon arrivals") {
  const double rate = 81.0, horizon = 2.0;
  const double expect = rate * horizon;
  double total = 0.0;
  const int seeds = 40;
  for (int s = 0; s < seeds; ++s) {
    Rng rng(static_cast<std::uint64_t>(s), Stream::platoons);
    const auto t = spawn_arrivals(rng, rate, horizon);
    CHECK(std::abs(static_cast<double>(t.size()) - expect) <= 3.0 * std::sqrt(expect));
    for (std::size_t i = 1; i < t.size(); ++i) REQUIRE(t[i] >= t[i - 1]);
    if (!t.empty()) CHECK(t.back() < horizon);
    total += static_cast<double>(t.size());
  }
  CHECK(std::abs(total / seeds - expect) <= 3.0 * std::sqrt(expect / seeds));
  Rng rng(1);
  CHECK(spawn_arrivals(rng, 0.0, horizon).empty());
}

TEST_CASE("arrivals are reproducible per seed") {
  Rng a(77, Stream::platoons), b(77, Stream::platoons);
  CHECK(spawn_arrivals(a, 81.0, 2.0) == spawn_arrivals(b, 81.0, 2.0));
}

TEST_CASE("overtaking flow") {
  const auto c = reference_scenario();
  const double V = c.fd.free_flow_speed, sigma = c.sigma_up();
  CHECK(overtaking_flow(V, sigma, c.platoons.one_lane_density(c.fd)) == doctest::Approx(4000.0));
  CHECK(overtaking_flow(V, sigma, c.platoons.two_lane_density(c.fd)) == doctest::Approx(2000.0));
  CHECK(overtaking_flow(V, sigma, 0.0) == doctest::Approx(V * sigma));
}

TEST_CASE("no platoons leaves class-a speeds at V") {
  const auto c = reference_scenario();
  CtmEngine e(c, 2);
  impose_platoon_field(e, {}, c.time.step);
  for (int j = -2; j < e.cells(); ++j) REQUIRE(e.speed(j)[0] == c.fd.free_flow_speed);
}

TEST_CASE("platoon advances at its speed") {
  PlatoonRig rig(reference_scenario());
  for (int s = 0; s < 40; ++s) rig.step(72.0);
  REQUIRE(rig.fleet.platoons().size() == 1);
  const double x0 = rig.fleet.platoons().front().x;
  rig.step(72.0);
  CHECK(rig.fleet.platoons().front().x - x0 == doctest::Approx(0.0144).epsilon(1e-9));
  CHECK(rig.profile_error() < 1e-9);
}

TEST_CASE("profile is a fixed point of the imposed field") {
  PlatoonRig rig(reference_scenario());
  for (int s = 0; s < 60; ++s) {
    rig.step(60.0);
    if (s >= 12) REQUIRE(rig.profile_error() < 1e-9);
  }
}

TEST_CASE("perturbed profile converges") {
  for (LaneMode lane : {LaneMode::one_lane, LaneMode::two_lane}) {
    PlatoonRig rig(reference_scenario());
    for (int s = 0; s < 40; ++s) rig.step(70.0, lane);
    const auto& p = rig.fleet.platoons().front();
    const double L = rig.config.road.cell_length;
    // +-20% alternating over full body cells, total mass unchanged
    const int head = static_cast<int>(std::floor(p.x / L)) - 1;
    const int tail = static_cast<int>(std::ceil(p.tail() / L));
    const double mass0 = rig.engine.road_mass()[0];
    double sign = 1.0;
    int last = head;
    if ((head - tail + 1) % 2 == 1) --last;
    for (int j = tail; j <= last; ++j, sign = -sign) rig.engine.rho(j)[0] *= 1.0 + 0.2 * sign;
    CHECK(rig.engine.road_mass()[0] == doctest::Approx(mass0).epsilon(1e-12));
    CHECK(rig.profile_error() > 1.0);
    for (int s = 0; s < 50; ++s) rig.step(70.0, lane);
    CHECK(rig.profile_error() < 1e-3);
  }
}

TEST_CASE("equal speeds keep the gap") {
  PlatoonRig rig(reference_scenario(), {0.0, 0.01});
  for (int s = 0; s < 80; ++s) rig.step(80.0);
  REQUIRE(rig.fleet.platoons().size() == 2);
  const double gap0 = rig.fleet.platoons()[0].x - rig.fleet.platoons()[1].x;
  for (int s = 0; s < 100; ++s) rig.step(80.0);
  CHECK(rig.fleet.platoons()[0].x - rig.fleet.platoons()[1].x == doctest::Approx(gap0).epsilon(1e-9));
}

TEST_CASE("lane switch conserves size and resets length") {
  const auto c = reference_scenario();
  PlatoonFleet fleet(c, {});
  PlatoonState p;
  p.size = 2.0;
  fleet.set_lane(p, LaneMode::two_lane);
  CHECK(p.rho_ref == doctest::Approx(40.0));
  CHECK(p.length == doctest::Approx(0.05));
  fleet.set_lane(p, LaneMode::one_lane);
  CHECK(p.size == 2.0);
  CHECK(p.length == doctest::Approx(0.1));
  CHECK(p.length >= 2 * c.road.cell_length);
}

TEST_CASE("platoons retire past the road end and class-a mass balances") {
  PlatoonRig rig(reference_scenario(), {0.0, 0.005});
  int retired_steps = 0;
  for (int s = 0; s < 600; ++s) {
    rig.step(90.0);
    if (rig.fleet.platoons().empty() && rig.fleet.pending() == 0) {
      ++retired_steps;
      if (retired_steps > 20) break;
    }
  }
  CHECK(rig.fleet.platoons().empty());
  const double balance = rig.engine.cumulative_inflow() - rig.engine.cumulative_outflow() - rig.engine.system_mass();
  CHECK(std::abs(balance) <= 1e-6 * rig.engine.cumulative_inflow());
}

TEST_CASE("platoon order is preserved") {
  PlatoonRig rig(reference_scenario(), {0.0, 0.002, 0.004, 0.006});
  Rng rng(3);
  for (int s = 0; s < 400; ++s) {
    rig.fleet.admit(s * rig.config.time.step, rig.engine);
    for (auto& p : rig.fleet.platoons()) p.commanded_speed = rng.uniform(50, 90);
    rig.fleet.apply_commands(s * rig.config.time.step);
    rig.engine.reset_speeds();
    rig.fleet.impose(rig.engine);
    rig.engine.step(rig.inputs);
    rig.fleet.advance(rig.engine);
    const auto& ps = rig.fleet.platoons();
    for (std::size_t i = 1; i < ps.size(); ++i) REQUIRE(ps[i].x < ps[i - 1].tail());
  }
}
