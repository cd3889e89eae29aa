#include <algorithm>
#include <fstream>
#include <string>

#include "doctest.h"
#include "platoonctl/mcctm.hpp"
#include "platoonctl/scenario.hpp"

using namespace platoonctl;

namespace {

bool has_violation(const ValidationReport& r, const std::string& name) {
  return std::any_of(r.begin(), r.end(), [&](const Violation& v) { return v.name == name; });
}

}  // namespace

TEST_CASE("reference scenario validates") {
  const auto c = reference_scenario();
  const auto r = validate(c);
  for (const auto& v : r) MESSAGE(v.name << ": " << v.detail);
  CHECK(r.empty());
}

TEST_CASE("reference scenario geometry and flows") {
  const auto c = reference_scenario();
  CHECK(c.q_cap() == doctest::Approx(4000.0));
  CHECK(c.q_hi() == doctest::Approx(4000.0));
  CHECK(c.q_lo() == doctest::Approx(2000.0));
  CHECK(c.sigma_up() == doctest::Approx(3 * c.fd.critical_density_per_lane));
  CHECK(c.sigma_down() == doctest::Approx(2 * c.fd.critical_density_per_lane));
  CHECK(c.demand.hold_interval == doctest::Approx(0.004));
  CHECK(c.demand.hold_interval * 3600 == doctest::Approx(14.4));
  REQUIRE(c.road.offramps.size() == 1);
  CHECK(c.road.offramps[0].split_ratio ==
        doctest::Approx(c.mean_inflow("mainline", VehicleClass::c) /
                        (c.mean_inflow("mainline", VehicleClass::b) + c.mean_inflow("mainline", VehicleClass::c))));
  CHECK(c.road.cells() == 250);
  CHECK(c.road.first_bottleneck_cell() == 246);
  CHECK(c.road.lanes_of_cell(245) == 3);
  CHECK(c.road.lanes_of_cell(246) == 2);
  CHECK(c.road.onramp_cell(0) == 100);
  CHECK(c.road.offramp_cell(0) == 149);
  CHECK(c.road.cell_length == doctest::Approx(c.fd.free_flow_speed * c.time.step));
}

TEST_CASE("wave speed does not depend on the lane count") {
  const auto fd = reference_scenario().fd;
  for (int n : {1, 2, 3}) {
    const double w = fd.free_flow_speed * fd.critical_density(n) / (fd.jam_density(n) - fd.critical_density(n));
    CHECK(w == doctest::Approx(fd.wave_speed()));
  }
  CHECK(fd.wave_speed() == doctest::Approx(12.5));
}

TEST_CASE("validation names violated invariants") {
  SUBCASE("U_max equal to V") {
    auto c = reference_scenario();
    c.platoons.max_speed = c.fd.free_flow_speed;
    CHECK(has_violation(validate(c), "U_max < V"));
  }
  SUBCASE("platoon shorter than two cells") {
    auto c = reference_scenario();
    c.road.cell_length = 0.03;
    c.time.step = 0.0003;
    c.road.length = 4.98;
    c.road.bottleneck_position = 4.95;
    c.road.onramps[0].position = 2.01;
    c.road.offramps[0].position = 3.0;
    c.platoons.size = 2.0;  // 2 / 40 = 0.05 km < 0.06 km
    CHECK(has_violation(validate(c), "platoon shorter than 2L"));
  }
  SUBCASE("cell length and step disagree") {
    auto c = reference_scenario();
    c.time.step = 0.0003;
    CHECK(has_violation(validate(c), "L = V T"));
  }
  SUBCASE("ramp outside the road") {
    auto c = reference_scenario();
    c.road.onramps[0].position = 4.96;
    CHECK(has_violation(validate(c), "ramp inside (0, X_b)"));
  }
  SUBCASE("negative demand") {
    auto c = reference_scenario();
    c.demand.streams[0].half_width = c.demand.streams[0].mean + 1;
    CHECK(has_violation(validate(c), "mean - half_width >= 0"));
  }
  SUBCASE("warm-up and cool-down cover the horizon") {
    auto c = reference_scenario();
    c.time.warmup_steps = c.time.total_steps;
    CHECK(has_violation(validate(c), "warmup + cooldown < total steps"));
  }
  SUBCASE("capacity drop out of range") {
    auto c = reference_scenario();
    c.fd.capacity_drop = 1.0;
    CHECK(has_violation(validate(c), "0 <= alpha < 1"));
  }
  SUBCASE("split ratio out of range") {
    auto c = reference_scenario();
    c.road.offramps[0].split_ratio = 1.5;
    CHECK(has_violation(validate(c), "0 <= R_k <= 1"));
  }
}

TEST_CASE("config text round trip") {
  const auto c = reference_scenario();
  const std::string text = serialize_config(c);
  const auto back = parse_config(text);
  CHECK(serialize_config(back) == text);
  CHECK(validate(back).empty());
}

TEST_CASE("shipped reference config matches the built-in scenario") {
  const auto loaded = load_config(PLATOONCTL_SOURCE_DIR "/configs/reference.cfg");
  CHECK(serialize_config(loaded) == serialize_config(reference_scenario()));
}

TEST_CASE("parse accepts comments, blank lines and overrides defaults") {
  const auto c = parse_config("# comment\n\nfd.free_flow_speed = 90  # inline\nrun.seed = 42\nrun.control = wramp\n");
  CHECK(c.fd.free_flow_speed == doctest::Approx(90.0));
  CHECK(c.seed == 42u);
  CHECK(c.control == ControlCase::wramp);
}

TEST_CASE("parse errors carry the line") {
  auto line_of = [](const char* text) {
    try {
      parse_config(text);
    } catch (const ConfigError& e) {
      return e.line();
    }
    return -1;
  };
  CHECK(line_of("fd.free_flow_speed = 100\nfd.nonsense = 1\n") == 2);
  CHECK(line_of("fd.free_flow_speed = abc\n") == 1);
  CHECK(line_of("\n\nfd.capacity_drop = 0.4\nfd.capacity_drop = 0.3\n") == 4);
  CHECK(line_of("just text\n") == 1);
  CHECK(line_of("run.control = fastest\n") == 1);
  CHECK(line_of("fd.free_flow_speed = 100\n") == -1);
}

TEST_CASE("unreadable config file") {
  CHECK_THROWS_AS(load_config("/nonexistent/dir/none.cfg"), ConfigError);
}

TEST_CASE("control case names") {
  for (auto k : {ControlCase::none, ControlCase::noramp, ControlCase::wramp, ControlCase::ideal})
    CHECK(parse_control_case(to_string(k)) == k);
  CHECK_THROWS_AS(parse_control_case("bogus"), ConfigError);
}
