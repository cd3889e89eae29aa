#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "platoonctl/mcctm.hpp"
#include "platoonctl/queue_predictor.hpp"

using namespace platoonctl;

namespace {

QueueSnapshot uniform_snapshot(double flow, int cells = 250) {
  QueueSnapshot s;
  s.rho.assign(static_cast<std::size_t>(cells), flow / 100.0);
  s.upstream_density = flow / 100.0;
  return s;
}

PredictorConfig reference_cfg(int horizon) {
  auto cfg = PredictorConfig::from(reference_scenario());
  cfg.horizon_steps = horizon;
  return cfg;
}

}  // namespace

TEST_CASE("event times") {
  const auto e = event_times(3.92, 50.0, 4.92, 100.0);
  CHECK(e.at_platoon == doctest::Approx(0.02));
  CHECK(e.at_free_flow == doctest::Approx(0.01));
  const auto same = event_times(1.0, 100.0, 4.92, 100.0);
  CHECK(same.at_platoon == same.at_free_flow);
  CHECK(event_times(0.0, 72.0, 4.92, 100.0).at_platoon == doctest::Approx(0.0683).epsilon(1e-3));
  CHECK_THROWS_AS(event_times(1.0, 0.0, 4.92, 100.0), PredictorError);
}

TEST_CASE("upstream tail position") {
  CHECK(upstream_tail_position(2.0, 50.0, 100.0, 0.0) == doctest::Approx(2.0));
  CHECK(upstream_tail_position(2.0, 0.0, 100.0, 0.3) == doctest::Approx(2.0));
  CHECK(upstream_tail_position(2.0, 50.0, 100.0, 0.01) == doctest::Approx(3.0));
  CHECK(upstream_tail_position(2.0, 100.0, 100.0, 0.01) == doctest::Approx(2.0));
}

TEST_CASE("ramp sets") {
  const auto cfg = reference_cfg(0);
  std::vector<PredictorPlatoon> ps(1);
  ps[0].x = 1.0;
  ps[0].u = 60.0;
  const auto none = ramp_sets(0.05, ps, 0, RampForecast{}, cfg);
  CHECK(none.bottleneck_from_platoon.empty());
  CHECK(none.bottleneck_from_profile.empty());
  CHECK(none.platoon_from_profile.empty());

  RampForecast f;
  f.ramps.push_back({3.0, true, 1000.0, 0.0, false});
  const double gate = (cfg.bottleneck - 3.0) / cfg.free_flow_speed;
  // emission position of the platoon at t is past 3.0 km once t is large enough
  const double t_in = 0.05;
  const double xp = upstream_tail_position(1.0, 60.0, 100.0, t_in - (cfg.bottleneck - 1.0) / 100.0);
  REQUIRE(xp < 3.0);
  REQUIRE(t_in >= gate);
  const auto in = ramp_sets(t_in, ps, 0, f, cfg);
  REQUIRE(in.bottleneck_from_platoon.size() == 1);
  CHECK(in.bottleneck_from_platoon[0] == 0);
  const auto early = ramp_sets(gate * 0.5, ps, 0, f, cfg);
  CHECK(early.bottleneck_from_platoon.empty());
  CHECK(early.bottleneck_from_profile.empty());
  CHECK(early.platoon_from_profile.empty());
}

TEST_CASE("sub-capacity inflow passes through") {
  const auto cfg = reference_cfg(300);
  const auto pr = predict(uniform_snapshot(3000.0), {}, cfg);
  for (int k = 0; k < pr.steps(); ++k) {
    REQUIRE(pr.n_b[static_cast<std::size_t>(k)] == 0.0);
    REQUIRE(pr.q_b_out[static_cast<std::size_t>(k)] == doctest::Approx(3000.0));
  }
  CHECK(pr.decongestion_time == 0.0);
}

TEST_CASE("queue above discharge grows at inflow minus discharge") {
  const auto cfg = reference_cfg(500);
  auto s = uniform_snapshot(3500.0);
  s.n_b = 10.0;
  const auto pr = predict(s, {}, cfg);
  const double rate = (pr.n_b[400] - pr.n_b[100]) / (300 * cfg.step);
  CHECK(rate == doctest::Approx(3500.0 - cfg.q_dis).epsilon(1e-9));
  CHECK(rate == doctest::Approx(227.3).epsilon(1e-3));
  CHECK(pr.decongestion_time == kNever);
}

TEST_CASE("queue mass balance and hysteresis") {
  auto cfg = reference_cfg(1500);
  auto s = uniform_snapshot(3000.0);
  // an inflow dip upstream followed by a surge
  for (std::size_t j = 100; j < 150; ++j) s.rho[j] = 38.0;
  for (std::size_t j = 150; j < 200; ++j) s.rho[j] = 15.0;
  s.n_b = 20.0;
  const auto pr = predict(s, {}, cfg);
  bool cleared = false;
  for (int k = 0; k + 1 < pr.steps(); ++k) {
    const auto ku = static_cast<std::size_t>(k);
    REQUIRE(pr.n_b[ku + 1] - pr.n_b[ku] ==
            doctest::Approx((pr.q_b_in[ku] - pr.q_b_out[ku]) * cfg.step).epsilon(1e-9).scale(1.0));
    if (pr.n_b[ku] > 1e-9) REQUIRE(pr.q_b_out[ku] <= cfg.q_dis + 1e-9);
    if (pr.n_b[ku] > 1e-9 && pr.q_b_in[ku] * cfg.step + pr.n_b[ku] > cfg.q_dis * cfg.step)
      REQUIRE(pr.q_b_out[ku] == doctest::Approx(cfg.q_dis));
    if (pr.n_b[ku] <= 1e-9) cleared = true;
  }
  CHECK(cleared);
}

TEST_CASE("one platoon under the lower cap matches a fine Euler oracle") {
  // Constant 3000 veh/h background, platoon 3.92 km upstream at 60 km/h holding 2000 veh/h.
  const double flow = 3000.0, x = 1.0, u = 60.0, cap = 2000.0;
  auto cfg = reference_cfg(0);
  cfg.merge = MergeRule::inflow_pulse;
  cfg.policy = CapPolicy::fixed;
  const double V = cfg.free_flow_speed, xb = cfg.bottleneck;
  const double t_v = (xb - x) / V, t_u = (xb - x) / u;
  const double length = 0.1;
  const double horizon = t_u + 0.15;
  cfg.horizon_steps = static_cast<int>(std::ceil(horizon / cfg.step));

  auto s = uniform_snapshot(flow);
  PredictorPlatoon p;
  p.x = x;
  p.u = u;
  p.length = length;
  p.size = 2.0;
  p.cap.assign(static_cast<std::size_t>(cfg.horizon_steps), cap);
  s.platoons.push_back(p);
  const auto pr = predict(s, {}, cfg);

  // Oracle: continuous-time balances on a T/10 grid, written from the model definition.
  const double h = cfg.step / 10.0;
  double np = 0.0, nb = 0.0, worst_b = 0.0, worst_p = 0.0;
  bool merged = false;
  for (int i = 0; i * h < horizon; ++i) {
    const double t = i * h;
    const int k = static_cast<int>(std::floor(t / cfg.step + 1e-9));
    if (k < pr.steps() && std::abs(t - k * cfg.step) < 1e-12) {
      worst_b = std::max(worst_b, std::abs(nb - pr.n_b[static_cast<std::size_t>(k)]));
      worst_p = std::max(worst_p, std::abs(np - pr.n_p[0][static_cast<std::size_t>(k)]));
    }
    double qb_in;
    if (t < t_v) {
      qb_in = flow;
    } else if (t < t_u) {
      const double in = flow;
      const double out = (np > 0 || in > cap) ? std::min(cap, in + np / h) : in;
      np = std::max(0.0, np + (in - out) * h);
      qb_in = out;
    } else {
      if (!merged) {
        nb += np;
        np = 0.0;
        merged = true;
      }
      qb_in = flow + (t <= t_u + length / V ? u * cfg.sigma_lane : 0.0);
    }
    const double out = (nb > 0 || qb_in > cfg.q_cap) ? std::min(cfg.q_dis, qb_in + nb / h) : qb_in;
    nb = std::max(0.0, nb + (qb_in - out) * h);
  }
  MESSAGE("sup |n_b - oracle| = " << worst_b << ", sup |n_p - oracle| = " << worst_p);
  CHECK(worst_b < 0.5);
  CHECK(worst_p < 0.5);
  CHECK(pr.queue_at_arrival[0] == doctest::Approx((flow - cap) * (t_u - t_v)).epsilon(0.02));
}

TEST_CASE("congested-jump merge adds platoon only into a standing queue") {
  auto cfg = reference_cfg(0);
  cfg.merge = MergeRule::congested_jump;
  cfg.policy = CapPolicy::fixed;
  PredictorPlatoon p;
  p.x = 4.0;
  p.u = 90.0;
  const double t_u = (cfg.bottleneck - p.x) / p.u;
  cfg.horizon_steps = static_cast<int>(std::ceil(t_u / cfg.step)) + 20;
  p.cap.assign(static_cast<std::size_t>(cfg.horizon_steps), cfg.q_hi);
  auto s = uniform_snapshot(2500.0);
  s.platoons.push_back(p);
  const auto free = predict(s, {}, cfg);
  CHECK(free.n_b.back() == 0.0);
  s.platoons[0].initial_queue = 5.0;
  s.platoons[0].cap.assign(static_cast<std::size_t>(cfg.horizon_steps), cfg.q_lo);
  const auto jam = predict(s, {}, cfg);
  CHECK(jam.queue_at_arrival[0] > 5.0);
  const int k = static_cast<int>(std::ceil(t_u / cfg.step - 1e-9));
  CHECK(jam.n_b[static_cast<std::size_t>(k + 1)] > jam.queue_at_arrival[0] + p.size - 1.0);
}

TEST_CASE("fixed cap schedule must cover the horizon") {
  auto cfg = reference_cfg(400);
  auto s = uniform_snapshot(2000.0);
  PredictorPlatoon p;
  p.x = 1.0;
  p.u = 60.0;
  p.cap.assign(10, 2000.0);
  s.platoons.push_back(p);
  CHECK_THROWS_AS(predict(s, {}, cfg), PredictorError);
}

TEST_CASE("snapshot of a free-flow road") {
  const auto c = reference_scenario();
  CtmEngine e(c, 0);
  for (int j = 0; j < e.cells(); ++j) e.rho(j) = {0.0, 10.0 + 0.01 * j, 5.0};
  const auto s = snapshot_from_ctm(e, {}, c, 15.0);
  CHECK(s.n_b == 0.0);
  CHECK(s.platoons.empty());
  for (int j = 0; j < e.cells(); ++j) REQUIRE(s.rho[static_cast<std::size_t>(j)] == doctest::Approx(15.0 + 0.01 * j));
}

TEST_CASE("snapshot excess of a standing queue") {
  const auto c = reference_scenario();
  const auto dc = discharge_constants(c.fd, c.sigma_up(), c.sigma_down());
  CtmEngine e(c, 0);
  const int b = e.bottleneck_cell();
  for (int j = b - 9; j <= b; ++j) e.rho(j)[1] = dc.congested_density;
  const auto s = snapshot_from_ctm(e, {}, c, 0.0);
  CHECK(s.n_b == doctest::Approx(0.2 * (dc.congested_density - dc.discharge_density)));
}

TEST_CASE("snapshot of a platoon with nothing trapped behind it") {
  const auto c = reference_scenario();
  CtmEngine e(c, 0);
  for (int j = 0; j < e.cells(); ++j) e.rho(j)[1] = 20.0;
  PlatoonState p;
  p.x = 2.5;
  p.u = 70.0;
  const auto s = snapshot_from_ctm(e, {p}, c, 20.0);
  REQUIRE(s.platoons.size() == 1);
  CHECK(s.platoons[0].initial_queue == 0.0);
}
