#include "platoonctl/controllers.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace platoonctl {

std::vector<double> ideal_target_density(const ScenarioConfig& c, const std::vector<PlatoonState>& platoons) {
  const int ib = c.road.first_bottleneck_cell() - 1;
  const double V = c.fd.free_flow_speed, L = c.road.cell_length, xb = c.road.bottleneck_position;
  const double sigma = c.sigma_down();
  const double rho_ref = c.platoons.one_lane_density(c.fd);
  std::vector<double> target(static_cast<std::size_t>(ib + 1), sigma);
  for (const auto& p : platoons) {
    if (p.tail() >= xb || !(p.u > 0)) continue;
    const double l = p.size / rho_ref;
    const double lo = (xb - p.x) / p.u;
    const double hi = (xb - p.x + l) / p.u + L / V;
    for (int i = 0; i <= ib; ++i) {
      const double a = (xb - i * L) / V;
      if (lo < a && a < hi) target[static_cast<std::size_t>(i)] = sigma - rho_ref;
    }
  }
  return target;
}

std::vector<double> ideal_speed_field(const std::vector<double>& rho_b, const std::vector<double>& target, double V,
                                      double min_speed) {
  const std::size_t n = rho_b.size();
  std::vector<double> u(n, V);
  if (n == 0) return u;
  for (std::size_t i = n - 1; i-- > 0;) {
    const double r = rho_b[i];
    if (r <= 0.0) continue;
    const double psi = V / r * (target[i] - (V - u[i + 1]) / V * rho_b[i + 1]);
    u[i] = std::min(V, std::max(min_speed, psi));
  }
  return u;
}

void apply_ideal_field(CtmEngine& e, const ScenarioConfig& c, const std::vector<PlatoonState>& platoons) {
  constexpr int B = index_of(VehicleClass::b);
  const auto target = ideal_target_density(c, platoons);
  std::vector<double> rho(target.size());
  for (std::size_t i = 0; i < rho.size(); ++i) rho[i] = e.rho(static_cast<int>(i))[B];
  const auto u = ideal_speed_field(rho, target, c.fd.free_flow_speed, c.controller.ideal_min_speed);
  for (std::size_t i = 0; i < u.size(); ++i) e.speed(static_cast<int>(i))[B] = u[i];
}

double reference_flow(double q_hi, double platoon_inflow) noexcept { return q_hi - platoon_inflow; }

double cap_law_noramp(const CapLawInputs& in) noexcept {
  if (in.n_b <= in.epsilon && in.t >= in.prev_arrival) return in.q_ref;
  if (in.prev_queue <= in.epsilon && in.t < in.prev_arrival) return in.prev_cap;
  return in.q_lo;
}

double cap_law_wramp(const CapLawInputs& in) noexcept {
  if (in.n_b <= in.epsilon && in.t >= in.prev_arrival) return in.q_ref;
  if (in.protected_between && in.t < in.prev_arrival) return in.q_hi;
  if (in.prev_queue <= in.epsilon && in.t < in.prev_arrival) return in.prev_cap;
  return in.q_lo;
}

CapSchedule cap_schedule(const Prediction& pr, std::size_t p, double now) {
  CapSchedule s;
  s.origin = now;
  s.step = pr.step;
  if (p < pr.cap_p.size()) s.cap = pr.cap_p[p];
  return s;
}

double closed_form_leader_speed(double q_hi, double q_lo, double distance, double queue, double clear_start) noexcept {
  const double dq = q_hi - q_lo;
  return dq * distance / (queue + dq * clear_start);
}

double leader_queue_at(const QueueSnapshot& s, double follower_event, const PredictorConfig& cfg) {
  const auto& pl = s.platoons.front();
  const double V = cfg.free_flow_speed, dt = cfg.step;
  const int k0 = static_cast<int>(std::ceil((cfg.bottleneck - pl.x) / V / dt - 1e-9));
  const int k1 = static_cast<int>(std::ceil(follower_event / dt - 1e-9));
  double n = pl.initial_queue;
  for (int k = k0; k < k1; ++k) {
    const double in = V * s.density_at(cfg.bottleneck - V * k * dt);
    const double out = (n > cfg.queue_epsilon || in > cfg.q_lo) ? std::min(cfg.q_lo, in + n / dt) : in;
    n = std::max(0.0, n + (in - out) * dt);
  }
  return n;
}

double no_merge_bound(double u_max, double x_p, double x_prev, double u_prev, double l_prev, double xb) noexcept {
  const double den = xb - x_prev + l_prev;
  if (den <= 0.0) return u_max;
  return std::min(u_max, u_prev * (xb - x_p) / den);
}

double approach_time(double x, double u, double xb, double zone, double V) noexcept {
  const double t_free = (xb - x) / V;
  const double s = std::max(0.0, (xb - zone - x) / u);
  return t_free + s * (1.0 - u / V);
}

namespace {

constexpr double kQueueTolerance = 1e-3;  // veh

int horizon_for(double t_arrival, double length, const PredictorConfig& cfg) {
  return static_cast<int>(std::ceil(t_arrival / cfg.step - 1e-9)) +
         static_cast<int>(std::ceil(length / cfg.free_flow_speed / cfg.step)) + 2;
}

bool check(const Prediction& pr, std::size_t p, double clear_start) {
  if (pr.queue_at_arrival[p] > kQueueTolerance) return false;
  const double tu = pr.events[p].at_platoon;
  const int k0 = std::max(0, static_cast<int>(std::ceil(clear_start / pr.step - 1e-9)));
  const int k1 = std::min(pr.steps() - 1, static_cast<int>(std::ceil(tu / pr.step - 1e-9)));
  for (int k = k0; k <= k1; ++k)
    if (pr.n_b[static_cast<std::size_t>(k)] > kQueueTolerance) return false;
  return true;
}

}  // namespace

SpeedSolution solve_platoon_speed(QueueSnapshot snap, std::size_t p, double bound, const RampForecast& forecast,
                                  const PredictorConfig& cfg, const ScenarioConfig& c) {
  const double V = cfg.free_flow_speed, xb = cfg.bottleneck;
  const double u_min = c.platoons.min_speed;
  const bool has_follower = p + 1 < snap.platoons.size();
  const PredictorPlatoon follower = has_follower ? snap.platoons[p + 1] : PredictorPlatoon{};
  snap.platoons.resize(p + 1);
  auto& pl = snap.platoons[p];

  double clear_start = (xb - pl.x) / V;
  if (p > 0) {
    const auto& prev = snap.platoons[p - 1];
    clear_start = std::max(clear_start, (xb - prev.x) / prev.u + prev.length / V);
  }

  PredictorConfig pc = cfg;
  auto feasible = [&](double u) {
    pl.u = u;
    pl.force_low = false;
    pl.one_lane_from = approach_time(pl.x, u, xb, c.platoons.approach_zone, V);
    pc.horizon_steps = horizon_for((xb - pl.x) / u, pl.length, cfg);
    return check(predict(snap, forecast, pc), p, clear_start);
  };

  if (p == 0 && has_follower) {
    const double t2v = (xb - follower.x) / V;
    const double n2 = leader_queue_at(snap, t2v, cfg);
    const double u = closed_form_leader_speed(cfg.q_hi, cfg.q_lo, xb - pl.x, n2, clear_start);
    if (u >= u_min && u <= bound && t2v < (xb - pl.x) / u && feasible(u)) return {u, true, true};
  }

  const double step = c.controller.speed_search_step;
  for (double u = bound; u > u_min - 1e-9; u -= step)
    if (feasible(u)) return {u, true, false};
  if (feasible(u_min)) return {u_min, true, false};
  return {u_min, false, false};
}

RampForecast predict_ramp_flows(const ScenarioConfig& c, double factor) {
  RampForecast f;
  for (std::size_t k = 0; k < c.road.onramps.size(); ++k) {
    const std::string origin = "onramp" + std::to_string(k + 1);
    double q = 0.0;
    for (VehicleClass v : {VehicleClass::a, VehicleClass::b, VehicleClass::c}) q += c.mean_inflow(origin, v);
    f.ramps.push_back({c.road.onramps[k].position, true, factor * q, 0.0, false});
  }
  for (const auto& r : c.road.offramps) f.ramps.push_back({r.position, false, 0.0, r.split_ratio, r.protected_ramp});
  std::stable_sort(f.ramps.begin(), f.ramps.end(),
                   [](const RampForecastEntry& a, const RampForecastEntry& b) { return a.position < b.position; });
  return f;
}

double offramp_forecast(double feeding, double upstream, double R) noexcept { return -R * (feeding + upstream); }

Plan plan_platoons(const QueueSnapshot& snapshot, const RampForecast& forecast, CapPolicy policy,
                   const ScenarioConfig& c, double now) {
  PredictorConfig cfg = PredictorConfig::from(c);
  cfg.policy = policy;
  const double V = cfg.free_flow_speed, xb = cfg.bottleneck;
  const double u_max = c.platoons.max_speed, u_min = c.platoons.min_speed;
  QueueSnapshot work = snapshot;
  Plan plan;
  const std::size_t m = work.platoons.size();
  for (std::size_t p = 0; p < m; ++p) {
    auto& pl = work.platoons[p];
    PlanEntry e;
    e.id = pl.id;
    if (pl.x >= xb - c.platoons.approach_zone - 1e-12) {
      pl.u = std::max(pl.u, u_min);
      pl.one_lane_from = -kNever;
      e.u = u_max;
      plan.entries.push_back(e);
      continue;
    }
    double bound = u_max;
    if (p > 0) {
      const auto& prev = work.platoons[p - 1];
      bound = no_merge_bound(u_max, pl.x, prev.x, prev.u, prev.length, xb);
    }
    bound = std::max(u_min, bound);
    const auto sol = solve_platoon_speed(work, p, bound, forecast, cfg, c);
    pl.u = sol.u;
    pl.force_low = !sol.feasible;
    pl.one_lane_from = approach_time(pl.x, sol.u, xb, c.platoons.approach_zone, V);
    e.u = sol.u;
    e.feasible = sol.feasible;
    plan.entries.push_back(e);
  }
  int horizon = 1;
  for (const auto& pl : work.platoons)
    horizon = std::max(horizon, horizon_for(std::max(0.0, (xb - pl.x) / pl.u), pl.length, cfg));
  cfg.horizon_steps = horizon;
  plan.prediction = predict(work, forecast, cfg);
  for (std::size_t p = 0; p < m; ++p) plan.entries[p].schedule = cap_schedule(plan.prediction, p, now);
  return plan;
}

}  // namespace platoonctl
