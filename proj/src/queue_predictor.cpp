#include "platoonctl/queue_predictor.hpp"

#include <algorithm>
#include <cmath>

#include "platoonctl/controllers.hpp"

namespace platoonctl {

EventTimes event_times(double x, double u, double bottleneck, double V) {
  if (!(u > 0.0)) throw PredictorError("platoon speed must be positive: arrival at the bottleneck is never reached");
  return {(bottleneck - x) / V, (bottleneck - x) / u};
}

double upstream_tail_position(double x, double u, double V, double t) noexcept {
  if (u >= V) return x;
  return (u * V * t + V * x - u * x) / (V - u);
}

double QueueSnapshot::density_at(double y) const noexcept {
  if (y <= 0.0 || rho.empty()) return upstream_density;
  const int j = static_cast<int>(std::ceil(y / cell_length - 1e-9)) - 1;
  if (j < 0) return upstream_density;
  if (j >= static_cast<int>(rho.size())) return rho.back();
  return rho[static_cast<std::size_t>(j)];
}

PredictorConfig PredictorConfig::from(const ScenarioConfig& c) {
  PredictorConfig p;
  p.free_flow_speed = c.fd.free_flow_speed;
  p.bottleneck = c.road.bottleneck_position;
  p.q_cap = c.q_cap();
  p.q_dis = discharge_constants(c.fd, c.sigma_up(), c.sigma_down()).discharge_flow;
  p.q_hi = c.q_hi();
  p.q_lo = c.q_lo();
  p.sigma_lane = c.fd.critical_density_per_lane;
  p.step = c.time.step;
  return p;
}

namespace {

struct Geometry {
  const std::vector<PredictorPlatoon>& platoons;
  const std::vector<EventTimes>& ev;
  const PredictorConfig& cfg;

  // Emission position of platoon p for flow reaching X_b at time t.
  double emission(std::size_t p, double t) const noexcept {
    const auto& pl = platoons[p];
    return upstream_tail_position(pl.x, pl.u, cfg.free_flow_speed, t - ev[p].at_free_flow);
  }
  double profile_origin(double t) const noexcept { return cfg.bottleneck - cfg.free_flow_speed * t; }
};

bool gated(const RampForecastEntry& r, double t, const PredictorConfig& cfg) noexcept {
  return t >= (cfg.bottleneck - r.position) / cfg.free_flow_speed - 1e-12;
}

void collect(std::vector<int>& out, const RampForecast& f, double lo, double hi, double t,
             const PredictorConfig& cfg) {
  for (std::size_t k = 0; k < f.ramps.size(); ++k) {
    const auto& r = f.ramps[k];
    if (r.position > lo && r.position <= hi && gated(r, t, cfg)) out.push_back(static_cast<int>(k));
  }
}

double apply_ramps(double flow, const std::vector<int>& set, const RampForecast& f) {
  for (int k : set) {
    const auto& r = f.ramps[static_cast<std::size_t>(k)];
    if (r.onramp)
      flow += r.flow;
    else
      flow -= r.split_ratio * flow;
  }
  return std::max(0.0, flow);
}

}  // namespace

RampSets ramp_sets(double t, const std::vector<PredictorPlatoon>& platoons, std::size_t p,
                   const RampForecast& forecast, const PredictorConfig& cfg) {
  RampSets s;
  if (forecast.empty()) return s;
  std::vector<EventTimes> ev;
  ev.reserve(platoons.size());
  for (const auto& pl : platoons) ev.push_back(event_times(pl.x, pl.u, cfg.bottleneck, cfg.free_flow_speed));
  const Geometry g{platoons, ev, cfg};
  const double origin = g.profile_origin(t);
  collect(s.bottleneck_from_profile, forecast, origin, cfg.bottleneck, t, cfg);
  if (p < platoons.size()) {
    const double xp = g.emission(p, t);
    collect(s.bottleneck_from_platoon, forecast, xp, cfg.bottleneck, t, cfg);
    collect(s.platoon_from_profile, forecast, origin, xp, t, cfg);
    if (p + 1 < platoons.size()) collect(s.platoon_from_platoon, forecast, g.emission(p + 1, t), xp, t, cfg);
  }
  return s;
}

Prediction predict(const QueueSnapshot& snap, const RampForecast& forecast, const PredictorConfig& cfg) {
  const std::size_t m = snap.platoons.size();
  const int H = cfg.horizon_steps;
  const double dt = cfg.step, V = cfg.free_flow_speed, eps = cfg.queue_epsilon;
  if (H < 0 || !(dt > 0)) throw PredictorError("predictor horizon and step must be positive");

  Prediction out;
  out.step = dt;
  out.n_b.assign(static_cast<std::size_t>(H), 0.0);
  out.q_b_in.assign(static_cast<std::size_t>(H), 0.0);
  out.q_b_out.assign(static_cast<std::size_t>(H), 0.0);
  out.n_p.assign(m, std::vector<double>(static_cast<std::size_t>(H), 0.0));
  out.cap_p.assign(m, std::vector<double>(static_cast<std::size_t>(H), 0.0));
  out.out_p.assign(m, std::vector<double>(static_cast<std::size_t>(H), 0.0));
  out.queue_at_arrival.assign(m, 0.0);

  std::vector<int> k_free(m), k_merge(m);
  out.events.reserve(m);
  for (std::size_t p = 0; p < m; ++p) {
    const auto& pl = snap.platoons[p];
    out.events.push_back(event_times(pl.x, pl.u, cfg.bottleneck, V));
    k_free[p] = static_cast<int>(std::ceil(out.events[p].at_free_flow / dt - 1e-9));
    k_merge[p] = static_cast<int>(std::ceil(out.events[p].at_platoon / dt - 1e-9));
    if (cfg.policy == CapPolicy::fixed && !pl.force_low) {
      const int need = std::min(H, k_merge[p]);
      if (static_cast<int>(pl.cap.size()) < need) throw PredictorError("cap schedule shorter than the horizon");
    }
  }
  const Geometry geo{snap.platoons, out.events, cfg};

  std::vector<double> nq(m);
  for (std::size_t p = 0; p < m; ++p) nq[p] = snap.platoons[p].initial_queue;
  std::vector<bool> merged(m, false);
  double nb = snap.n_b;
  std::vector<int> set;

  auto pulse = [&](double t) {
    if (cfg.merge != MergeRule::inflow_pulse) return 0.0;
    double q = 0.0;
    for (std::size_t p = 0; p < m; ++p) {
      const double tu = out.events[p].at_platoon;
      if (t >= tu - 1e-12 && t <= tu + snap.platoons[p].length / V + 1e-12) q += snap.platoons[p].u * cfg.sigma_lane;
    }
    return q;
  };

  for (int k = 0; k < H; ++k) {
    const double t = k * dt;
    const auto ku = static_cast<std::size_t>(k);
    const double qbu = pulse(t);

    for (std::size_t p = 0; p < m; ++p) {
      const auto& pl = snap.platoons[p];
      double cap;
      const double prev_u = p == 0 ? -kNever : out.events[p - 1].at_platoon;
      if (t >= pl.one_lane_from - 1e-12) {
        cap = cfg.q_hi;
      } else if (pl.force_low) {
        cap = cfg.q_lo;
      } else if (cfg.policy == CapPolicy::fixed) {
        cap = ku < pl.cap.size() ? pl.cap[ku] : (pl.cap.empty() ? cfg.q_lo : pl.cap.back());
      } else {
        CapLawInputs law;
        law.t = t;
        law.n_b = nb;
        law.prev_arrival = prev_u;
        law.prev_queue = p > 0 ? nq[p - 1] : 0.0;
        law.prev_cap = p > 0 ? out.cap_p[p - 1][ku] : cfg.q_lo;
        law.q_ref = reference_flow(cfg.q_hi, qbu);
        law.q_hi = cfg.q_hi;
        law.q_lo = cfg.q_lo;
        law.epsilon = eps;
        if (cfg.policy == CapPolicy::wramp && p > 0 && t < prev_u && !forecast.empty()) {
          set.clear();
          collect(set, forecast, geo.emission(p, t), geo.emission(p - 1, t), t, cfg);
          for (int r : set) {
            const auto& ramp = forecast.ramps[static_cast<std::size_t>(r)];
            if (!ramp.onramp && ramp.protected_ramp) law.protected_between = true;
          }
        }
        cap = cfg.policy == CapPolicy::wramp ? cap_law_wramp(law) : cap_law_noramp(law);
      }
      out.cap_p[p][ku] = std::min(cap, cfg.q_cap);
    }

    // Platoon queues, upstream first so each receiver sees its feeder's outflow.
    for (std::size_t pi = m; pi-- > 0;) {
      const auto& pl = snap.platoons[pi];
      out.n_p[pi][ku] = nq[pi];
      const bool active = k >= k_free[pi] && k < k_merge[pi];
      if (!active) continue;
      double in;
      set.clear();
      const double xp = geo.emission(pi, t);
      const bool fed = pi + 1 < m && k > k_free[pi + 1] && k < k_merge[pi + 1];
      if (fed) {
        in = out.out_p[pi + 1][ku];
        if (!forecast.empty()) collect(set, forecast, geo.emission(pi + 1, t), xp, t, cfg);
      } else {
        in = V * snap.density_at(geo.profile_origin(t));
        if (!forecast.empty()) collect(set, forecast, geo.profile_origin(t), xp, t, cfg);
      }
      in = apply_ramps(in, set, forecast);
      const double cap = out.cap_p[pi][ku];
      const double o = (nq[pi] > eps || in > cap) ? std::min(cap, in + nq[pi] / dt) : in;
      out.out_p[pi][ku] = o;
      nq[pi] = std::max(0.0, nq[pi] + (in - o) * dt);
      for (const auto& r : forecast.ramps) {
        if (r.onramp) continue;
        const double a = geo.emission(pi, t), b = geo.emission(pi, t + dt);
        if (a < r.position && r.position <= b) nq[pi] *= 1.0 - r.split_ratio;
      }
      (void)pl;
    }

    // Bottleneck.
    double qv;
    set.clear();
    std::size_t feeder = m;
    for (std::size_t p = 0; p < m; ++p) {
      const int start = std::max(k_free[p], p == 0 ? 0 : k_merge[p - 1]);
      if (k >= start && k < k_merge[p]) {
        feeder = p;
        break;
      }
    }
    if (feeder < m) {
      qv = out.out_p[feeder][ku];
      if (!forecast.empty()) collect(set, forecast, geo.emission(feeder, t), cfg.bottleneck, t, cfg);
    } else {
      qv = V * snap.density_at(geo.profile_origin(t));
      if (!forecast.empty()) collect(set, forecast, geo.profile_origin(t), cfg.bottleneck, t, cfg);
    }
    qv = apply_ramps(qv, set, forecast);
    const double in = qbu + qv;
    const double o = (nb > eps || in > cfg.q_cap) ? std::min(cfg.q_dis, in + nb / dt) : in;
    out.n_b[ku] = nb;
    out.q_b_in[ku] = in;
    out.q_b_out[ku] = o;
    nb = std::max(0.0, nb + (in - o) * dt);

    for (std::size_t p = 0; p < m; ++p) {
      if (merged[p] || k + 1 < k_merge[p]) continue;
      merged[p] = true;
      out.queue_at_arrival[p] = nq[p];
      if (cfg.merge == MergeRule::inflow_pulse) {
        nb += nq[p];
      } else if (nb + nq[p] > eps) {
        nb += nq[p] + snap.platoons[p].size;
      }
      nq[p] = 0.0;
    }
  }
  for (std::size_t p = 0; p < m; ++p)
    if (!merged[p]) out.queue_at_arrival[p] = nq[p];

  out.decongestion_time = 0.0;
  for (int k = H; k-- > 0;) {
    if (out.n_b[static_cast<std::size_t>(k)] > eps) {
      out.decongestion_time = k + 1 < H ? (k + 1) * dt : kNever;
      break;
    }
  }
  if (H > 0 && nb > eps) out.decongestion_time = kNever;
  return out;
}

QueueSnapshot snapshot_from_ctm(const CtmEngine& e, const std::vector<PlatoonState>& platoons,
                                const ScenarioConfig& c, double upstream_density) {
  constexpr int A = index_of(VehicleClass::a);
  const int n = e.cells();
  const double L = c.road.cell_length;
  QueueSnapshot s;
  s.cell_length = L;
  s.upstream_density = upstream_density;
  s.rho.resize(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) {
    const auto& r = e.rho(j);
    s.rho[static_cast<std::size_t>(j)] = sum(r) - r[A];
  }

  const auto dc = discharge_constants(c.fd, c.sigma_up(), c.sigma_down());
  const double tol = 1e-6;
  auto congested = [&](int j) { return e.total_density(j) > e.params(j).critical_density + tol; };

  // Queue standing at the lane drop.
  for (int j = e.bottleneck_cell(); j >= 0 && congested(j); --j) {
    auto& v = s.rho[static_cast<std::size_t>(j)];
    s.n_b += std::max(0.0, v - dc.discharge_density) * L;
    v = std::min(v, dc.discharge_density);
  }

  const double xb = c.road.bottleneck_position;
  for (const auto& p : platoons) {
    if (p.tail() >= xb) continue;
    PredictorPlatoon q;
    q.id = p.id;
    q.x = p.x;
    q.u = p.u;
    q.size = p.size;
    q.length = p.size / c.platoons.one_lane_density(c.fd);
    const double cap = p.lane == LaneMode::one_lane ? c.q_hi() : c.q_lo();
    const double release = cap / c.fd.free_flow_speed;
    int j = static_cast<int>(std::ceil(p.tail() / L - 1e-9)) - 1;
    for (; p.x < xb && j >= 0 && congested(j); --j) {
      auto& v = s.rho[static_cast<std::size_t>(j)];
      q.initial_queue += std::max(0.0, v - release) * L;
      v = std::min(v, release);
    }
    s.platoons.push_back(std::move(q));
  }
  return s;
}

}  // namespace platoonctl
