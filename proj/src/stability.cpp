#include "platoonctl/stability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "platoonctl/mcctm.hpp"
#include "platoonctl/queue_predictor.hpp"

namespace platoonctl {

void AnalysisParams::check_ordering() const {
  const double qt = effective_inflow();
  auto fail = [](const std::string& what) { throw AnalysisError("flow ordering violated: " + what); };
  if (!(q_lo < q_dis)) fail("Q^lo < q_dis");
  if (!(q_dis < q_in)) fail("q_dis < Q^in");
  if (!(q_in < qt)) fail("Q^in < Q~^in");
  if (!(qt < q_hi)) fail("Q~^in < Q^hi");
  if (!(q_hi <= q_cap)) fail("Q^hi <= q_cap");
}

AnalysisParams AnalysisParams::from(const ScenarioConfig& c, double q_in) {
  AnalysisParams p;
  p.q_in = q_in;
  p.q_hi = c.q_hi();
  p.q_lo = c.q_lo();
  p.q_cap = c.q_cap();
  p.q_dis = discharge_constants(c.fd, c.sigma_up(), c.sigma_down()).discharge_flow;
  p.n_pi = c.platoons.size;
  p.tau_pi = 1.0 / c.platoons.arrival_rate;
  p.length = c.road.length;
  p.u_min = c.platoons.min_speed;
  double spread = 0.0;
  for (const auto& s : c.demand.streams)
    if (s.vehicle_class == VehicleClass::b) spread += s.max() - s.mean;
  p.delta = p.tau_pi * spread;
  return p;
}

bool uncontrolled_stable(const AnalysisParams& p) noexcept { return p.effective_inflow() < p.q_dis; }

RecursionCoeffs recursion_coeffs(const AnalysisParams& p) {
  if (!(p.q_dis > p.q_lo)) throw AnalysisError("flow ordering violated: Q^lo < q_dis");
  RecursionCoeffs r;
  r.a = (p.q_hi - p.q_lo) / (p.q_dis - p.q_lo);
  r.b = p.tau_pi * (p.q_in - p.q_dis) + p.n_pi - p.max_travel_time() * (p.q_hi - p.q_dis);
  if (!(r.a > 1.0)) throw AnalysisError("flow ordering violated: a must exceed 1");
  if (!(r.b < 0.0)) throw AnalysisError("flow ordering violated: b must be negative");
  return r;
}

Thresholds stability_threshold(const AnalysisParams& p) {
  const auto r = recursion_coeffs(p);
  return {r.b / (1.0 - r.a), (p.q_dis - p.q_lo) * p.max_travel_time()};
}

double phase_two_threshold(const AnalysisParams& p) {
  return (p.q_dis - p.q_lo) * (p.max_travel_time() - p.tau_pi * (p.q_in - p.q_lo) / (p.q_hi - p.q_lo));
}

double recursion_iterate(const AnalysisParams& p, double n0, int k) {
  const auto r = recursion_coeffs(p);
  double n = n0;
  for (int i = 0; i < k; ++i) n = r.a * n + r.b;
  return n;
}

int phase_two_count(const AnalysisParams& p, double n0) {
  const auto r = recursion_coeffs(p);
  if (!(n0 < r.b / (1.0 - r.a))) throw AnalysisError("initial excess is not below the stability threshold");
  const double c = phase_two_threshold(p);
  double n = n0;
  int k = 0;
  while (n > c) {
    n = r.a * n + r.b;
    ++k;
  }
  return k;
}

double queue_free_travel_time(const AnalysisParams& p, double n) {
  return n / (p.q_dis - p.q_lo) + p.tau_pi * (p.q_in - p.q_lo) / (p.q_hi - p.q_lo);
}

int recovery_count(const AnalysisParams& p, double n) {
  const double tp = queue_free_travel_time(p, n);
  if (tp >= p.max_travel_time()) throw AnalysisError("queue-free travel time reaches the maximum");
  if (tp <= p.tau_pi) return 0;
  const double gain = p.tau_pi * (p.q_hi - p.q_in) / (p.q_hi - p.q_lo);
  return static_cast<int>(std::ceil((tp - p.tau_pi) / gain - 1e-12));
}

double failure_probability(double n0, const AnalysisParams& p) {
  const auto r = recursion_coeffs(p);
  const double mid = r.b / (1.0 - r.a);
  return 1.0 / (1.0 + std::exp((mid - n0) / (p.delta / 4.0)));
}

namespace {

double log_odds(double p_star) {
  if (!(p_star > 0.0 && p_star < 1.0)) throw AnalysisError("P* must lie in (0, 1)");
  return std::log(p_star / (1.0 - p_star));
}

}  // namespace

double throughput_initial_queue(const AnalysisParams& p) {
  const double g = p.q_dis - p.q_lo;
  return g * (p.max_travel_time() - p.tau_pi) + p.n_pi +
         (p.q_hi - p.q_dis) / g * p.delta / 4.0 * log_odds(p.p_star);
}

double throughput_estimate(const AnalysisParams& p, double n0) {
  const double l = p.delta / 4.0 * log_odds(p.p_star);
  return p.q_dis + (p.q_hi - p.q_dis) / p.tau_pi * (p.max_travel_time() - (n0 + l) / (p.q_dis - p.q_lo));
}

double throughput_estimate(const AnalysisParams& p) {
  const double g = p.q_dis - p.q_lo;
  const double l = p.delta / 4.0 * log_odds(p.p_star);
  return p.q_hi - (p.q_hi - p.q_dis) / g * (p.n_pi / p.tau_pi + (p.q_hi - p.q_lo) / g * l / p.tau_pi);
}

RecursionRun stochastic_recursion_sim(Rng& rng, double n0, const AnalysisParams& p, int k_max) {
  const auto r = recursion_coeffs(p);
  if (!(p.delta < -r.b)) throw AnalysisError("noise bound must be below |b|");
  const double lo = (r.b + p.delta) / (1.0 - r.a);
  const double hi = (r.b - p.delta) / (1.0 - r.a);
  double n = n0;
  for (int k = 0; k <= k_max; ++k) {
    if (n < lo) return {RecursionOutcome::stabilized, k};
    if (n > hi) return {RecursionOutcome::diverged, k};
    if (k == k_max) break;
    n = r.a * n + r.b + rng.uniform(-p.delta, p.delta);
  }
  return {RecursionOutcome::undecided, k_max};
}

double empirical_failure_rate(double n0, const AnalysisParams& p, int trials, std::uint64_t seed, int k_max) {
  Rng rng(seed, Stream::analysis);
  int failed = 0;
  for (int i = 0; i < trials; ++i)
    if (stochastic_recursion_sim(rng, n0, p, k_max).outcome == RecursionOutcome::diverged) ++failed;
  return trials > 0 ? static_cast<double>(failed) / trials : 0.0;
}

PeriodicOutcome simulate_periodic_control(const AnalysisParams& p, double n0, const PeriodicSettings& s) {
  constexpr double kTol = 1e-3;
  const double V = s.free_flow_speed, dt = s.step, l = s.platoon_length;
  const int K = s.platoons;
  if (!(V > p.u_min)) throw AnalysisError("free-flow speed must exceed the minimum platoon speed");
  // A platoon restricts the bottleneck inflow between its free-flow event and
  // its arrival. The segment is stretched so that this window is l / U_min at
  // the minimum speed, which is the travel time the recursion counts.
  const double ell = p.length * V / (V - p.u_min);

  // Bottleneck at x = ell; the segment in front of the first platoon holds
  // the standing queue constant until the first overtaking flow arrives.
  QueueSnapshot snap;
  snap.cell_length = 0.02;
  snap.rho.assign(static_cast<std::size_t>(std::ceil(ell / snap.cell_length - 1e-9)), p.q_dis / V);
  snap.upstream_density = p.q_in / V;
  snap.n_b = n0;

  PredictorConfig cfg;
  cfg.free_flow_speed = V;
  cfg.bottleneck = ell;
  cfg.q_cap = p.q_cap;
  cfg.q_dis = p.q_dis;
  cfg.q_hi = p.q_hi;
  cfg.q_lo = p.q_lo;
  cfg.step = dt;
  cfg.merge = MergeRule::congested_jump;
  cfg.policy = CapPolicy::noramp;

  // Platoon k enters at time k tau_pi; in the snapshot it sits k V tau_pi
  // upstream so its free-flow event is unchanged, and its snapshot speed is
  // chosen to reproduce the arrival time.
  auto make = [&](int k, double u) {
    PredictorPlatoon pl;
    pl.id = k;
    const double lead = k * V * p.tau_pi;
    const double arrival = k * p.tau_pi + ell / u;
    pl.x = -lead;
    pl.u = (ell + lead) / arrival;
    pl.length = l;
    pl.size = p.n_pi;
    return pl;
  };
  auto horizon = [&](double t_end) { return static_cast<int>(std::ceil(t_end / dt - 1e-9)) + 2; };

  PeriodicOutcome out;
  std::vector<double> arrival;
  for (int k = 0; k < K; ++k) {
    const double tv = k * p.tau_pi + ell / V;
    const double clear_start = k == 0 ? tv : std::max(tv, arrival.back() + l / V);
    const double earliest = k == 0 ? -kNever : arrival.back() + l / V;
    snap.platoons.push_back(make(k, s.u_max));
    auto feasible = [&](double u) {
      const double tu = k * p.tau_pi + ell / u;
      if (tu < earliest) return false;
      snap.platoons.back() = make(k, u);
      cfg.horizon_steps = horizon(tu + l / V);
      const auto pr = predict(snap, {}, cfg);
      if (pr.queue_at_arrival[static_cast<std::size_t>(k)] > kTol) return false;
      const int k0 = std::max(0, static_cast<int>(std::ceil(clear_start / dt - 1e-9)));
      const int k1 = std::min(pr.steps() - 1, static_cast<int>(std::ceil(tu / dt - 1e-9)));
      for (int j = k0; j <= k1; ++j)
        if (pr.n_b[static_cast<std::size_t>(j)] > kTol) return false;
      return true;
    };
    // Slower platoons restrict the inflow for longer, so nothing faster can
    // succeed where the minimum speed fails.
    double chosen = p.u_min;
    const bool ok = feasible(p.u_min);
    if (ok) {
      for (double u = s.u_max; u > p.u_min + 1e-9; u -= s.speed_step) {
        if (feasible(u)) {
          chosen = u;
          break;
        }
      }
    }
    snap.platoons.back() = make(k, chosen);
    arrival.push_back(k * p.tau_pi + ell / chosen);
    out.speeds.push_back(chosen);
    out.feasible.push_back(ok);
    // Recovered: a run of queue-free platoons at full speed.
    const int run = static_cast<int>(out.speeds.size());
    if (run >= s.recovered_run) {
      bool all = true;
      for (int j = run - s.recovered_run; j < run; ++j)
        all = all && out.feasible[static_cast<std::size_t>(j)] &&
              std::abs(out.speeds[static_cast<std::size_t>(j)] - s.u_max) < 1e-9;
      if (all) break;
    }
  }

  const double t_last = arrival.back();
  cfg.horizon_steps = horizon(t_last + l / V + 3.0 * p.tau_pi);
  const auto pr = predict(snap, {}, cfg);
  out.queue_at_arrival = pr.queue_at_arrival;
  out.final_queue = pr.n_b.back();
  out.peak_queue = *std::max_element(pr.n_b.begin(), pr.n_b.end());

  // Decongested when the bottleneck stays empty over the last few periods
  // and the last platoons arrive without queues.
  const double window = 5.0 * p.tau_pi;
  bool clear = true;
  for (int j = 0; j < pr.steps(); ++j)
    if (pr.time(j) >= t_last - window && pr.n_b[static_cast<std::size_t>(j)] > kTol) clear = false;
  const int n = static_cast<int>(arrival.size());
  for (int k = 0; k < n; ++k)
    if (arrival[static_cast<std::size_t>(k)] >= t_last - window && pr.queue_at_arrival[static_cast<std::size_t>(k)] > kTol)
      clear = false;
  out.decongested = clear;

  for (int k = n; k-- > 0;) {
    if (std::abs(out.speeds[static_cast<std::size_t>(k)] - s.u_max) > 1e-9) break;
    out.first_unperturbed = k;
  }
  return out;
}

}  // namespace platoonctl
