// Acceptance suite: one PASS/FAIL line per criterion.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstdarg>
#include <cstring>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "platoonctl/harness.hpp"
#include "platoonctl/stability.hpp"
#include "support.hpp"

using namespace platoonctl;

namespace {

int failures = 0;

void report(int id, bool pass, const std::string& what) {
  std::printf("criterion %d: %s  %s\n", id, pass ? "PASS" : "FAIL", what.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

void note(const std::string& what) { std::printf("    %s\n", what.c_str()); }

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// 1
void discharge_constants_check() {
  const auto c = reference_scenario();
  const auto dc = discharge_constants(c.fd, c.sigma_up(), c.sigma_down());
  const double drop = (c.q_cap() - dc.discharge_flow) / c.q_cap() * 100.0;
  const bool pass = std::abs(dc.discharge_density - 1440.0 / 44.0) <= 1e-12 &&
                    std::abs(dc.discharge_flow - 3272.7) < 0.05 && std::abs(drop - 18.18) < 0.005;
  report(1, pass,
         fmt("discharge density %.6f veh/km (1440/44 = %.6f), discharge flow %.1f veh/h, capacity drop %.2f%%",
             dc.discharge_density, 1440.0 / 44.0, dc.discharge_flow, drop));
}

// 2
void throughput_check() {
  auto p = AnalysisParams::from(reference_scenario(), 3000.0);
  p.p_star = 0.9;
  const double q = throughput_estimate(p);
  report(2, std::abs(q - 3513.2) <= 0.5, fmt("throughput bound %.2f veh/h (target 3513.2 +- 0.5)", q));
}

// 3
void periodic_oracle_check() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto base = AnalysisParams::from(reference_scenario(), 3000.0);
  const double q_in[] = {3300.0, 3425.0, 3550.0, 3675.0, 3800.0};
  const double frac[] = {0.5, 0.8, 0.95, 1.05, 1.2};
  int agree = 0, total = 0, in_band = 0;
  std::string misses;
  for (double q : q_in)
    for (double f : frac) {
      auto p = base;
      p.q_in = q;
      const double thr = stability_threshold(p).stable;
      const double n0 = f * thr;
      const bool predicted = n0 < thr;
      const bool observed = simulate_periodic_control(p, n0).decongested;
      const bool band = std::abs(n0 - thr) <= p.n_pi;
      ++total;
      if (band) ++in_band;
      if (observed == predicted || band) {
        ++agree;
      } else {
        misses += fmt(" (%.0f, %.1f)", q, n0);
      }
    }
  report(3, agree == total,
         fmt("%d/%d grid points agree with the threshold rule (%d inside the +-2 veh band), %.1f s", agree, total,
             in_band, seconds_since(t0)) +
             (misses.empty() ? "" : "; disagree at" + misses));
}

// 4
void logistic_check() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto p = AnalysisParams::from(reference_scenario(), 3000.0);
  const double thr = stability_threshold(p).stable;
  double worst = 0.0;
  std::string detail;
  for (int i = 0; i < 9; ++i) {
    const double n0 = thr + (i - 4) * 0.25 * p.delta;
    const double emp = empirical_failure_rate(n0, p, 1000, 1000 + static_cast<std::uint64_t>(i));
    const double model = failure_probability(n0, p);
    worst = std::max(worst, std::abs(emp - model));
    detail += fmt(" %.3f/%.3f", emp, model);
  }
  report(4, worst <= 0.05,
         fmt("max |empirical - logistic| = %.3f over 9 points x 1000 trials (%.1f s)", worst, seconds_since(t0)));
  note("empirical/logistic:" + detail);
  double converged = 0.0;
  for (int i = 0; i < 9; ++i) {
    const double n0 = thr + (i - 4) * 0.25 * p.delta;
    const double emp = empirical_failure_rate(n0, p, 100000, 5000 + static_cast<std::uint64_t>(i));
    converged = std::max(converged, std::abs(emp - failure_probability(n0, p)));
  }
  note(fmt("same grid with 100000 trials per point: max deviation %.3f (1000-trial sampling sd at p = 0.5 is 0.016)",
           converged));
}

// 5, 6, 7
void monte_carlo_checks(int runs, int jobs) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto c = reference_scenario();
  const std::vector<ControlCase> cases{ControlCase::none, ControlCase::noramp, ControlCase::wramp,
                                       ControlCase::ideal};
  const auto mc = monte_carlo(c, cases, runs, 2024, jobs);
  const double target[] = {449.08, 413.78, 385.27, 327.92};
  double mean[4];
  for (int i = 0; i < 4; ++i) mean[i] = mc.stats_of(cases[static_cast<std::size_t>(i)])->mean_tts[3];
  const bool order = mean[3] < mean[2] && mean[2] < mean[1] && mean[1] < mean[0];
  bool within = true;
  std::string d5;
  for (int i = 0; i < 4; ++i) {
    const double rel = (mean[i] - target[i]) / target[i] * 100.0;
    within = within && std::abs(rel) <= 12.0;
    d5 += fmt(" %s %.2f (%+.1f%%)", std::string(to_string(cases[static_cast<std::size_t>(i)])).c_str(), mean[i], rel);
  }
  report(5, order && within,
         fmt("%d paired runs in %.0f s; ordering ideal < wramp < noramp < none %s; mean total TTS:", runs,
             seconds_since(t0), order ? "holds" : "violated") +
             d5);

  // 6
  const double delay_target[] = {36.9, 26.2, 17.5};
  bool ok6 = true;
  std::string d6;
  for (int i = 0; i < 3; ++i) {
    const auto* s = mc.stats_of(cases[static_cast<std::size_t>(i)]);
    const double m = (*s->mean_delay)[3];
    ok6 = ok6 && std::abs(m - delay_target[i]) <= 8.0;
    d6 += fmt(" %s %.2f%% (target %.1f)", std::string(to_string(cases[static_cast<std::size_t>(i)])).c_str(), m,
              delay_target[i]);
  }
  const double med_w = (*mc.stats_of(ControlCase::wramp)->median_delay)[3];
  const double med_n = (*mc.stats_of(ControlCase::none)->median_delay)[3];
  const bool med_ok = med_w >= 4.0 && med_w <= 15.0;
  const double ratio_of_medians = med_n > 0 ? (1.0 - med_w / med_n) * 100.0 : 0.0;
  std::vector<double> per_run;
  const auto* rn = mc.runs_of(ControlCase::none);
  const auto* rw = mc.runs_of(ControlCase::wramp);
  const auto* ri = mc.runs_of(ControlCase::ideal);
  for (std::size_t i = 0; i < rn->size(); ++i) {
    const double dn = delay_vs_ideal((*rn)[i], (*ri)[i]).total;
    const double dw = delay_vs_ideal((*rw)[i], (*ri)[i]).total;
    if (dn > 0) per_run.push_back((1.0 - dw / dn) * 100.0);
  }
  const double median_of_ratios = per_run.empty() ? 0.0 : median(per_run);
  const bool frac_ok = ratio_of_medians >= 60.0 && ratio_of_medians <= 90.0;
  report(6, ok6 && med_ok && frac_ok,
         "mean total delay:" + d6 + fmt("; wramp median %.2f%% (band 4-15); eliminated by median %.1f%% (band 60-90)",
                                        med_w, ratio_of_medians));
  note(fmt("eliminated delay: ratio of medians %.1f%%, median of per-run ratios %.1f%% (%zu runs with positive delay)",
           ratio_of_medians, median_of_ratios, per_run.size()));

  // 7
  const double a_w = mc.stats_of(ControlCase::wramp)->mean_tts[0];
  const double a_n = mc.stats_of(ControlCase::none)->mean_tts[0];
  report(7, a_w < a_n, fmt("mean platoon-class TTS wramp %.3f vs none %.3f veh h", a_w, a_n));
}

// 8
void property_checks() {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::string> parts;
  bool pass = true;

  // conservation fuzz
  {
    const auto c = reference_scenario();
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      CtmEngine e(c, 0);
      Rng rng(seed);
      CtmInputs in;
      in.onramp_arrivals.assign(c.road.onramps.size(), ClassVec{});
      for (int s = 0; s < 10000; ++s) {
        if (s % 20 == 0) {
          in.origin_arrivals = {0.0, rng.uniform(1000, 4500), rng.uniform(500, 1500)};
          in.onramp_arrivals[0] = {0.0, rng.uniform(500, 2500), 0.0};
        }
        e.reset_speeds();
        if (s % 7 == 0)
          for (int j = 0; j < e.cells(); j += 13) e.speed(j)[1] = rng.uniform(10, 100);
        e.step(in);
      }
      const double bal = e.cumulative_inflow() - e.cumulative_outflow() - e.system_mass();
      worst = std::max(worst, std::abs(bal) / e.cumulative_inflow());
    }
    pass = pass && worst <= 1e-6;
    parts.push_back(fmt("conservation rel err %.2e", worst));
  }
  // free-flow translation
  {
    auto c = reference_scenario();
    c.road.onramps.clear();
    c.road.offramps.clear();
    CtmEngine e(c, 0);
    Rng rng(5);
    for (int j = 0; j < e.cells(); ++j) e.rho(j) = {0.0, rng.uniform(0, 20), rng.uniform(0, 15)};
    CtmInputs in;
    in.origin_arrivals = {0, 1700, 600};
    double worst = 0.0;
    for (int s = 0; s < 300; ++s) {
      std::vector<ClassVec> before(static_cast<std::size_t>(e.cells()));
      for (int j = 0; j < e.cells(); ++j) before[static_cast<std::size_t>(j)] = e.rho(j);
      e.reset_speeds();
      e.step(in);
      for (int j = 1; j < e.cells(); ++j)
        for (int k = 1; k < kNumClasses; ++k) {
          const double want = before[static_cast<std::size_t>(j - 1)][k];
          worst = std::max(worst, std::abs(e.rho(j)[k] - want) / std::max(1.0, want));
        }
    }
    pass = pass && worst <= 1e-12;
    parts.push_back(fmt("translation rel err %.1e", worst));
  }
  // profile convergence
  {
    double worst = 0.0;
    for (LaneMode lane : {LaneMode::one_lane, LaneMode::two_lane}) {
      testing::PlatoonRig rig(reference_scenario());
      for (int s = 0; s < 40; ++s) rig.step(70.0, lane);
      const auto& p = rig.fleet.platoons().front();
      const double L = rig.config.road.cell_length;
      const int head = static_cast<int>(std::floor(p.x / L)) - 1;
      const int tail = static_cast<int>(std::ceil(p.tail() / L));
      int last = head;
      if ((head - tail + 1) % 2 == 1) --last;
      double sign = 1.0;
      for (int j = tail; j <= last; ++j, sign = -sign) rig.engine.rho(j)[0] *= 1.0 + 0.2 * sign;
      for (int s = 0; s < 50; ++s) rig.step(70.0, lane);
      worst = std::max(worst, rig.profile_error());
    }
    pass = pass && worst < 1e-3;
    parts.push_back(fmt("profile sup-norm after 50 steps %.1e veh/km", worst));
  }
  // overtaking flows
  {
    const auto c = reference_scenario();
    const double V = c.fd.free_flow_speed;
    const double one = overtaking_flow(V, c.sigma_up(), c.platoons.one_lane_density(c.fd));
    const double two = overtaking_flow(V, c.sigma_up(), c.platoons.two_lane_density(c.fd));
    const bool ok = std::abs(one - 4000.0) < 1e-9 && std::abs(two - 2000.0) < 1e-9 &&
                    std::abs(c.q_hi() - 4000.0) < 1e-9 && std::abs(c.q_lo() - 2000.0) < 1e-9;
    pass = pass && ok;
    parts.push_back(fmt("overtaking flow %.0f/%.0f veh/h", one, two));
  }
  std::string line;
  for (std::size_t i = 0; i < parts.size(); ++i) line += (i ? "; " : "") + parts[i];
  report(8, pass, line + fmt(" (%.1f s)", seconds_since(t0)));

  // Saturated flow past a slow platoon in the engine, for reference.
  for (LaneMode lane : {LaneMode::one_lane, LaneMode::two_lane}) {
    testing::PlatoonRig rig(reference_scenario());
    for (int j = 0; j < rig.engine.cells(); ++j) rig.engine.rho(j)[1] = 50.0;
    rig.inputs.origin_arrivals = {0, 5000, 0};
    double acc = 0.0;
    int n = 0;
    for (int s = 0; s < 300; ++s) {
      rig.step(50.0, lane);
      if (s < 150 || rig.fleet.platoons().empty()) continue;
      const auto& p = rig.fleet.platoons().front();
      const int probe = static_cast<int>(std::ceil(p.x / rig.config.road.cell_length)) + 4;
      if (probe >= rig.engine.bottleneck_cell()) continue;
      acc += rig.engine.flows().q[static_cast<std::size_t>(probe + rig.engine.ghost())][1];
      ++n;
    }
    note(fmt("informational: saturated engine flow past a %s platoon at 50 km/h = %.0f veh/h",
             lane == LaneMode::one_lane ? "one-lane" : "two-lane", n ? acc / n : 0.0));
  }
}

// 9
void determinism_check() {
  const auto c = reference_scenario();
  bool same = true;
  for (auto k : {ControlCase::none, ControlCase::noramp, ControlCase::wramp, ControlCase::ideal})
    for (std::uint64_t seed : {run_seed(7, 0), run_seed(7, 1)}) {
      const auto ideal = run_scenario(c, ControlCase::ideal, seed);
      std::ostringstream a, b;
      write_run_row(a, run_scenario(c, k, seed), &ideal);
      write_run_row(b, run_scenario(c, k, seed), &ideal);
      same = same && a.str() == b.str();
    }
  report(9, same, "repeated (config, case, seed) runs give identical runs.csv rows for all cases, 2 seeds");
}

}  // namespace

int main(int argc, char** argv) {
  int runs = 50;
  int jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  bool strict = false;
  for (int i = 1; i < argc; ++i) {
    if (!std::strcmp(argv[i], "--runs") && i + 1 < argc)
      runs = std::atoi(argv[++i]);
    else if (!std::strcmp(argv[i], "--jobs") && i + 1 < argc)
      jobs = std::atoi(argv[++i]);
    else if (!std::strcmp(argv[i], "--strict"))
      strict = true;
    else {
      std::fprintf(stderr, "usage: %s [--runs N] [--jobs N] [--strict]\n", argv[0]);
      return 2;
    }
  }
  discharge_constants_check();
  throughput_check();
  periodic_oracle_check();
  logistic_check();
  monte_carlo_checks(runs, jobs);
  property_checks();
  determinism_check();
  std::printf("%d of 9 criteria failed\n", failures);
  return strict && failures > 0 ? 1 : 0;
}
