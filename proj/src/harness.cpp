#include "platoonctl/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

#include "platoonctl/format.hpp"
#include "platoonctl/queue_predictor.hpp"
#include "platoonctl/rng.hpp"

namespace platoonctl {

double DemandSchedule::level(int step, std::size_t stream) const noexcept {
  if (levels.empty()) return 0.0;
  const auto k = std::min(levels.size() - 1, static_cast<std::size_t>(step / steps_per_hold));
  const double f = (step < warmup_steps || step >= cooldown_from) ? warm_factor : 1.0;
  return f * levels[k][stream];
}

DemandSchedule draw_demand(const ScenarioConfig& c, std::uint64_t seed) {
  DemandSchedule d;
  d.steps_per_hold = std::max(1, static_cast<int>(std::lround(c.demand.hold_interval / c.time.step)));
  d.warmup_steps = c.time.warmup_steps;
  d.cooldown_from = c.time.total_steps - c.time.cooldown_steps;
  d.warm_factor = c.demand.warm_factor;
  Rng rng(seed, Stream::demand);
  const int intervals = (c.time.total_steps + d.steps_per_hold - 1) / d.steps_per_hold;
  d.levels.resize(static_cast<std::size_t>(intervals));
  for (auto& row : d.levels) {
    row.reserve(c.demand.streams.size());
    for (const auto& s : c.demand.streams) row.push_back(rng.uniform(s.min(), s.max()));
  }
  return d;
}

std::vector<double> draw_platoon_arrivals(const ScenarioConfig& c, std::uint64_t seed) {
  Rng rng(seed, Stream::platoons);
  return spawn_arrivals(rng, c.platoons.arrival_rate, c.time.horizon());
}

namespace {

// Origin slot of each demand stream: -1 mainline, k >= 0 on-ramp k.
std::vector<int> stream_slots(const ScenarioConfig& c) {
  std::vector<int> out;
  for (const auto& s : c.demand.streams) {
    if (s.origin == "mainline") {
      out.push_back(-1);
    } else {
      out.push_back(std::stoi(s.origin.substr(6)) - 1);
    }
  }
  return out;
}

double demand_factor(const ScenarioConfig& c, int step) {
  return (step < c.time.warmup_steps || step >= c.time.total_steps - c.time.cooldown_steps) ? c.demand.warm_factor
                                                                                            : 1.0;
}

}  // namespace

RunMetrics run_scenario(const ScenarioConfig& c, ControlCase control, std::uint64_t seed, const RunOptions& opt) {
  RunMetrics m;
  m.control = control;
  m.seed = seed;

  const auto demand = draw_demand(c, seed);
  const auto slots = stream_slots(c);
  PlatoonFleet fleet(c, draw_platoon_arrivals(c, seed));
  m.platoon_arrivals = fleet.arrivals();
  if (!demand.levels.empty()) m.demand_first_interval = demand.levels.front();

  CtmEngine engine(c, PlatoonFleet::ghost_cells(c));
  const double T = c.time.step, V = c.fd.free_flow_speed;
  const bool controlled = control == ControlCase::noramp || control == ControlCase::wramp;
  const CapPolicy policy = control == ControlCase::wramp ? CapPolicy::wramp : CapPolicy::noramp;
  const double mainline_mean =
      c.mean_inflow("mainline", VehicleClass::b) + c.mean_inflow("mainline", VehicleClass::c);
  const int ib = engine.bottleneck_cell();

  CtmInputs in;
  in.onramp_arrivals.assign(c.road.onramps.size(), ClassVec{});
  m.bottleneck_outflow.reserve(static_cast<std::size_t>(c.time.total_steps));
  int retired = 0;

  try {
    for (int s = 0; s < c.time.total_steps; ++s) {
      const double t = s * T;
      const int admitted = fleet.admit(t, engine);
      m.platoons_entered += admitted;

      if (controlled && !fleet.platoons().empty() &&
          (s % c.controller.replan_interval_steps == 0 || admitted > 0 || retired > 0)) {
        const double factor = demand_factor(c, s);
        const auto snap = snapshot_from_ctm(engine, fleet.platoons(), c, factor * mainline_mean / V);
        const RampForecast forecast = control == ControlCase::wramp ? predict_ramp_flows(c, factor) : RampForecast{};
        const Plan plan = plan_platoons(snap, forecast, policy, c, t);
        ++m.replans;
        for (const auto& e : plan.entries) {
          auto it = std::find_if(fleet.platoons().begin(), fleet.platoons().end(),
                                 [&](const PlatoonState& p) { return p.id == e.id; });
          if (it == fleet.platoons().end()) continue;
          it->commanded_speed = e.u;
          it->schedule = e.schedule;
          it->infeasible = !e.feasible;
          if (!e.feasible) ++m.infeasible_plans;
          if (opt.record_commands) {
            const double cap = e.schedule.at(t + (c.road.bottleneck_position - it->x) / V);
            const LaneMode lane =
                cap >= 0.5 * (c.q_hi() + c.q_lo()) ? LaneMode::one_lane : LaneMode::two_lane;
            m.commands.push_back({t, e.id, e.u, lane, cap, e.feasible});
          }
        }
      }

      fleet.apply_commands(t);
      engine.reset_speeds();
      fleet.impose(engine);
      if (control == ControlCase::ideal) apply_ideal_field(engine, c, fleet.platoons());

      in.origin_arrivals = ClassVec{};
      for (auto& r : in.onramp_arrivals) r = ClassVec{};
      for (std::size_t i = 0; i < slots.size(); ++i) {
        const double q = demand.level(s, i);
        const int k = index_of(c.demand.streams[i].vehicle_class);
        if (slots[i] < 0)
          in.origin_arrivals[k] += q;
        else if (static_cast<std::size_t>(slots[i]) < in.onramp_arrivals.size())
          in.onramp_arrivals[static_cast<std::size_t>(slots[i])][k] += q;
      }
      engine.step(in);
      retired = fleet.advance(engine);

      m.bottleneck_outflow.push_back(engine.flows().bottleneck_outflow);
      const double rb = engine.total_density(ib);
      m.max_bottleneck_density = std::max(m.max_bottleneck_density, rb);
      if (rb > engine.params(ib).critical_density + 1e-6) ++m.congested_steps;

      if (opt.record_platoons)
        for (const auto& p : fleet.platoons()) m.platoon_track.push_back({t + T, p.id, p.x, p.u, p.lane});
      if (opt.spacetime_every > 0 && s % opt.spacetime_every == 0) {
        SpaceTimeRecord r;
        r.t = t + T;
        for (int j = 0; j < engine.cells(); ++j) r.rho.push_back(engine.rho(j));
        m.spacetime.push_back(std::move(r));
      }
    }
  } catch (const ConsistencyError& e) {
    throw RunAborted(std::string(e.what()) + " (case " + std::string(to_string(control)) + ", seed " +
                         std::to_string(seed) + ")",
                     seed);
  }

  m.tts = engine.tts().per_class();
  m.total_tts = engine.tts().total();
  m.mass_balance_error = engine.system_mass() - (engine.cumulative_inflow() - engine.cumulative_outflow());
  return m;
}

Delay delay_vs_ideal(const RunMetrics& r, const RunMetrics& ideal) {
  if (r.seed != ideal.seed) throw PairingError("delay needs runs with the same seed");
  Delay d;
  for (int k = 0; k < kNumClasses; ++k)
    d.per_class[k] = ideal.tts[k] > 0.0 ? (r.tts[k] - ideal.tts[k]) / ideal.tts[k] * 100.0 : 0.0;
  d.total = ideal.total_tts > 0.0 ? (r.total_tts - ideal.total_tts) / ideal.total_tts * 100.0 : 0.0;
  return d;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  std::vector<double> s = v;
  std::sort(s.begin(), s.end());
  return std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
}

const std::vector<RunMetrics>* MonteCarloResult::runs_of(ControlCase c) const noexcept {
  for (std::size_t i = 0; i < cases.size(); ++i)
    if (cases[i] == c) return &runs[i];
  return nullptr;
}

const CaseStats* MonteCarloResult::stats_of(ControlCase c) const noexcept {
  for (const auto& s : stats)
    if (s.control == c) return &s;
  return nullptr;
}

MonteCarloResult monte_carlo(const ScenarioConfig& c, const std::vector<ControlCase>& cases, int n_runs,
                             std::uint64_t master, int jobs) {
  if (n_runs < 1) throw std::invalid_argument("monte carlo needs at least one run");
  MonteCarloResult r;
  r.cases = cases;
  for (int i = 0; i < n_runs; ++i) r.seeds.push_back(run_seed(master, static_cast<std::uint64_t>(i)));
  r.runs.assign(cases.size(), std::vector<RunMetrics>(static_cast<std::size_t>(n_runs)));

  const std::size_t total = cases.size() * static_cast<std::size_t>(n_runs);
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr error;
  auto worker = [&] {
    for (std::size_t job = next++; job < total; job = next++) {
      const std::size_t ci = job % cases.size(), i = job / cases.size();
      try {
        auto m = run_scenario(c, cases[ci], r.seeds[i]);
        m.run_index = static_cast<int>(i);
        m.bottleneck_outflow.clear();
        m.bottleneck_outflow.shrink_to_fit();
        r.runs[ci][i] = std::move(m);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!error) error = std::current_exception();
      }
    }
  };
  const int n_threads = std::max(1, std::min<int>(jobs, static_cast<int>(total)));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);

  const auto* ideal = r.runs_of(ControlCase::ideal);
  for (std::size_t ci = 0; ci < cases.size(); ++ci) {
    CaseStats st;
    st.control = cases[ci];
    std::array<std::vector<double>, 4> tts, delay;
    for (std::size_t i = 0; i < r.runs[ci].size(); ++i) {
      const auto& m = r.runs[ci][i];
      for (int k = 0; k < kNumClasses; ++k) tts[static_cast<std::size_t>(k)].push_back(m.tts[k]);
      tts[3].push_back(m.total_tts);
      if (ideal) {
        const Delay d = delay_vs_ideal(m, (*ideal)[i]);
        for (int k = 0; k < kNumClasses; ++k) delay[static_cast<std::size_t>(k)].push_back(d.per_class[k]);
        delay[3].push_back(d.total);
      }
    }
    for (std::size_t k = 0; k < 4; ++k) {
      st.mean_tts[k] = mean(tts[k]);
      st.median_tts[k] = median(tts[k]);
    }
    if (ideal) {
      std::array<double, 4> md{}, mdd{};
      for (std::size_t k = 0; k < 4; ++k) {
        md[k] = mean(delay[k]);
        mdd[k] = median(delay[k]);
      }
      st.mean_delay = md;
      st.median_delay = mdd;
    }
    r.stats.push_back(st);
  }
  return r;
}

namespace {

constexpr const char* kClassCols[4] = {"a", "b", "c", "total"};

std::string opt_num(const std::optional<std::array<double, 4>>& v, std::size_t k) {
  return v ? format_number((*v)[k]) : std::string();
}

}  // namespace

void write_summary_csv(std::ostream& os, const MonteCarloResult& r) {
  os << "case,class,mean_tts,median_tts,mean_delay_pct,median_delay_pct\n";
  for (const auto& s : r.stats)
    for (std::size_t k = 0; k < 4; ++k)
      os << to_string(s.control) << ',' << kClassCols[k] << ',' << format_number(s.mean_tts[k]) << ','
         << format_number(s.median_tts[k]) << ',' << opt_num(s.mean_delay, k) << ','
         << opt_num(s.median_delay, k) << '\n';
}

void write_run_row_header(std::ostream& os) {
  os << "case,run,seed,tts_a,tts_b,tts_c,tts_total,delay_a_pct,delay_b_pct,delay_c_pct,delay_total_pct,"
        "platoons,replans,infeasible_plans,congested_steps\n";
}

void write_run_row(std::ostream& os, const RunMetrics& m, const RunMetrics* ideal) {
  os << to_string(m.control) << ',' << m.run_index << ',' << m.seed;
  for (int k = 0; k < kNumClasses; ++k) os << ',' << format_number(m.tts[k]);
  os << ',' << format_number(m.total_tts);
  if (ideal) {
    const Delay d = delay_vs_ideal(m, *ideal);
    for (int k = 0; k < kNumClasses; ++k) os << ',' << format_number(d.per_class[k]);
    os << ',' << format_number(d.total);
  } else {
    os << ",,,,";
  }
  os << ',' << m.platoons_entered << ',' << m.replans << ',' << m.infeasible_plans << ',' << m.congested_steps << '\n';
}

void write_runs_csv(std::ostream& os, const MonteCarloResult& r) {
  write_run_row_header(os);
  const auto* ideal = r.runs_of(ControlCase::ideal);
  for (std::size_t ci = 0; ci < r.cases.size(); ++ci)
    for (std::size_t i = 0; i < r.runs[ci].size(); ++i)
      write_run_row(os, r.runs[ci][i], ideal ? &(*ideal)[i] : nullptr);
}

void write_boxplot_csv(std::ostream& os, const MonteCarloResult& r) {
  os << "case,run,delay_a_pct,delay_b_pct,delay_c_pct,delay_total_pct\n";
  const auto* ideal = r.runs_of(ControlCase::ideal);
  if (!ideal) return;
  for (std::size_t ci = 0; ci < r.cases.size(); ++ci) {
    for (std::size_t i = 0; i < r.runs[ci].size(); ++i) {
      const Delay d = delay_vs_ideal(r.runs[ci][i], (*ideal)[i]);
      os << to_string(r.cases[ci]) << ',' << i;
      for (int k = 0; k < kNumClasses; ++k) os << ',' << format_number(d.per_class[k]);
      os << ',' << format_number(d.total) << '\n';
    }
  }
}

void write_commands_csv(std::ostream& os, const RunMetrics& m) {
  os << "t,platoon,u_cmd,lane_mode,cap,feasible\n";
  for (const auto& r : m.commands)
    os << format_number(r.t) << ',' << r.platoon << ',' << format_number(r.u) << ',' << to_string(r.lane) << ','
       << format_number(r.cap) << ',' << (r.feasible ? 1 : 0) << '\n';
}

void write_platoons_csv(std::ostream& os, const RunMetrics& m) {
  os << "t,platoon,x,u,lane_mode\n";
  for (const auto& r : m.platoon_track)
    os << format_number(r.t) << ',' << r.platoon << ',' << format_number(r.x) << ',' << format_number(r.u) << ','
       << to_string(r.lane) << '\n';
}

void write_spacetime_csv(std::ostream& os, const RunMetrics& m, double L) {
  os << "t,cell,x,rho_a,rho_b,rho_c\n";
  for (const auto& r : m.spacetime)
    for (std::size_t j = 0; j < r.rho.size(); ++j)
      os << format_number(r.t) << ',' << j << ',' << format_number((static_cast<double>(j) + 0.5) * L) << ','
         << format_number(r.rho[j][0]) << ',' << format_number(r.rho[j][1]) << ',' << format_number(r.rho[j][2])
         << '\n';
}

void write_outflow_csv(std::ostream& os, const RunMetrics& m, double step) {
  os << "t,bottleneck_outflow\n";
  for (std::size_t s = 0; s < m.bottleneck_outflow.size(); ++s)
    os << format_number((static_cast<double>(s) + 1.0) * step) << ',' << format_number(m.bottleneck_outflow[s])
       << '\n';
}

std::uint64_t fnv1a(std::string_view data) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : data) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void write_manifest(const std::filesystem::path& dir, const std::vector<std::string>& header) {
  namespace fs = std::filesystem;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() != "manifest.txt") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::ofstream out(dir / "manifest.txt");
  for (const auto& h : header) out << "# " << h << '\n';
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(ss.str())));
    out << buf << "  " << f.filename().string() << '\n';
  }
}

}  // namespace platoonctl
