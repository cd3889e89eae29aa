#include "platoonctl/platoonctl.h"

#include <cmath>
#include <cstring>
#include <exception>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "platoonctl/controllers.hpp"
#include "platoonctl/format.hpp"
#include "platoonctl/harness.hpp"
#include "platoonctl/queue_predictor.hpp"
#include "platoonctl/stability.hpp"

using namespace platoonctl;

struct pc_config {
  ScenarioConfig cfg;
  ValidationReport report;
  bool validated = false;
};

struct pc_run {
  RunMetrics m;
};

struct pc_montecarlo {
  MonteCarloResult r;
};

namespace {

thread_local std::string g_error;

pc_status fail(pc_status s, const std::string& what) {
  g_error = what;
  return s;
}

// Maps exceptions from the core onto status codes.
template <class F>
pc_status guarded(F&& f) noexcept {
  try {
    g_error.clear();
    return f();
  } catch (const ConfigError& e) {
    return fail(PC_ERR_CONFIG, e.what());
  } catch (const AnalysisError& e) {
    return fail(PC_ERR_ANALYSIS, e.what());
  } catch (const PairingError& e) {
    return fail(PC_ERR_ARGUMENT, e.what());
  } catch (const RunAborted& e) {
    return fail(PC_ERR_RUNTIME, std::string(e.what()) + " (seed " + std::to_string(e.seed()) + ")");
  } catch (const std::ios_base::failure& e) {
    return fail(PC_ERR_IO, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(PC_ERR_IO, e.what());
  } catch (const std::invalid_argument& e) {
    return fail(PC_ERR_ARGUMENT, e.what());
  } catch (const std::exception& e) {
    return fail(PC_ERR_RUNTIME, e.what());
  } catch (...) {
    return fail(PC_ERR_RUNTIME, "unknown error");
  }
}

pc_status copy_out(const std::string& s, char* buf, size_t cap, size_t* needed) {
  if (needed) *needed = s.size();
  if (!buf) return cap == 0 ? PC_OK : fail(PC_ERR_ARGUMENT, "null buffer");
  if (cap < s.size() + 1) return fail(PC_ERR_ARGUMENT, "buffer too small");
  std::memcpy(buf, s.c_str(), s.size() + 1);
  return PC_OK;
}

bool valid_case(pc_case c) { return c >= PC_CASE_NONE && c <= PC_CASE_IDEAL; }
ControlCase to_case(pc_case c) { return static_cast<ControlCase>(static_cast<int>(c)); }

AnalysisParams to_params(const pc_analysis_params& p) {
  AnalysisParams a;
  a.q_in = p.q_in;
  a.q_hi = p.q_hi;
  a.q_lo = p.q_lo;
  a.q_cap = p.q_cap;
  a.q_dis = p.q_dis;
  a.n_pi = p.n_pi;
  a.tau_pi = p.tau_pi;
  a.length = p.length;
  a.u_min = p.u_min;
  a.delta = p.delta;
  a.p_star = p.p_star;
  return a;
}

const ValidationReport& report_of(const pc_config* c) {
  auto* m = const_cast<pc_config*>(c);
  if (!m->validated) {
    m->report = validate(m->cfg);
    m->validated = true;
  }
  return m->report;
}

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::ios_base::failure("cannot write " + p.string());
  return f;
}

MergeRule parse_merge(const std::string& s) {
  if (s == "inflow_pulse") return MergeRule::inflow_pulse;
  if (s == "congested_jump") return MergeRule::congested_jump;
  throw ConfigError("unknown merge rule '" + s + "'");
}

CapPolicy parse_policy(const std::string& s) {
  if (s == "fixed") return CapPolicy::fixed;
  if (s == "noramp") return CapPolicy::noramp;
  if (s == "wramp") return CapPolicy::wramp;
  throw ConfigError("unknown cap policy '" + s + "'");
}

}  // namespace

extern "C" {

const char* pc_last_error(void) { return g_error.c_str(); }
const char* pc_version(void) { return "0.1.0"; }

const char* pc_status_name(pc_status s) {
  switch (s) {
    case PC_OK: return "ok";
    case PC_ERR_ARGUMENT: return "invalid argument";
    case PC_ERR_CONFIG: return "config error";
    case PC_ERR_VALIDATION: return "validation error";
    case PC_ERR_ANALYSIS: return "analysis error";
    case PC_ERR_RUNTIME: return "runtime error";
    case PC_ERR_IO: return "i/o error";
  }
  return "unknown status";
}

pc_status pc_case_parse(const char* name, pc_case* out) {
  if (!name || !out) return fail(PC_ERR_ARGUMENT, "null argument");
  return guarded([&] {
    *out = static_cast<pc_case>(static_cast<int>(parse_control_case(name)));
    return PC_OK;
  });
}

const char* pc_case_name(pc_case c) {
  switch (c) {
    case PC_CASE_NONE: return "none";
    case PC_CASE_NORAMP: return "noramp";
    case PC_CASE_WRAMP: return "wramp";
    case PC_CASE_IDEAL: return "ideal";
  }
  return "";
}

pc_status pc_config_reference(pc_config** out) {
  if (!out) return fail(PC_ERR_ARGUMENT, "null output");
  return guarded([&] {
    *out = new pc_config{reference_scenario(), {}, false};
    return PC_OK;
  });
}

pc_status pc_config_parse(const char* text, pc_config** out) {
  if (!text || !out) return fail(PC_ERR_ARGUMENT, "null argument");
  *out = nullptr;
  return guarded([&] {
    *out = new pc_config{parse_config(text), {}, false};
    return PC_OK;
  });
}

pc_status pc_config_load(const char* path, pc_config** out) {
  if (!path || !out) return fail(PC_ERR_ARGUMENT, "null argument");
  *out = nullptr;
  return guarded([&] {
    *out = new pc_config{load_config(path), {}, false};
    return PC_OK;
  });
}

void pc_config_free(pc_config* c) { delete c; }

pc_status pc_config_serialize(const pc_config* c, char* buf, size_t cap, size_t* needed) {
  if (!c) return fail(PC_ERR_ARGUMENT, "null config");
  return guarded([&] { return copy_out(serialize_config(c->cfg), buf, cap, needed); });
}

pc_status pc_config_hash(const pc_config* c, uint64_t* out) {
  if (!c || !out) return fail(PC_ERR_ARGUMENT, "null argument");
  return guarded([&] {
    *out = fnv1a(serialize_config(c->cfg));
    return PC_OK;
  });
}

pc_status pc_config_validate(const pc_config* c, size_t* count) {
  if (!c || !count) return fail(PC_ERR_ARGUMENT, "null argument");
  return guarded([&] {
    *count = report_of(c).size();
    return *count == 0 ? PC_OK : fail(PC_ERR_VALIDATION, report_of(c).front().name + ": " + report_of(c).front().detail);
  });
}

pc_status pc_config_violation(const pc_config* c, size_t index, char* buf, size_t cap, size_t* needed) {
  if (!c) return fail(PC_ERR_ARGUMENT, "null config");
  return guarded([&] {
    const auto& r = report_of(c);
    if (index >= r.size()) return fail(PC_ERR_ARGUMENT, "violation index out of range");
    return copy_out(r[index].name + ": " + r[index].detail, buf, cap, needed);
  });
}

pc_status pc_config_seed(const pc_config* c, uint64_t* out) {
  if (!c || !out) return fail(PC_ERR_ARGUMENT, "null argument");
  *out = c->cfg.seed;
  return PC_OK;
}

pc_status pc_config_set_seed(pc_config* c, uint64_t seed) {
  if (!c) return fail(PC_ERR_ARGUMENT, "null config");
  c->cfg.seed = seed;
  return PC_OK;
}

pc_status pc_config_cell_length(const pc_config* c, double* out) {
  if (!c || !out) return fail(PC_ERR_ARGUMENT, "null argument");
  *out = c->cfg.road.cell_length;
  return PC_OK;
}

pc_status pc_config_step(const pc_config* c, double* out) {
  if (!c || !out) return fail(PC_ERR_ARGUMENT, "null argument");
  *out = c->cfg.time.step;
  return PC_OK;
}

pc_status pc_config_discharge(const pc_config* c, pc_discharge* out) {
  if (!c || !out) return fail(PC_ERR_ARGUMENT, "null argument");
  return guarded([&] {
    const auto d = discharge_constants(c->cfg.fd, c->cfg.sigma_up(), c->cfg.sigma_down());
    out->congested_density = d.congested_density;
    out->discharge_density = d.discharge_density;
    out->discharge_flow = d.discharge_flow;
    out->capacity = c->cfg.q_cap();
    out->capacity_drop = (out->capacity - d.discharge_flow) / out->capacity;
    return PC_OK;
  });
}

pc_status pc_config_overtaking_flow(const pc_config* c, int lanes, double* out) {
  if (!c || !out) return fail(PC_ERR_ARGUMENT, "null argument");
  if (lanes != 1 && lanes != 2) return fail(PC_ERR_ARGUMENT, "lanes must be 1 or 2");
  const auto& p = c->cfg.platoons;
  const double rho = lanes == 1 ? p.one_lane_density(c->cfg.fd) : p.two_lane_density(c->cfg.fd);
  *out = overtaking_flow(c->cfg.fd.free_flow_speed, c->cfg.sigma_up(), rho);
  return PC_OK;
}

uint64_t pc_run_seed(uint64_t master, uint64_t index) { return run_seed(master, index); }

pc_status pc_run_scenario(const pc_config* c, pc_case k, uint64_t seed, const pc_run_options* o, pc_run** out) {
  if (!c || !out) return fail(PC_ERR_ARGUMENT, "null argument");
  if (!valid_case(k)) return fail(PC_ERR_ARGUMENT, "unknown case");
  *out = nullptr;
  return guarded([&] {
    if (!report_of(c).empty()) return fail(PC_ERR_VALIDATION, "config has violations");
    RunOptions opt;
    if (o) {
      opt.record_commands = o->record_commands != 0;
      opt.record_platoons = o->record_platoons != 0;
      opt.spacetime_every = o->spacetime_every;
    }
    *out = new pc_run{run_scenario(c->cfg, to_case(k), seed, opt)};
    return PC_OK;
  });
}

void pc_run_free(pc_run* r) { delete r; }

pc_status pc_run_tts(const pc_run* r, double tts[4]) {
  if (!r || !tts) return fail(PC_ERR_ARGUMENT, "null argument");
  for (int k = 0; k < kNumClasses; ++k) tts[k] = r->m.tts[k];
  tts[3] = r->m.total_tts;
  return PC_OK;
}

pc_status pc_run_mass_balance_error(const pc_run* r, double* out) {
  if (!r || !out) return fail(PC_ERR_ARGUMENT, "null argument");
  *out = r->m.mass_balance_error;
  return PC_OK;
}

pc_status pc_run_congested_steps(const pc_run* r, int* out) {
  if (!r || !out) return fail(PC_ERR_ARGUMENT, "null argument");
  *out = r->m.congested_steps;
  return PC_OK;
}

pc_status pc_run_platoons(const pc_run* r, int* out) {
  if (!r || !out) return fail(PC_ERR_ARGUMENT, "null argument");
  *out = r->m.platoons_entered;
  return PC_OK;
}

pc_status pc_run_delay(const pc_run* r, const pc_run* ideal, double delay[4]) {
  if (!r || !ideal || !delay) return fail(PC_ERR_ARGUMENT, "null argument");
  return guarded([&] {
    const Delay d = delay_vs_ideal(r->m, ideal->m);
    for (int k = 0; k < kNumClasses; ++k) delay[k] = d.per_class[k];
    delay[3] = d.total;
    return PC_OK;
  });
}

const char* pc_run_row_header(void) {
  static const std::string h = [] {
    std::ostringstream os;
    write_run_row_header(os);
    return os.str();
  }();
  return h.c_str();
}

pc_status pc_run_row(const pc_run* r, const pc_run* ideal, char* buf, size_t cap, size_t* needed) {
  if (!r) return fail(PC_ERR_ARGUMENT, "null run");
  return guarded([&] {
    std::ostringstream os;
    write_run_row(os, r->m, ideal ? &ideal->m : nullptr);
    return copy_out(os.str(), buf, cap, needed);
  });
}

pc_status pc_run_write_dumps(const pc_run* r, const pc_config* c, const char* dir, const char* prefix) {
  if (!r || !c || !dir) return fail(PC_ERR_ARGUMENT, "null argument");
  return guarded([&] {
    const std::filesystem::path d(dir);
    const std::string pre = prefix ? prefix : "";
    std::filesystem::create_directories(d);
    {
      auto f = open_out(d / (pre + "outflow.csv"));
      write_outflow_csv(f, r->m, c->cfg.time.step);
    }
    if (!r->m.commands.empty()) {
      auto f = open_out(d / (pre + "commands.csv"));
      write_commands_csv(f, r->m);
    }
    if (!r->m.platoon_track.empty()) {
      auto f = open_out(d / (pre + "platoons.csv"));
      write_platoons_csv(f, r->m);
    }
    if (!r->m.spacetime.empty()) {
      auto f = open_out(d / (pre + "spacetime.csv"));
      write_spacetime_csv(f, r->m, c->cfg.road.cell_length);
    }
    return PC_OK;
  });
}

pc_status pc_montecarlo_run(const pc_config* c, const pc_case* cases, size_t n_cases, int runs, uint64_t master,
                            int jobs, pc_montecarlo** out) {
  if (!c || !cases || !out) return fail(PC_ERR_ARGUMENT, "null argument");
  if (n_cases == 0) return fail(PC_ERR_ARGUMENT, "no cases");
  if (runs < 1) return fail(PC_ERR_ARGUMENT, "runs must be at least 1");
  *out = nullptr;
  return guarded([&] {
    if (!report_of(c).empty()) return fail(PC_ERR_VALIDATION, "config has violations");
    std::vector<ControlCase> cs;
    for (size_t i = 0; i < n_cases; ++i) {
      if (!valid_case(cases[i])) return fail(PC_ERR_ARGUMENT, "unknown case");
      cs.push_back(to_case(cases[i]));
    }
    *out = new pc_montecarlo{monte_carlo(c->cfg, cs, runs, master, jobs)};
    return PC_OK;
  });
}

void pc_montecarlo_free(pc_montecarlo* mc) { delete mc; }

pc_status pc_montecarlo_stats(const pc_montecarlo* mc, pc_case k, pc_case_stats* out) {
  if (!mc || !out) return fail(PC_ERR_ARGUMENT, "null argument");
  const CaseStats* s = mc->r.stats_of(to_case(k));
  if (!valid_case(k) || !s) return fail(PC_ERR_ARGUMENT, "case not in run");
  for (int i = 0; i < 4; ++i) {
    out->mean_tts[i] = s->mean_tts[static_cast<std::size_t>(i)];
    out->median_tts[i] = s->median_tts[static_cast<std::size_t>(i)];
    out->mean_delay[i] = s->mean_delay ? (*s->mean_delay)[static_cast<std::size_t>(i)] : 0.0;
    out->median_delay[i] = s->median_delay ? (*s->median_delay)[static_cast<std::size_t>(i)] : 0.0;
  }
  out->has_delay = s->mean_delay.has_value() ? 1 : 0;
  return PC_OK;
}

pc_status pc_montecarlo_run_count(const pc_montecarlo* mc, int* out) {
  if (!mc || !out) return fail(PC_ERR_ARGUMENT, "null argument");
  *out = static_cast<int>(mc->r.seeds.size());
  return PC_OK;
}

pc_status pc_montecarlo_run_tts(const pc_montecarlo* mc, pc_case k, int index, double tts[4]) {
  if (!mc || !tts) return fail(PC_ERR_ARGUMENT, "null argument");
  const auto* runs = valid_case(k) ? mc->r.runs_of(to_case(k)) : nullptr;
  if (!runs) return fail(PC_ERR_ARGUMENT, "case not in run");
  if (index < 0 || index >= static_cast<int>(runs->size())) return fail(PC_ERR_ARGUMENT, "run index out of range");
  const auto& m = (*runs)[static_cast<std::size_t>(index)];
  for (int i = 0; i < kNumClasses; ++i) tts[i] = m.tts[i];
  tts[3] = m.total_tts;
  return PC_OK;
}

pc_status pc_montecarlo_seed(const pc_montecarlo* mc, int index, uint64_t* out) {
  if (!mc || !out) return fail(PC_ERR_ARGUMENT, "null argument");
  if (index < 0 || index >= static_cast<int>(mc->r.seeds.size())) return fail(PC_ERR_ARGUMENT, "run index out of range");
  *out = mc->r.seeds[static_cast<std::size_t>(index)];
  return PC_OK;
}

pc_status pc_montecarlo_write(const pc_montecarlo* mc, const char* dir) {
  if (!mc || !dir) return fail(PC_ERR_ARGUMENT, "null argument");
  return guarded([&] {
    const std::filesystem::path d(dir);
    std::filesystem::create_directories(d);
    {
      auto f = open_out(d / "summary.csv");
      write_summary_csv(f, mc->r);
    }
    {
      auto f = open_out(d / "runs.csv");
      write_runs_csv(f, mc->r);
    }
    {
      auto f = open_out(d / "boxplot.csv");
      write_boxplot_csv(f, mc->r);
    }
    return PC_OK;
  });
}

pc_status pc_analysis_defaults(const pc_config* c, double q_in, pc_analysis_params* out) {
  if (!c || !out) return fail(PC_ERR_ARGUMENT, "null argument");
  return guarded([&] {
    const auto a = AnalysisParams::from(c->cfg, q_in);
    *out = {a.q_in, a.q_hi, a.q_lo, a.q_cap, a.q_dis, a.n_pi, a.tau_pi, a.length, a.u_min, a.delta, a.p_star};
    return PC_OK;
  });
}

pc_status pc_analyze(const pc_analysis_params* p, pc_analysis_report* out) {
  if (!p || !out) return fail(PC_ERR_ARGUMENT, "null argument");
  return guarded([&] {
    const auto a = to_params(*p);
    *out = {};
    out->uncontrolled_stable = uncontrolled_stable(a) ? 1 : 0;
    out->effective_inflow = a.effective_inflow();
    try {
      a.check_ordering();
      out->ordering_ok = 1;
    } catch (const AnalysisError&) {
      out->ordering_ok = 0;
    }
    const auto r = recursion_coeffs(a);
    const auto t = stability_threshold(a);
    out->a = r.a;
    out->b = r.b;
    out->threshold = t.stable;
    out->necessary_bound = t.necessary;
    out->phase_two_threshold = phase_two_threshold(a);
    out->throughput = throughput_estimate(a);
    out->throughput_queue = throughput_initial_queue(a);
    return PC_OK;
  });
}

pc_status pc_throughput_at(const pc_analysis_params* p, double n0, double* out) {
  if (!p || !out) return fail(PC_ERR_ARGUMENT, "null argument");
  return guarded([&] {
    *out = throughput_estimate(to_params(*p), n0);
    return PC_OK;
  });
}

pc_status pc_phase_two_count(const pc_analysis_params* p, double n0, int* out) {
  if (!p || !out) return fail(PC_ERR_ARGUMENT, "null argument");
  return guarded([&] {
    *out = phase_two_count(to_params(*p), n0);
    return PC_OK;
  });
}

pc_status pc_recovery_count(const pc_analysis_params* p, double n, int* out) {
  if (!p || !out) return fail(PC_ERR_ARGUMENT, "null argument");
  return guarded([&] {
    *out = recovery_count(to_params(*p), n);
    return PC_OK;
  });
}

pc_status pc_failure_probability(const pc_analysis_params* p, double n0, double* out) {
  if (!p || !out) return fail(PC_ERR_ARGUMENT, "null argument");
  return guarded([&] {
    *out = failure_probability(n0, to_params(*p));
    return PC_OK;
  });
}

pc_status pc_empirical_failure_rate(const pc_analysis_params* p, double n0, int trials, uint64_t seed, double* out) {
  if (!p || !out) return fail(PC_ERR_ARGUMENT, "null argument");
  if (trials < 1) return fail(PC_ERR_ARGUMENT, "trials must be at least 1");
  return guarded([&] {
    *out = empirical_failure_rate(n0, to_params(*p), trials, seed);
    return PC_OK;
  });
}

pc_status pc_periodic_decongests(const pc_analysis_params* p, double n0, int* out) {
  if (!p || !out) return fail(PC_ERR_ARGUMENT, "null argument");
  return guarded([&] {
    *out = simulate_periodic_control(to_params(*p), n0).decongested ? 1 : 0;
    return PC_OK;
  });
}

pc_status pc_predict_file(const pc_config* c, const char* state_path, const char* dir) {
  if (!c || !state_path || !dir) return fail(PC_ERR_ARGUMENT, "null argument");
  return guarded([&] {
    std::ifstream in(state_path, std::ios::binary);
    if (!in) return fail(PC_ERR_IO, std::string("cannot read ") + state_path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      return fail(PC_ERR_CONFIG, std::string("state file: ") + e.what());
    }
    try {
      PredictorConfig cfg = PredictorConfig::from(c->cfg);
      cfg.policy = parse_policy(j.value("policy", std::string("noramp")));
      cfg.merge = parse_merge(j.value("merge", std::string("inflow_pulse")));
      const double horizon = j.value("horizon", 0.2);
      cfg.horizon_steps = static_cast<int>(std::ceil(horizon / cfg.step - 1e-9));

      QueueSnapshot s;
      s.cell_length = j.value("cell_length", c->cfg.road.cell_length);
      s.upstream_density = j.value("upstream_density", 0.0);
      s.n_b = j.value("n_b", 0.0);
      if (j.contains("rho")) s.rho = j.at("rho").get<std::vector<double>>();
      const double rho_ref = c->cfg.platoons.one_lane_density(c->cfg.fd);
      int id = 0;
      for (const auto& pj : j.value("platoons", nlohmann::json::array())) {
        PredictorPlatoon p;
        p.id = pj.value("id", id++);
        p.x = pj.at("x").get<double>();
        p.u = pj.at("u").get<double>();
        p.size = pj.value("size", c->cfg.platoons.size);
        p.length = pj.value("length", p.size / rho_ref);
        p.initial_queue = pj.value("initial_queue", 0.0);
        p.force_low = pj.value("force_low", false);
        if (pj.contains("cap")) p.cap = pj.at("cap").get<std::vector<double>>();
        s.platoons.push_back(p);
      }
      const RampForecast forecast =
          j.value("ramps", cfg.policy == CapPolicy::wramp) ? predict_ramp_flows(c->cfg) : RampForecast{};
      const Prediction pr = predict(s, forecast, cfg);

      const std::filesystem::path d(dir);
      std::filesystem::create_directories(d);
      auto f = open_out(d / "prediction.csv");
      f << "t,n_b,q_b_in,q_b_out";
      for (std::size_t p = 0; p < s.platoons.size(); ++p) f << ",n_p" << p << ",cap_p" << p;
      f << '\n';
      for (int k = 0; k < pr.steps(); ++k) {
        const auto ku = static_cast<std::size_t>(k);
        f << format_number(pr.time(k)) << ',' << format_number(pr.n_b[ku]) << ',' << format_number(pr.q_b_in[ku])
          << ',' << format_number(pr.q_b_out[ku]);
        for (std::size_t p = 0; p < s.platoons.size(); ++p)
          f << ',' << format_number(pr.n_p[p][ku]) << ',' << format_number(pr.cap_p[p][ku]);
        f << '\n';
      }
      auto g = open_out(d / "prediction_platoons.csv");
      g << "platoon,t_free_flow,t_arrival,queue_at_arrival\n";
      for (std::size_t p = 0; p < s.platoons.size(); ++p)
        g << s.platoons[p].id << ',' << format_number(pr.events[p].at_free_flow) << ','
          << format_number(pr.events[p].at_platoon) << ',' << format_number(pr.queue_at_arrival[p]) << '\n';
    } catch (const nlohmann::json::exception& e) {
      return fail(PC_ERR_CONFIG, std::string("state file: ") + e.what());
    }
    return PC_OK;
  });
}

pc_status pc_write_manifest(const char* dir, const char* const* header, size_t n) {
  if (!dir || (n > 0 && !header)) return fail(PC_ERR_ARGUMENT, "null argument");
  return guarded([&] {
    std::vector<std::string> h;
    for (size_t i = 0; i < n; ++i) h.emplace_back(header[i] ? header[i] : "");
    write_manifest(dir, h);
    return PC_OK;
  });
}

}  // extern "C"
