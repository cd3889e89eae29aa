#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "platoonctl/platoonctl.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 1;
constexpr int kExitRuntime = 2;

struct Failure {
  int code;
  std::string message;
};

int exit_code(pc_status s) {
  switch (s) {
    case PC_OK: return kExitOk;
    case PC_ERR_RUNTIME:
    case PC_ERR_IO: return kExitRuntime;
    default: return kExitInvalid;
  }
}

void check(pc_status s, const std::string& what) {
  if (s != PC_OK) throw Failure{exit_code(s), what + ": " + pc_last_error()};
}

struct ConfigHandle {
  pc_config* p = nullptr;
  ~ConfigHandle() { pc_config_free(p); }
};
struct RunHandle {
  pc_run* p = nullptr;
  ~RunHandle() { pc_run_free(p); }
};
struct McHandle {
  pc_montecarlo* p = nullptr;
  ~McHandle() { pc_montecarlo_free(p); }
};

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  int jobs = 1;
  std::string cases;
  int runs = 50;
  double pstar = 0.9;
  double qin = 3000.0;
  std::optional<double> n0;
  int spacetime = 0;
  std::string state;
  bool sweep = false;
};

std::string default_out() {
  const char* env = std::getenv("PLATOONCTL_OUT");
  return env && *env ? env : "out";
}

void load(ConfigHandle& h, const Options& o) {
  if (o.config.empty())
    check(pc_config_reference(&h.p), "reference config");
  else
    check(pc_config_load(o.config.c_str(), &h.p), "config " + o.config);
  std::size_t n = 0;
  if (pc_config_validate(h.p, &n) != PC_OK) {
    std::string msg = "config has " + std::to_string(n) + " violation(s)";
    for (std::size_t i = 0; i < n; ++i) {
      char buf[512];
      std::size_t need = 0;
      if (pc_config_violation(h.p, i, buf, sizeof buf, &need) == PC_OK) msg += std::string("\n  ") + buf;
    }
    throw Failure{kExitInvalid, msg};
  }
}

std::vector<pc_case> parse_cases(const std::string& list) {
  std::vector<pc_case> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    pc_case c;
    check(pc_case_parse(item.c_str(), &c), "case list");
    out.push_back(c);
  }
  if (out.empty()) throw Failure{kExitInvalid, "case list is empty"};
  return out;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
  return buf;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::filesystem::path prepare_out(const Options& o) {
  std::filesystem::path d(o.out.empty() ? default_out() : o.out);
  std::error_code ec;
  std::filesystem::create_directories(d, ec);
  if (ec) throw Failure{kExitInvalid, "output directory " + d.string() + ": " + ec.message()};
  std::ofstream probe(d / ".probe");
  if (!probe) throw Failure{kExitInvalid, "output directory " + d.string() + " is not writable"};
  probe.close();
  std::filesystem::remove(d / ".probe", ec);
  return d;
}

void manifest(const std::filesystem::path& dir, std::vector<std::string> header, const ConfigHandle& cfg) {
  std::uint64_t h = 0;
  check(pc_config_hash(cfg.p, &h), "config hash");
  header.insert(header.begin(), "config_hash " + hex64(h));
  header.insert(header.begin(), std::string("platoonctl ") + pc_version());
  std::vector<const char*> ptr;
  for (const auto& s : header) ptr.push_back(s.c_str());
  check(pc_write_manifest(dir.string().c_str(), ptr.data(), ptr.size()), "manifest");
}

std::string run_row(const RunHandle& r, const RunHandle* ideal) {
  std::size_t need = 0;
  check(pc_run_row(r.p, ideal ? ideal->p : nullptr, nullptr, 0, &need), "run row");
  std::string s(need + 1, '\0');
  check(pc_run_row(r.p, ideal ? ideal->p : nullptr, s.data(), s.size(), &need), "run row");
  s.resize(need);
  return s;
}

int cmd_validate(const Options& o) {
  ConfigHandle cfg;
  load(cfg, o);
  std::printf("config ok\n");
  return kExitOk;
}

int cmd_simulate(const Options& o) {
  ConfigHandle cfg;
  load(cfg, o);
  const auto cases = parse_cases(o.cases.empty() ? "wramp,ideal" : o.cases);
  std::uint64_t seed = 0;
  check(pc_config_seed(cfg.p, &seed), "seed");
  if (o.seed) seed = *o.seed;
  const auto dir = prepare_out(o);

  pc_run_options opt{1, 1, o.spacetime};
  std::vector<std::unique_ptr<RunHandle>> runs;
  const RunHandle* ideal = nullptr;
  for (pc_case c : cases) {
    runs.push_back(std::make_unique<RunHandle>());
    check(pc_run_scenario(cfg.p, c, seed, &opt, &runs.back()->p), std::string("run ") + pc_case_name(c));
    if (c == PC_CASE_IDEAL) ideal = runs.back().get();
    check(pc_run_write_dumps(runs.back()->p, cfg.p, dir.string().c_str(), (std::string(pc_case_name(c)) + "_").c_str()),
          "dumps");
  }
  std::ofstream f(dir / "runs.csv", std::ios::binary);
  f << pc_run_row_header();
  std::printf("%-8s %10s %10s %10s %10s\n", "case", "tts_a", "tts_b", "tts_c", "total");
  for (std::size_t i = 0; i < cases.size(); ++i) {
    f << run_row(*runs[i], ideal);
    double t[4];
    check(pc_run_tts(runs[i]->p, t), "tts");
    std::printf("%-8s %10.2f %10.2f %10.2f %10.2f\n", pc_case_name(cases[i]), t[0], t[1], t[2], t[3]);
  }
  f.close();
  manifest(dir, {"command simulate", "seed " + std::to_string(seed), "cases " + (o.cases.empty() ? "wramp,ideal" : o.cases)},
           cfg);
  return kExitOk;
}

int cmd_montecarlo(const Options& o) {
  ConfigHandle cfg;
  load(cfg, o);
  const std::string list = o.cases.empty() ? "none,noramp,wramp,ideal" : o.cases;
  const auto cases = parse_cases(list);
  std::uint64_t master = 0;
  check(pc_config_seed(cfg.p, &master), "seed");
  if (o.seed) master = *o.seed;
  if (o.runs < 1) throw Failure{kExitInvalid, "--runs must be at least 1"};
  const auto dir = prepare_out(o);

  McHandle mc;
  check(pc_montecarlo_run(cfg.p, cases.data(), cases.size(), o.runs, master, o.jobs, &mc.p), "monte carlo");
  check(pc_montecarlo_write(mc.p, dir.string().c_str()), "write results");

  std::printf("%-8s %-6s %10s %10s %10s %10s\n", "case", "class", "mean_tts", "median_tts", "mean_dly%", "med_dly%");
  const char* cls[4] = {"a", "b", "c", "total"};
  for (pc_case c : cases) {
    pc_case_stats s;
    check(pc_montecarlo_stats(mc.p, c, &s), "stats");
    for (int k = 0; k < 4; ++k) {
      std::printf("%-8s %-6s %10.2f %10.2f", pc_case_name(c), cls[k], s.mean_tts[k], s.median_tts[k]);
      if (s.has_delay)
        std::printf(" %10.2f %10.2f\n", s.mean_delay[k], s.median_delay[k]);
      else
        std::printf(" %10s %10s\n", "-", "-");
    }
  }

  std::string seeds;
  for (int i = 0; i < o.runs; ++i) {
    std::uint64_t s = 0;
    check(pc_montecarlo_seed(mc.p, i, &s), "seed");
    seeds += (i ? "," : "") + std::to_string(s);
  }
  manifest(dir,
           {"command montecarlo", "master_seed " + std::to_string(master), "runs " + std::to_string(o.runs),
            "cases " + list, "run_seeds " + seeds},
           cfg);
  return kExitOk;
}

int cmd_analyze(const Options& o) {
  ConfigHandle cfg;
  load(cfg, o);
  pc_analysis_params p;
  check(pc_analysis_defaults(cfg.p, o.qin, &p), "analysis inputs");
  p.p_star = o.pstar;
  pc_analysis_report r;
  check(pc_analyze(&p, &r), "analysis");

  std::printf("inputs: Q_in=%s Q_hi=%s Q_lo=%s q_dis=%s n_pi=%s tau_pi=%s h l=%s km U_min=%s Delta=%s P*=%s\n",
              fixed(p.q_in, 1).c_str(), fixed(p.q_hi, 1).c_str(), fixed(p.q_lo, 1).c_str(), fixed(p.q_dis, 1).c_str(),
              fixed(p.n_pi, 2).c_str(), fixed(p.tau_pi, 5).c_str(), fixed(p.length, 2).c_str(),
              fixed(p.u_min, 1).c_str(), fixed(p.delta, 3).c_str(), fixed(p.p_star, 3).c_str());
  std::printf("effective inflow           %12.1f veh/h\n", r.effective_inflow);
  std::printf("uncontrolled stable        %12s\n", r.uncontrolled_stable ? "yes" : "no");
  std::printf("flow ordering              %12s\n", r.ordering_ok ? "holds" : "violated");
  std::printf("a                          %12.4f\n", r.a);
  std::printf("b                          %12.2f veh\n", r.b);
  std::printf("stability threshold        %12.2f veh\n", r.threshold);
  std::printf("necessary bound            %12.2f veh\n", r.necessary_bound);
  std::printf("phase-two threshold c      %12.2f veh\n", r.phase_two_threshold);
  if (o.n0) {
    int k1 = -1, k2 = -1;
    check(pc_phase_two_count(&p, *o.n0, &k1), "phase-two count");
    double n = *o.n0;
    for (int k = 0; k < k1; ++k) n = r.a * n + r.b;
    check(pc_recovery_count(&p, n, &k2), "recovery count");
    std::printf("platoons to phase two k'   %12d\n", k1);
    std::printf("recovery platoons k''      %12d\n", k2);
    double q = 0.0;
    check(pc_throughput_at(&p, *o.n0, &q), "throughput");
    std::printf("throughput from n0         %12.1f veh/h\n", q);
  }
  std::printf("throughput estimate        %12.1f veh/h\n", r.throughput);
  std::printf("matched initial queue      %12.2f veh\n", r.throughput_queue);

  if (o.sweep) {
    const auto dir = prepare_out(o);
    std::ofstream f(dir / "threshold_sweep.csv", std::ios::binary);
    f << "q_in,a,b,threshold,necessary_bound,phase_two_threshold\n";
    for (double q = p.q_dis + 25.0; q < p.q_hi; q += 25.0) {
      pc_analysis_params s = p;
      s.q_in = q;
      pc_analysis_report sr;
      if (pc_analyze(&s, &sr) != PC_OK) continue;
      f << fixed(q, 1) << ',' << fixed(sr.a, 6) << ',' << fixed(sr.b, 6) << ',' << fixed(sr.threshold, 6) << ','
        << fixed(sr.necessary_bound, 6) << ',' << fixed(sr.phase_two_threshold, 6) << '\n';
    }
    f.close();
    manifest(dir, {"command analyze", "q_in " + fixed(o.qin, 1), "p_star " + fixed(o.pstar, 4)}, cfg);
  }
  return kExitOk;
}

int cmd_predict(const Options& o) {
  ConfigHandle cfg;
  load(cfg, o);
  if (o.state.empty()) throw Failure{kExitInvalid, "--state is required"};
  const auto dir = prepare_out(o);
  check(pc_predict_file(cfg.p, o.state.c_str(), dir.string().c_str()), "predict");
  std::printf("prediction written to %s\n", (dir / "prediction.csv").string().c_str());
  manifest(dir, {"command predict", "state " + o.state}, cfg);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Truck platoon bottleneck control: simulation, Monte Carlo and queue analysis"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* s) {
    s->add_option("--config", o.config, "scenario config file (default: built-in reference)");
    s->add_option("--out", o.out, "output directory (default: $PLATOONCTL_OUT or ./out)");
  };
  auto* validate = app.add_subcommand("validate", "check a config file");
  validate->add_option("--config", o.config, "scenario config file")->required();

  auto* simulate = app.add_subcommand("simulate", "single seeded run per case with full dumps");
  common(simulate);
  simulate->add_option("--seed", o.seed, "run seed");
  simulate->add_option("--cases", o.cases, "comma-separated cases (none,noramp,wramp,ideal)");
  simulate->add_option("--dump-spacetime", o.spacetime, "steps between space-time samples, 0 = off")
      ->check(CLI::NonNegativeNumber);

  auto* montecarlo = app.add_subcommand("montecarlo", "paired Monte Carlo runs over the cases");
  common(montecarlo);
  montecarlo->add_option("--seed", o.seed, "master seed");
  montecarlo->add_option("--cases", o.cases, "comma-separated cases");
  montecarlo->add_option("--runs", o.runs, "runs per case")->check(CLI::PositiveNumber);
  montecarlo->add_option("--jobs", o.jobs, "parallel runs")->check(CLI::PositiveNumber);

  auto* analyze = app.add_subcommand("analyze", "closed-form queue stability analysis");
  common(analyze);
  analyze->add_option("--pstar", o.pstar, "target decongestion probability")->check(CLI::Range(0.0, 1.0));
  analyze->add_option("--qin", o.qin, "background inflow, veh/h");
  analyze->add_option("--n0", o.n0, "initial excess congestion, veh");
  analyze->add_flag("--sweep", o.sweep, "write threshold_sweep.csv to the output directory");

  auto* predict = app.add_subcommand("predict", "queue-model prediction from a JSON state file");
  common(predict);
  predict->add_option("--state", o.state, "state file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInvalid;
  }

  try {
    if (*validate) return cmd_validate(o);
    if (*simulate) return cmd_simulate(o);
    if (*montecarlo) return cmd_montecarlo(o);
    if (*analyze) return cmd_analyze(o);
    if (*predict) return cmd_predict(o);
  } catch (const Failure& f) {
    std::fprintf(stderr, "error: %s\n", f.message.c_str());
    return f.code;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitInvalid;
}
