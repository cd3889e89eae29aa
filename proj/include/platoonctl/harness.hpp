#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "platoonctl/controllers.hpp"
#include "platoonctl/mcctm.hpp"
#include "platoonctl/platoon.hpp"
#include "platoonctl/scenario.hpp"

namespace platoonctl {

/// Demand levels per stream for every hold interval of a run.
struct DemandSchedule {
  int steps_per_hold = 20;
  int warmup_steps = 0;
  int cooldown_from = 0;  // first cool-down step
  double warm_factor = 1.0;
  std::vector<std::vector<double>> levels;  // levels[interval][stream], veh/h

  /// Demand of a stream at a step, warm factor applied.
  double level(int step, std::size_t stream) const noexcept;
};

/// Draws the demand schedule from the demand substream of `seed`.
DemandSchedule draw_demand(const ScenarioConfig& config, std::uint64_t seed);
/// Platoon arrival times from the platoon substream of `seed`.
std::vector<double> draw_platoon_arrivals(const ScenarioConfig& config, std::uint64_t seed);

struct CommandRecord {
  double t = 0.0;
  int platoon = 0;
  double u = 0.0;
  LaneMode lane = LaneMode::one_lane;
  double cap = 0.0;
  bool feasible = true;
};

struct PlatoonRecord {
  double t = 0.0;
  int platoon = 0;
  double x = 0.0;
  double u = 0.0;
  LaneMode lane = LaneMode::one_lane;
};

struct SpaceTimeRecord {
  double t = 0.0;
  std::vector<ClassVec> rho;
};

struct RunOptions {
  bool record_commands = false;
  bool record_platoons = false;
  int spacetime_every = 0;  // steps between space-time samples, 0 = off
};

struct RunMetrics {
  ControlCase control = ControlCase::none;
  std::uint64_t seed = 0;
  int run_index = 0;
  ClassVec tts{};
  double total_tts = 0.0;
  std::vector<double> bottleneck_outflow;  // veh/h per step
  std::vector<double> platoon_arrivals;
  std::vector<double> demand_first_interval;
  int platoons_entered = 0;
  int replans = 0;
  int infeasible_plans = 0;
  double max_bottleneck_density = 0.0;
  int congested_steps = 0;  // steps with bottleneck outflow at the discharge rate or less while the queue stands
  double mass_balance_error = 0.0;
  std::vector<CommandRecord> commands;
  std::vector<PlatoonRecord> platoon_track;
  std::vector<SpaceTimeRecord> spacetime;
};

class RunAborted : public std::runtime_error {
 public:
  RunAborted(const std::string& what, std::uint64_t seed) : std::runtime_error(what), seed_(seed) {}
  std::uint64_t seed() const noexcept { return seed_; }

 private:
  std::uint64_t seed_;
};

/// One simulation run. Deterministic in (config, control, seed).
RunMetrics run_scenario(const ScenarioConfig& config, ControlCase control, std::uint64_t seed,
                        const RunOptions& options = {});

struct Delay {
  ClassVec per_class{};  // % of the ideal TTS
  double total = 0.0;
};

class PairingError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

Delay delay_vs_ideal(const RunMetrics& run, const RunMetrics& ideal);

struct CaseStats {
  ControlCase control = ControlCase::none;
  // index 0..2 classes a, b, c; 3 total
  std::array<double, 4> mean_tts{}, median_tts{};
  std::optional<std::array<double, 4>> mean_delay, median_delay;
};

struct MonteCarloResult {
  std::vector<ControlCase> cases;
  std::vector<std::uint64_t> seeds;
  std::vector<std::vector<RunMetrics>> runs;  // runs[case][i]
  std::vector<CaseStats> stats;

  const std::vector<RunMetrics>* runs_of(ControlCase c) const noexcept;
  const CaseStats* stats_of(ControlCase c) const noexcept;
};

double median(std::vector<double> v);
double mean(const std::vector<double>& v);

/// Runs every case on the same per-run seeds, using up to `jobs` threads.
MonteCarloResult monte_carlo(const ScenarioConfig& config, const std::vector<ControlCase>& cases, int n_runs,
                             std::uint64_t master_seed, int jobs = 1);

void write_summary_csv(std::ostream& os, const MonteCarloResult& r);
void write_runs_csv(std::ostream& os, const MonteCarloResult& r);
void write_boxplot_csv(std::ostream& os, const MonteCarloResult& r);
void write_run_row_header(std::ostream& os);
void write_run_row(std::ostream& os, const RunMetrics& m, const RunMetrics* ideal);
void write_commands_csv(std::ostream& os, const RunMetrics& m);
void write_platoons_csv(std::ostream& os, const RunMetrics& m);
void write_spacetime_csv(std::ostream& os, const RunMetrics& m, double cell_length);
void write_outflow_csv(std::ostream& os, const RunMetrics& m, double step);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view data) noexcept;

/// Writes `manifest.txt` listing every regular file in `dir` with its hash,
/// plus the given header lines.
void write_manifest(const std::filesystem::path& dir, const std::vector<std::string>& header);

}  // namespace platoonctl
