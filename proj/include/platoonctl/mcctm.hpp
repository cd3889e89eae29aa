#pragma once

#include <array>
#include <stdexcept>
#include <vector>

#include "platoonctl/scenario.hpp"

namespace platoonctl {

using ClassVec = std::array<double, kNumClasses>;

inline double sum(const ClassVec& v) noexcept { return v[0] + v[1] + v[2]; }

struct CellParams {
  double length = 0.02;
  double free_flow_speed = 100.0;
  double wave_speed = 12.5;
  double critical_density = 60.0;
  double jam_density = 540.0;
  double capacity_drop = 0.4;
  int lanes = 3;

  static CellParams make(const FundamentalDiagram& fd, int lanes, double length) noexcept;
  double max_capacity() const noexcept { return free_flow_speed * critical_density; }
};

/// State-dependent capacity: speed-weighted mean of the per-class triangular
/// capacities. An empty cell has capacity V sigma.
double cell_capacity(const CellParams& cell, const ClassVec& rho, const ClassVec& speed) noexcept;

/// Per-class sending flow, scaled down proportionally when the cell is
/// saturated.
ClassVec demand(const CellParams& cell, const ClassVec& rho, const ClassVec& speed) noexcept;

/// Capacity-drop limit on the flow leaving a cell toward a cell with critical
/// density `sigma_next`.
double capacity_drop_flow(const CellParams& cell, double sigma_next, double rho_total) noexcept;

/// Aggregate receiving flow min{W (P - rho), Q, F_up}.
double aggregate_supply(const CellParams& cell, double rho_total, double capacity, double f_up) noexcept;

/// Per-class receiving flow of a cell, split by the composition of the
/// upstream cell. Zero for every class when the upstream cell is empty.
ClassVec supply(const CellParams& cell, const ClassVec& rho, const ClassVec& speed,
                const ClassVec& upstream_rho, double f_up) noexcept;

class InvalidBottleneck : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct DischargeConstants {
  double congested_density;  // rho_c, veh/km
  double discharge_density;  // rho_d, veh/km
  double discharge_flow;     // V rho_d, veh/h
};

/// Standing-queue densities at a lane drop from `sigma_minus` to
/// `sigma_plus`. Throws InvalidBottleneck unless sigma_plus < sigma_minus.
DischargeConstants discharge_constants(const FundamentalDiagram& fd, double sigma_minus, double sigma_plus);

struct OnRampAllocation {
  ClassVec inflow{};  // veh/h
  ClassVec queue{};   // veh, after the step
};

/// On-ramp merge. Prioritized classes enter at their arrival rate; the rest
/// share what is left of `residual_supply` in proportion to their queues (or
/// to their arrivals when every queue is empty) and queue the excess.
OnRampAllocation allocate_onramp(double residual_supply, const ClassVec& arrivals, const ClassVec& queue,
                                 const std::array<bool, kNumClasses>& prioritized, double step);

/// Flow leaving through an off-ramp for the classes in `exiting`.
ClassVec offramp_exit(const ClassVec& cell_demand, const ClassVec& downstream_supply, const ClassVec& rho,
                      const std::array<bool, kNumClasses>& exiting, double ramp_capacity) noexcept;

/// Running total-time-spent sum, per class.
class TtsAccumulator {
 public:
  void add(const std::vector<ClassVec>& rho, const std::vector<double>& cell_length, const ClassVec& queued,
           double step) noexcept;
  const ClassVec& per_class() const noexcept { return tts_; }
  double total() const noexcept { return sum(tts_); }

 private:
  ClassVec tts_{};
};

struct TtsSample {
  std::vector<ClassVec> rho;
  ClassVec queued{};
};

/// TTS of a recorded trajectory with uniform cell length.
ClassVec compute_tts(const std::vector<TtsSample>& trajectory, double cell_length, double step);

class ConsistencyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Stochastic inputs of one step.
struct CtmInputs {
  ClassVec origin_arrivals{};             // veh/h at the upstream boundary
  std::vector<ClassVec> onramp_arrivals;  // veh/h per on-ramp
};

struct FlowRecord {
  std::vector<ClassVec> q;  // q[j]: flow from cell j to j+1 (j = -ghost .. N-1), indexed by j + ghost
  std::vector<ClassVec> onramp_inflow;
  std::vector<ClassVec> offramp_outflow;
  ClassVec origin_inflow{};
  double bottleneck_outflow = 0.0;
};

/// Multi-class cell transmission model of one road stretch. Cells are
/// indexed j = 0..N-1 from upstream; `ghost` extra cells j = -ghost..-1
/// upstream of the road hold only platoon-class vehicles that have not yet
/// entered. Background traffic enters cell 0 from an origin queue.
class CtmEngine {
 public:
  CtmEngine(const ScenarioConfig& config, int ghost);

  int cells() const noexcept { return cells_; }
  int ghost() const noexcept { return ghost_; }
  double step_length() const noexcept { return step_; }
  /// Last cell before the lane drop.
  int bottleneck_cell() const noexcept { return bottleneck_cell_; }

  ClassVec& rho(int j) { return rho_[static_cast<std::size_t>(j + ghost_)]; }
  const ClassVec& rho(int j) const { return rho_[static_cast<std::size_t>(j + ghost_)]; }
  ClassVec& speed(int j) { return speed_[static_cast<std::size_t>(j + ghost_)]; }
  const ClassVec& speed(int j) const { return speed_[static_cast<std::size_t>(j + ghost_)]; }
  const CellParams& params(int j) const { return params_[static_cast<std::size_t>(j + ghost_)]; }
  double total_density(int j) const { return sum(rho(j)); }

  const std::vector<ClassVec>& onramp_queues() const noexcept { return onramp_queue_; }
  const ClassVec& origin_queue() const noexcept { return origin_queue_; }
  ClassVec queued() const noexcept;

  /// Vehicles on the road cells (excluding ghosts and queues).
  ClassVec road_mass() const noexcept;
  /// Everything held by the engine: road, ghosts and queues.
  double system_mass() const noexcept;
  double cumulative_inflow() const noexcept { return cum_in_; }
  double cumulative_outflow() const noexcept { return cum_out_; }
  /// Adds platoon-class vehicles to a ghost or road cell (counted as inflow).
  void inject(int j, VehicleClass k, double density);

  /// Resets every speed field to V.
  void reset_speeds();
  /// Advances one step using the current speed fields.
  void step(const CtmInputs& in);
  const FlowRecord& flows() const noexcept { return flows_; }

  TtsAccumulator& tts() noexcept { return tts_; }
  const TtsAccumulator& tts() const noexcept { return tts_; }

  /// Enables a closed segment: no boundary inflow and no boundary outflow.
  void set_closed(bool closed) noexcept { closed_ = closed; }

 private:
  int cells_;
  int ghost_;
  int bottleneck_cell_;
  double step_;
  bool closed_ = false;
  std::vector<CellParams> params_;
  std::vector<ClassVec> rho_, speed_;
  std::vector<int> onramp_cell_, offramp_cell_;
  std::vector<double> offramp_capacity_;
  std::vector<ClassVec> onramp_queue_;
  ClassVec origin_queue_{};
  double cum_in_ = 0.0, cum_out_ = 0.0;
  FlowRecord flows_;
  TtsAccumulator tts_;
  std::vector<double> road_lengths_;
  // scratch
  std::vector<ClassVec> demand_, supply_share_;
  std::vector<double> capacity_, supply_total_, fdrop_;
  std::vector<int> onramp_at_, offramp_at_;
};

}  // namespace platoonctl
