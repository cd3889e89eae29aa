#include "platoonctl/mcctm.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace platoonctl {

CellParams CellParams::make(const FundamentalDiagram& fd, int lanes, double length) noexcept {
  CellParams p;
  p.length = length;
  p.free_flow_speed = fd.free_flow_speed;
  p.wave_speed = fd.wave_speed();
  p.critical_density = fd.critical_density(lanes);
  p.jam_density = fd.jam_density(lanes);
  p.capacity_drop = fd.capacity_drop;
  p.lanes = lanes;
  return p;
}

double cell_capacity(const CellParams& c, const ClassVec& rho, const ClassVec& speed) noexcept {
  const double V = c.free_flow_speed, P = c.jam_density, s = c.critical_density;
  double d = 0.0, weighted = 0.0;
  for (int k = 0; k < kNumClasses; ++k) {
    const double dk = speed[k] * rho[k];
    if (dk <= 0.0) continue;
    d += dk;
    weighted += dk * (V * P * s * speed[k]) / ((P - s) * speed[k] + V * s);
  }
  if (d <= 0.0) return V * s;
  return weighted / d;
}

ClassVec demand(const CellParams& c, const ClassVec& rho, const ClassVec& speed) noexcept {
  ClassVec out{};
  double d = 0.0;
  for (int k = 0; k < kNumClasses; ++k) {
    out[k] = speed[k] * rho[k];
    d += out[k];
  }
  if (d <= 0.0) return ClassVec{};
  const double q = cell_capacity(c, rho, speed);
  if (d > q) {
    const double scale = q / d;
    for (auto& v : out) v *= scale;
  }
  return out;
}

double capacity_drop_flow(const CellParams& c, double sigma_next, double rho_total) noexcept {
  const double s = c.critical_density;
  return c.wave_speed * (sigma_next / s) *
         (c.jam_density - (1.0 - c.capacity_drop) * s - c.capacity_drop * rho_total);
}

double aggregate_supply(const CellParams& c, double rho_total, double capacity, double f_up) noexcept {
  return std::max(0.0, std::min({c.wave_speed * (c.jam_density - rho_total), capacity, f_up}));
}

ClassVec supply(const CellParams& c, const ClassVec& rho, const ClassVec& speed, const ClassVec& upstream_rho,
                double f_up) noexcept {
  const double up = sum(upstream_rho);
  if (up <= 0.0) return ClassVec{};
  const double s = aggregate_supply(c, sum(rho), cell_capacity(c, rho, speed), f_up);
  ClassVec out{};
  for (int k = 0; k < kNumClasses; ++k) out[k] = upstream_rho[k] / up * s;
  return out;
}

DischargeConstants discharge_constants(const FundamentalDiagram& fd, double sigma_minus, double sigma_plus) {
  if (!(sigma_plus < sigma_minus))
    throw InvalidBottleneck("bottleneck critical density must be below the upstream one");
  const double a = fd.capacity_drop;
  const double p_minus = sigma_minus / fd.critical_density_per_lane * fd.jam_density_per_lane;
  const double den = sigma_minus - a * sigma_plus;
  DischargeConstants out;
  out.congested_density = (p_minus * (sigma_minus - sigma_plus) + (1.0 - a) * sigma_minus * sigma_plus) / den;
  out.discharge_density = sigma_minus * sigma_plus * (1.0 - a) / den;
  out.discharge_flow = fd.free_flow_speed * out.discharge_density;
  return out;
}

OnRampAllocation allocate_onramp(double residual_supply, const ClassVec& arrivals, const ClassVec& queue,
                                 const std::array<bool, kNumClasses>& prioritized, double step) {
  OnRampAllocation out;
  double residual = residual_supply;
  for (int k = 0; k < kNumClasses; ++k)
    if (prioritized[k]) {
      out.inflow[k] = arrivals[k];
      residual -= arrivals[k];
    }
  residual = std::max(0.0, residual);

  double queued = 0.0, arriving = 0.0;
  for (int k = 0; k < kNumClasses; ++k)
    if (!prioritized[k]) {
      queued += queue[k];
      arriving += arrivals[k];
    }
  for (int k = 0; k < kNumClasses; ++k) {
    if (prioritized[k]) {
      out.queue[k] = 0.0;
      continue;
    }
    double share = 0.0;
    if (queued > 0.0)
      share = queue[k] / queued;
    else if (arriving > 0.0)
      share = arrivals[k] / arriving;
    const double want = arrivals[k] + queue[k] / step;
    out.inflow[k] = std::min(want, share * residual);
    out.queue[k] = std::max(0.0, queue[k] + (arrivals[k] - out.inflow[k]) * step);
  }
  return out;
}

ClassVec offramp_exit(const ClassVec& cell_demand, const ClassVec& downstream_supply, const ClassVec& rho,
                      const std::array<bool, kNumClasses>& exiting, double ramp_capacity) noexcept {
  double exiting_rho = 0.0;
  for (int k = 0; k < kNumClasses; ++k)
    if (exiting[k]) exiting_rho += rho[k];
  ClassVec out{};
  if (exiting_rho <= 0.0) return out;
  for (int k = 0; k < kNumClasses; ++k)
    if (exiting[k])
      out[k] = std::min({cell_demand[k], downstream_supply[k], rho[k] / exiting_rho * ramp_capacity});
  return out;
}

void TtsAccumulator::add(const std::vector<ClassVec>& rho, const std::vector<double>& cell_length,
                         const ClassVec& queued, double step) noexcept {
  for (std::size_t i = 0; i < rho.size(); ++i)
    for (int k = 0; k < kNumClasses; ++k) tts_[k] += rho[i][k] * cell_length[i] * step;
  for (int k = 0; k < kNumClasses; ++k) tts_[k] += queued[k] * step;
}

ClassVec compute_tts(const std::vector<TtsSample>& trajectory, double cell_length, double step) {
  TtsAccumulator acc;
  for (const auto& s : trajectory) acc.add(s.rho, std::vector<double>(s.rho.size(), cell_length), s.queued, step);
  return acc.per_class();
}

namespace {
constexpr std::array<bool, kNumClasses> kPrioritized{true, false, false};
constexpr std::array<bool, kNumClasses> kExiting{false, false, true};
}  // namespace

CtmEngine::CtmEngine(const ScenarioConfig& cfg, int ghost)
    : cells_(cfg.road.cells()),
      ghost_(ghost),
      bottleneck_cell_(cfg.road.first_bottleneck_cell() - 1),
      step_(cfg.time.step) {
  const int m = cells_ + ghost_;
  params_.resize(static_cast<std::size_t>(m));
  for (int j = -ghost_; j < cells_; ++j) {
    const int lanes = j < 0 ? cfg.road.lanes : cfg.road.lanes_of_cell(j);
    params_[static_cast<std::size_t>(j + ghost_)] = CellParams::make(cfg.fd, lanes, cfg.road.cell_length);
  }
  rho_.assign(static_cast<std::size_t>(m), ClassVec{});
  speed_.assign(static_cast<std::size_t>(m), ClassVec{});
  reset_speeds();
  onramp_at_.assign(static_cast<std::size_t>(m), -1);
  offramp_at_.assign(static_cast<std::size_t>(m), -1);
  for (std::size_t k = 0; k < cfg.road.onramps.size(); ++k) {
    onramp_cell_.push_back(cfg.road.onramp_cell(k));
    onramp_at_[static_cast<std::size_t>(onramp_cell_.back() + ghost_)] = static_cast<int>(k);
  }
  for (std::size_t k = 0; k < cfg.road.offramps.size(); ++k) {
    offramp_cell_.push_back(cfg.road.offramp_cell(k));
    offramp_capacity_.push_back(cfg.road.offramps[k].capacity);
    offramp_at_[static_cast<std::size_t>(offramp_cell_.back() + ghost_)] = static_cast<int>(k);
  }
  onramp_queue_.assign(onramp_cell_.size(), ClassVec{});
  flows_.q.assign(static_cast<std::size_t>(m), ClassVec{});
  flows_.onramp_inflow.assign(onramp_cell_.size(), ClassVec{});
  flows_.offramp_outflow.assign(offramp_cell_.size(), ClassVec{});
  road_lengths_.assign(static_cast<std::size_t>(cells_), cfg.road.cell_length);
  demand_.assign(static_cast<std::size_t>(m), ClassVec{});
  supply_share_.assign(static_cast<std::size_t>(m), ClassVec{});
  capacity_.assign(static_cast<std::size_t>(m), 0.0);
  supply_total_.assign(static_cast<std::size_t>(m), 0.0);
  fdrop_.assign(static_cast<std::size_t>(m), 0.0);
}

void CtmEngine::reset_speeds() {
  for (std::size_t i = 0; i < speed_.size(); ++i) speed_[i].fill(params_[i].free_flow_speed);
}

ClassVec CtmEngine::queued() const noexcept {
  ClassVec q = origin_queue_;
  for (const auto& r : onramp_queue_)
    for (int k = 0; k < kNumClasses; ++k) q[k] += r[k];
  return q;
}

ClassVec CtmEngine::road_mass() const noexcept {
  ClassVec m{};
  for (int j = 0; j < cells_; ++j)
    for (int k = 0; k < kNumClasses; ++k) m[k] += rho(j)[k] * params(j).length;
  return m;
}

double CtmEngine::system_mass() const noexcept {
  double m = sum(queued());
  for (std::size_t i = 0; i < rho_.size(); ++i) m += sum(rho_[i]) * params_[i].length;
  return m;
}

void CtmEngine::inject(int j, VehicleClass k, double density) {
  rho(j)[index_of(k)] += density;
  cum_in_ += density * params(j).length;
}

void CtmEngine::step(const CtmInputs& in) {
  const int m = cells_ + ghost_;
  const auto M = static_cast<std::size_t>(m);

  for (std::size_t i = 0; i < M; ++i) {
    capacity_[i] = cell_capacity(params_[i], rho_[i], speed_[i]);
    ClassVec d{};
    double dt = 0.0;
    for (int k = 0; k < kNumClasses; ++k) {
      d[k] = speed_[i][k] * rho_[i][k];
      dt += d[k];
    }
    if (dt > capacity_[i]) {
      const double s = capacity_[i] / dt;
      for (auto& v : d) v *= s;
    }
    demand_[i] = d;
    const double sigma_next = i + 1 < M ? params_[i + 1].critical_density : params_[i].critical_density;
    fdrop_[i] = capacity_drop_flow(params_[i], sigma_next, sum(rho_[i]));
  }
  for (std::size_t i = 0; i < M; ++i) {
    const double f_up = i > 0 ? fdrop_[i - 1] : capacity_[i];
    supply_total_[i] = aggregate_supply(params_[i], sum(rho_[i]), capacity_[i], f_up);
  }

  auto& q = flows_.q;
  for (auto& o : flows_.offramp_outflow) o = ClassVec{};
  for (std::size_t i = 0; i < M; ++i) {
    const ClassVec& r = rho_[i];
    const double up = sum(r);
    ClassVec s_next{};
    if (i + 1 < M) {
      if (up > 0.0)
        for (int k = 0; k < kNumClasses; ++k) s_next[k] = r[k] / up * supply_total_[i + 1];
    } else if (!closed_) {
      s_next = demand_[i];
    }
    for (int k = 0; k < kNumClasses; ++k) q[i][k] = std::min(demand_[i][k], s_next[k]);
    if (const int ramp = offramp_at_[i]; ramp >= 0) {
      const auto exit = offramp_exit(demand_[i], s_next, r, kExiting,
                                     offramp_capacity_[static_cast<std::size_t>(ramp)]);
      for (int k = 0; k < kNumClasses; ++k)
        if (kExiting[k]) q[i][k] = 0.0;
      flows_.offramp_outflow[static_cast<std::size_t>(ramp)] = exit;
    }
  }

  // Background traffic entering at the upstream boundary.
  const auto first = static_cast<std::size_t>(ghost_);
  {
    const double from_ghost = ghost_ > 0 ? sum(q[first - 1]) : 0.0;
    const double residual = std::max(0.0, supply_total_[first] - from_ghost);
    ClassVec arrivals = closed_ ? ClassVec{} : in.origin_arrivals;
    arrivals[0] = 0.0;
    const auto alloc = allocate_onramp(residual, arrivals, origin_queue_, {false, false, false}, step_);
    flows_.origin_inflow = alloc.inflow;
    origin_queue_ = alloc.queue;
    if (!closed_) cum_in_ += sum(arrivals) * step_;
  }
  for (std::size_t r = 0; r < onramp_cell_.size(); ++r) {
    const auto i = static_cast<std::size_t>(onramp_cell_[r] + ghost_);
    const ClassVec arrivals = r < in.onramp_arrivals.size() ? in.onramp_arrivals[r] : ClassVec{};
    const double mainline = i > 0 ? sum(q[i - 1]) : 0.0;
    const double residual = std::max(0.0, supply_total_[i] - mainline);
    const auto alloc = allocate_onramp(residual, arrivals, onramp_queue_[r], kPrioritized, step_);
    flows_.onramp_inflow[r] = alloc.inflow;
    onramp_queue_[r] = alloc.queue;
    cum_in_ += sum(arrivals) * step_;
  }

  for (std::size_t i = 0; i < M; ++i) {
    ClassVec net = q[i];
    for (auto& v : net) v = -v;
    if (i > 0)
      for (int k = 0; k < kNumClasses; ++k) net[k] += q[i - 1][k];
    if (i == first)
      for (int k = 0; k < kNumClasses; ++k) net[k] += flows_.origin_inflow[k];
    if (const int r = onramp_at_[i]; r >= 0)
      for (int k = 0; k < kNumClasses; ++k) net[k] += flows_.onramp_inflow[static_cast<std::size_t>(r)][k];
    if (const int r = offramp_at_[i]; r >= 0)
      for (int k = 0; k < kNumClasses; ++k) net[k] -= flows_.offramp_outflow[static_cast<std::size_t>(r)][k];
    const double f = step_ / params_[i].length;
    for (int k = 0; k < kNumClasses; ++k) {
      double v = rho_[i][k] + f * net[k];
      if (v < 0.0) {
        if (v < -1e-9 * std::max(1.0, rho_[i][k]))
          throw ConsistencyError("negative density " + std::to_string(v) + " in cell " +
                                 std::to_string(static_cast<int>(i) - ghost_) + " class " +
                                 class_letter(static_cast<VehicleClass>(k)));
        v = 0.0;
      }
      rho_[i][k] = v;
    }
    if (sum(rho_[i]) > params_[i].jam_density * (1.0 + 1e-9))
      throw ConsistencyError("density above jam density in cell " + std::to_string(static_cast<int>(i) - ghost_));
  }

  cum_out_ += sum(q[M - 1]) * step_;
  for (const auto& o : flows_.offramp_outflow) cum_out_ += sum(o) * step_;
  flows_.bottleneck_outflow = sum(q[static_cast<std::size_t>(bottleneck_cell_ + ghost_)]);

  tts_.add(std::vector<ClassVec>(rho_.begin() + ghost_, rho_.end()), road_lengths_, queued(), step_);
}

}  // namespace platoonctl
