#include "platoonctl/platoon.hpp"

#include <algorithm>
#include <cmath>

namespace platoonctl {

std::string_view to_string(LaneMode m) noexcept {
  return m == LaneMode::one_lane ? "one_lane" : "two_lane";
}

double CapSchedule::at(double t) const noexcept {
  if (cap.empty()) return 0.0;
  const double k = std::floor((t - origin) / step + 1e-9);
  if (k <= 0) return cap.front();
  const auto i = static_cast<std::size_t>(k);
  return i < cap.size() ? cap[i] : cap.back();
}

std::vector<double> spawn_arrivals(Rng& rng, double rate, double horizon) {
  std::vector<double> out;
  if (!(rate > 0)) return out;
  double t = rng.exponential(rate);
  while (t < horizon) {
    out.push_back(t);
    t += rng.exponential(rate);
  }
  return out;
}

double overtaking_flow(double free_flow_speed, double sigma, double rho_ref) noexcept {
  return free_flow_speed * (sigma - rho_ref);
}

namespace {

double overlap(double a0, double a1, double b0, double b1) noexcept {
  return std::max(0.0, std::min(a1, b1) - std::max(a0, b0));
}

int cell_of(double x, double L) noexcept { return static_cast<int>(std::ceil(x / L - 1e-9)) - 1; }

double clip(double v, double lo, double hi) noexcept { return std::min(hi, std::max(lo, v)); }

}  // namespace

double reference_density(const PlatoonState& p, int j, double L) noexcept {
  return p.rho_ref * overlap(j * L, (j + 1) * L, p.x - p.length, p.x) / L;
}

void impose_platoon_field(CtmEngine& e, const std::vector<PlatoonState>& platoons, double step,
                          ImposeScratch* scratch) {
  constexpr int A = index_of(VehicleClass::a);
  const int g = e.ghost(), n = e.cells();
  const double L = e.params(0).length;
  const double V = e.params(0).free_flow_speed;
  const double road_end = n * L;
  for (int j = -g; j < n; ++j) e.speed(j)[A] = V;
  if (scratch) {
    scratch->planned.assign(static_cast<std::size_t>(n + g), 0.0);
    for (int j = -g; j < n; ++j) scratch->planned[static_cast<std::size_t>(j + g)] = V * e.rho(j)[A];
  }
  if (platoons.empty()) return;

  const std::size_t m = platoons.size();
  std::vector<int> lo(m), top(m), head_next(m);
  for (std::size_t p = 0; p < m; ++p) {
    const auto& pl = platoons[p];
    head_next[p] = cell_of(pl.x + pl.u * step, L);
    top[p] = std::min(head_next[p], n - 1);
    lo[p] = std::max(-g, cell_of(pl.tail(), L));
  }

  for (std::size_t p = 0; p < m; ++p) {
    const int next_tail = p == 0 ? n : lo[p - 1];
    const double mid = 0.5 * (head_next[p] + next_tail);
    for (int i = top[p] + 1; i < next_tail && i < n; ++i) {
      if (i < mid) {
        e.speed(i)[A] = 0.0;
        if (scratch) scratch->planned[static_cast<std::size_t>(i + g)] = 0.0;
      }
    }
  }

  for (std::size_t p = 0; p < m; ++p) {
    const auto& pl = platoons[p];
    PlatoonState next = pl;
    next.x = pl.x + pl.u * step;

    auto set = [&](int i, double out) {
      const double r = e.rho(i)[A];
      e.speed(i)[A] = r > 0.0 ? clip(out / r, 0.0, V) : V;
      if (scratch) scratch->planned[static_cast<std::size_t>(i + g)] = r > 0.0 ? e.speed(i)[A] * r : 0.0;
    };

    double o = 0.0;
    if (head_next[p] >= n) {
      const double crossed = clip(next.x - road_end, 0.0, pl.length) - clip(pl.x - road_end, 0.0, pl.length);
      o = V * pl.rho_ref * crossed / L;
    }
    const int t = top[p];
    o = clip(o, 0.0, V * e.rho(t)[A]);
    set(t, o);
    for (int i = t; i > lo[p]; --i) {
      o = o + V * (reference_density(next, i, L) - e.rho(i)[A]);
      o = clip(o, 0.0, V * e.rho(i - 1)[A]);
      set(i - 1, o);
    }
  }
}

PlatoonFleet::PlatoonFleet(const ScenarioConfig& config, std::vector<double> arrivals)
    : cfg_(&config), arrivals_(std::move(arrivals)) {}

int PlatoonFleet::ghost_cells(const ScenarioConfig& c) {
  const double longest = c.platoons.size / c.platoons.one_lane_density(c.fd);
  return static_cast<int>(std::ceil(longest / c.road.cell_length - 1e-9)) + 2;
}

void PlatoonFleet::set_lane(PlatoonState& p, LaneMode m) const noexcept {
  p.lane = m;
  p.rho_ref = m == LaneMode::one_lane ? cfg_->platoons.one_lane_density(cfg_->fd)
                                      : cfg_->platoons.two_lane_density(cfg_->fd);
  p.length = p.size / p.rho_ref;
}

int PlatoonFleet::admit(double now, CtmEngine& engine) {
  const double min_gap = 2.0 * cfg_->road.cell_length;
  const double L = cfg_->road.cell_length;
  int admitted = 0;
  while (next_arrival_ < arrivals_.size() && arrivals_[next_arrival_] <= now + 1e-12) {
    if (!platoons_.empty() && platoons_.back().tail() < min_gap) break;
    PlatoonState p;
    p.id = next_id_++;
    p.x = 0.0;
    p.size = cfg_->platoons.size;
    set_lane(p, LaneMode::one_lane);
    p.u = cfg_->platoons.max_speed;
    p.commanded_speed = p.u;
    p.arrival_time = arrivals_[next_arrival_];
    p.entry_time = now;
    for (int j = cell_of(p.tail(), L) ; j < 0; ++j) {
      const double r = reference_density(p, j, L);
      if (r > 0.0) engine.inject(j, VehicleClass::a, r);
    }
    platoons_.push_back(std::move(p));
    ++next_arrival_;
    ++admitted;
  }
  return admitted;
}

void PlatoonFleet::apply_commands(double now) {
  const auto& c = *cfg_;
  const double xb = c.road.bottleneck_position;
  const double V = c.fd.free_flow_speed;
  const double mid_cap = 0.5 * (c.q_hi() + c.q_lo());
  for (auto& p : platoons_) {
    p.in_approach = xb - p.x <= c.platoons.approach_zone + 1e-12;
    LaneMode lane = p.lane;
    double u = p.commanded_speed;
    if (p.in_approach) {
      lane = LaneMode::one_lane;
      u = c.platoons.max_speed;
    } else if (!p.schedule.empty()) {
      const double cap = p.schedule.at(now + (xb - p.x) / V);
      lane = cap >= mid_cap ? LaneMode::one_lane : LaneMode::two_lane;
    }
    if (lane != p.lane) set_lane(p, lane);
    p.u = std::clamp(u, c.platoons.min_speed, c.platoons.max_speed);
  }
  const double min_gap = 2.0 * c.road.cell_length;
  const double T = c.time.step;
  for (std::size_t i = 1; i < platoons_.size(); ++i) {
    auto& f = platoons_[i];
    const auto& lead = platoons_[i - 1];
    if (f.x + f.u * T > lead.tail() + lead.u * T - min_gap) f.u = std::min(f.u, lead.u);
  }
}

void PlatoonFleet::impose(CtmEngine& engine) {
  impose_platoon_field(engine, platoons_, cfg_->time.step, &scratch_);
}

int PlatoonFleet::advance(const CtmEngine& engine) {
  constexpr int A = index_of(VehicleClass::a);
  const int g = engine.ghost(), n = engine.cells();
  const double L = cfg_->road.cell_length;
  const double T = cfg_->time.step;
  const auto& q = engine.flows().q;
  std::vector<double> before_x;
  before_x.reserve(platoons_.size());
  for (auto& p : platoons_) {
    before_x.push_back(p.x);
    const int lo = std::max(-g, cell_of(p.tail(), L));
    const int hi = std::min(n - 1, cell_of(p.x + p.u * T, L));
    double r = 1.0;
    for (int j = lo; j <= hi; ++j) {
      const double planned = scratch_.planned[static_cast<std::size_t>(j + g)];
      if (planned > 1e-9) r = std::min(r, q[static_cast<std::size_t>(j + g)][A] / planned);
    }
    p.x += p.u * std::max(0.0, r) * T;
  }
  const double min_gap = 2.0 * L;
  for (std::size_t i = 1; i < platoons_.size(); ++i) {
    auto& f = platoons_[i];
    const auto& lead = platoons_[i - 1];
    if (f.x > lead.tail() - min_gap) {
      f.x = std::max(before_x[i], lead.tail() - min_gap);
      f.u = std::min(f.u, lead.u);
    }
  }
  const double end = cfg_->road.length;
  const auto before = platoons_.size();
  platoons_.erase(std::remove_if(platoons_.begin(), platoons_.end(),
                                 [end](const PlatoonState& p) { return p.tail() >= end - 1e-12; }),
                  platoons_.end());
  return static_cast<int>(before - platoons_.size());
}

}  // namespace platoonctl
