#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "platoonctl/format.hpp"
#include "platoonctl/scenario.hpp"

namespace platoonctl {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split_dots(std::string_view key) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  for (;;) {
    const auto pos = key.find('.', start);
    parts.push_back(key.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

double to_double(std::string_view v, int line) {
  double out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size())
    throw ConfigError("expected a number, got '" + std::string(v) + "'", line);
  return out;
}

long long to_int(std::string_view v, int line) {
  long long out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size())
    throw ConfigError("expected an integer, got '" + std::string(v) + "'", line);
  return out;
}

std::uint64_t to_u64(std::string_view v, int line) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size())
    throw ConfigError("expected an unsigned integer, got '" + std::string(v) + "'", line);
  return out;
}

bool to_bool(std::string_view v, int line) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("expected true or false, got '" + std::string(v) + "'", line);
}

std::size_t ramp_index(std::string_view v, int line) {
  const long long k = to_int(v, line);
  if (k < 1 || k > 64) throw ConfigError("ramp index out of range: " + std::string(v), line);
  return static_cast<std::size_t>(k - 1);
}

VehicleClass to_class(std::string_view v, int line) {
  if (v == "a") return VehicleClass::a;
  if (v == "b") return VehicleClass::b;
  if (v == "c") return VehicleClass::c;
  throw ConfigError("unknown vehicle class '" + std::string(v) + "'", line);
}

std::string fmt(double v) { return format_number(v); }

}  // namespace

ScenarioConfig parse_config(std::string_view text) {
  ScenarioConfig c;
  c.road.onramps.clear();
  c.road.offramps.clear();
  c.demand.streams.clear();

  std::set<std::string> seen;
  std::map<std::size_t, int> onramp_pos_line, offramp_pos_line;
  std::map<std::pair<std::string, int>, std::size_t> stream_of;

  using Setter = std::function<void(std::string_view, int)>;
  const std::map<std::string, Setter, std::less<>> scalars = {
      {"fd.free_flow_speed", [&](auto v, int l) { c.fd.free_flow_speed = to_double(v, l); }},
      {"fd.critical_density_per_lane", [&](auto v, int l) { c.fd.critical_density_per_lane = to_double(v, l); }},
      {"fd.jam_density_per_lane", [&](auto v, int l) { c.fd.jam_density_per_lane = to_double(v, l); }},
      {"fd.capacity_drop", [&](auto v, int l) { c.fd.capacity_drop = to_double(v, l); }},
      {"road.length", [&](auto v, int l) { c.road.length = to_double(v, l); }},
      {"road.cell_length", [&](auto v, int l) { c.road.cell_length = to_double(v, l); }},
      {"road.lanes", [&](auto v, int l) { c.road.lanes = static_cast<int>(to_int(v, l)); }},
      {"road.bottleneck_lanes", [&](auto v, int l) { c.road.bottleneck_lanes = static_cast<int>(to_int(v, l)); }},
      {"road.bottleneck_position", [&](auto v, int l) { c.road.bottleneck_position = to_double(v, l); }},
      {"time.step", [&](auto v, int l) { c.time.step = to_double(v, l); }},
      {"time.total_steps", [&](auto v, int l) { c.time.total_steps = static_cast<int>(to_int(v, l)); }},
      {"time.warmup_steps", [&](auto v, int l) { c.time.warmup_steps = static_cast<int>(to_int(v, l)); }},
      {"time.cooldown_steps", [&](auto v, int l) { c.time.cooldown_steps = static_cast<int>(to_int(v, l)); }},
      {"demand.hold_interval", [&](auto v, int l) { c.demand.hold_interval = to_double(v, l); }},
      {"demand.warm_factor", [&](auto v, int l) { c.demand.warm_factor = to_double(v, l); }},
      {"platoon.arrival_rate", [&](auto v, int l) { c.platoons.arrival_rate = to_double(v, l); }},
      {"platoon.size", [&](auto v, int l) { c.platoons.size = to_double(v, l); }},
      {"platoon.min_speed", [&](auto v, int l) { c.platoons.min_speed = to_double(v, l); }},
      {"platoon.max_speed", [&](auto v, int l) { c.platoons.max_speed = to_double(v, l); }},
      {"platoon.approach_zone", [&](auto v, int l) { c.platoons.approach_zone = to_double(v, l); }},
      {"controller.replan_interval_steps",
       [&](auto v, int l) { c.controller.replan_interval_steps = static_cast<int>(to_int(v, l)); }},
      {"controller.speed_search_step", [&](auto v, int l) { c.controller.speed_search_step = to_double(v, l); }},
      {"controller.ideal_min_speed", [&](auto v, int l) { c.controller.ideal_min_speed = to_double(v, l); }},
      {"run.control",
       [&](auto v, int l) {
         try {
           c.control = parse_control_case(v);
         } catch (const ConfigError& e) {
           throw ConfigError(e.what(), l);
         }
       }},
      {"run.seed", [&](auto v, int l) { c.seed = to_u64(v, l); }},
  };

  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError("expected 'key = value'", line_no);
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) throw ConfigError("expected 'key = value'", line_no);
    if (!seen.insert(std::string(key)).second)
      throw ConfigError("duplicate key '" + std::string(key) + "'", line_no);

    if (const auto it = scalars.find(key); it != scalars.end()) {
      it->second(value, line_no);
      continue;
    }
    const auto parts = split_dots(key);
    if (parts.size() == 3 && parts[0] == "onramp") {
      const std::size_t k = ramp_index(parts[1], line_no);
      if (c.road.onramps.size() <= k) c.road.onramps.resize(k + 1);
      if (parts[2] != "position") throw ConfigError("unknown key '" + std::string(key) + "'", line_no);
      c.road.onramps[k].position = to_double(value, line_no);
      onramp_pos_line[k] = line_no;
      continue;
    }
    if (parts.size() == 3 && parts[0] == "offramp") {
      const std::size_t k = ramp_index(parts[1], line_no);
      if (c.road.offramps.size() <= k) c.road.offramps.resize(k + 1);
      auto& o = c.road.offramps[k];
      if (parts[2] == "position") {
        o.position = to_double(value, line_no);
        offramp_pos_line[k] = line_no;
      } else if (parts[2] == "capacity") {
        o.capacity = to_double(value, line_no);
      } else if (parts[2] == "split_ratio") {
        o.split_ratio = to_double(value, line_no);
      } else if (parts[2] == "protected") {
        o.protected_ramp = to_bool(value, line_no);
      } else {
        throw ConfigError("unknown key '" + std::string(key) + "'", line_no);
      }
      continue;
    }
    if (parts.size() == 4 && parts[0] == "demand") {
      const std::string origin(parts[1]);
      const VehicleClass k = to_class(parts[2], line_no);
      const auto id = std::make_pair(origin, index_of(k));
      auto it = stream_of.find(id);
      if (it == stream_of.end()) {
        DemandStream s;
        s.origin = origin;
        s.vehicle_class = k;
        c.demand.streams.push_back(s);
        it = stream_of.emplace(id, c.demand.streams.size() - 1).first;
      }
      auto& s = c.demand.streams[it->second];
      if (parts[3] == "mean")
        s.mean = to_double(value, line_no);
      else if (parts[3] == "half_width")
        s.half_width = to_double(value, line_no);
      else
        throw ConfigError("unknown key '" + std::string(key) + "'", line_no);
      continue;
    }
    throw ConfigError("unknown key '" + std::string(key) + "'", line_no);
  }

  for (std::size_t k = 0; k < c.road.onramps.size(); ++k)
    if (!onramp_pos_line.count(k)) throw ConfigError("onramp." + std::to_string(k + 1) + ".position missing");
  for (std::size_t k = 0; k < c.road.offramps.size(); ++k)
    if (!offramp_pos_line.count(k)) throw ConfigError("offramp." + std::to_string(k + 1) + ".position missing");
  return c;
}

ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const ScenarioConfig& c) {
  std::ostringstream o;
  auto kv = [&o](const std::string& k, const std::string& v) { o << k << " = " << v << '\n'; };
  kv("fd.free_flow_speed", fmt(c.fd.free_flow_speed));
  kv("fd.critical_density_per_lane", fmt(c.fd.critical_density_per_lane));
  kv("fd.jam_density_per_lane", fmt(c.fd.jam_density_per_lane));
  kv("fd.capacity_drop", fmt(c.fd.capacity_drop));
  kv("road.length", fmt(c.road.length));
  kv("road.cell_length", fmt(c.road.cell_length));
  kv("road.lanes", std::to_string(c.road.lanes));
  kv("road.bottleneck_lanes", std::to_string(c.road.bottleneck_lanes));
  kv("road.bottleneck_position", fmt(c.road.bottleneck_position));
  for (std::size_t k = 0; k < c.road.onramps.size(); ++k)
    kv("onramp." + std::to_string(k + 1) + ".position", fmt(c.road.onramps[k].position));
  for (std::size_t k = 0; k < c.road.offramps.size(); ++k) {
    const auto& r = c.road.offramps[k];
    const std::string p = "offramp." + std::to_string(k + 1) + ".";
    kv(p + "position", fmt(r.position));
    kv(p + "capacity", fmt(r.capacity));
    kv(p + "split_ratio", fmt(r.split_ratio));
    kv(p + "protected", r.protected_ramp ? "true" : "false");
  }
  kv("time.step", fmt(c.time.step));
  kv("time.total_steps", std::to_string(c.time.total_steps));
  kv("time.warmup_steps", std::to_string(c.time.warmup_steps));
  kv("time.cooldown_steps", std::to_string(c.time.cooldown_steps));
  kv("demand.hold_interval", fmt(c.demand.hold_interval));
  kv("demand.warm_factor", fmt(c.demand.warm_factor));
  for (const auto& s : c.demand.streams) {
    const std::string p = "demand." + s.origin + "." + class_letter(s.vehicle_class) + ".";
    kv(p + "mean", fmt(s.mean));
    kv(p + "half_width", fmt(s.half_width));
  }
  kv("platoon.arrival_rate", fmt(c.platoons.arrival_rate));
  kv("platoon.size", fmt(c.platoons.size));
  kv("platoon.min_speed", fmt(c.platoons.min_speed));
  kv("platoon.max_speed", fmt(c.platoons.max_speed));
  kv("platoon.approach_zone", fmt(c.platoons.approach_zone));
  kv("controller.replan_interval_steps", std::to_string(c.controller.replan_interval_steps));
  kv("controller.speed_search_step", fmt(c.controller.speed_search_step));
  kv("controller.ideal_min_speed", fmt(c.controller.ideal_min_speed));
  kv("run.control", std::string(to_string(c.control)));
  kv("run.seed", std::to_string(c.seed));
  return o.str();
}

}  // namespace platoonctl
