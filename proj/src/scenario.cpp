#include "lorasim/scenario.hpp"

#include <yaml-cpp/yaml.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace lorasim {

namespace {

[[noreturn]] void fail_at(const YAML::Node& n, const std::string& msg) {
  const auto m = n.Mark();
  if (m.line >= 0) throw ScenarioError("line " + std::to_string(m.line + 1) + ": " + msg);
  throw ScenarioError(msg);
}

[[noreturn]] void fail_line(int line, const std::string& msg) {
  if (line > 0) throw ScenarioError("line " + std::to_string(line) + ": " + msg);
  throw ScenarioError(msg);
}

std::string num(double v) {
  char buf[64];
  // Whole numbers such as frequencies read better without an exponent.
  const bool whole = std::abs(v) < 1e15 && v == std::floor(v);
  const auto r = whole ? std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed)
                       : std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string secs(Duration d) { return num(to_seconds(d)); }

std::string hex32(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08X", v);
  return buf;
}

/// A mapping node that remembers which keys were read so leftovers can be
/// reported as typos.
class MapReader {
 public:
  MapReader(const YAML::Node& node, std::string what) : node_(node), what_(std::move(what)) {
    if (!node_.IsMap()) fail_at(node_, what_ + " must be a mapping");
  }

  bool has(const char* key) {
    used_.insert(key);
    return static_cast<bool>(node_[key]);
  }

  YAML::Node at(const char* key) {
    used_.insert(key);
    const YAML::Node n = node_[key];
    if (!n) fail_at(node_, what_ + " is missing required key '" + key + "'");
    return n;
  }

  template <class T>
  T scalar(const YAML::Node& n, const char* key) {
    try {
      return n.as<T>();
    } catch (const YAML::Exception&) {
      fail_at(n, "invalid value for '" + std::string(key) + "' in " + what_);
    }
  }

  template <class T>
  T get(const char* key, T fallback) {
    if (!has(key)) return fallback;
    return scalar<T>(node_[key], key);
  }

  template <class T>
  T req(const char* key) {
    return scalar<T>(at(key), key);
  }

  Duration seconds(const char* key, Duration fallback) {
    if (!has(key)) return fallback;
    const double v = scalar<double>(node_[key], key);
    if (!std::isfinite(v) || v < 0) fail_at(node_[key], std::string(key) + " must be a non-negative number of seconds");
    return from_seconds(v);
  }

  void finish() {
    for (const auto& kv : node_) {
      const auto k = kv.first.as<std::string>();
      if (!used_.count(k)) fail_at(kv.first, "unknown key '" + k + "' in " + what_);
    }
  }

  const YAML::Node& node() const { return node_; }

 private:
  YAML::Node node_;
  std::string what_;
  std::set<std::string> used_;
};

std::vector<double> doubles(const YAML::Node& n, const char* what) {
  if (!n.IsSequence()) fail_at(n, std::string(what) + " must be a list");
  std::vector<double> out;
  for (const auto& e : n) {
    try {
      out.push_back(e.as<double>());
    } catch (const YAML::Exception&) {
      fail_at(e, std::string("non-numeric entry in ") + what);
    }
  }
  return out;
}

Position position(const YAML::Node& n) {
  const auto v = doubles(n, "position");
  if (v.size() != 2) fail_at(n, "position must be [x, y] in meters");
  return {v[0], v[1]};
}

std::uint32_t address(const YAML::Node& n) {
  try {
    const auto s = n.as<std::string>();
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(s, &pos, 0);
    if (pos != s.size() || v > 0xFFFFFFFFULL) throw std::out_of_range("dev_addr");
    return static_cast<std::uint32_t>(v);
  } catch (const std::exception&) {
    fail_at(n, "dev_addr must be a 32-bit integer such as 0x00000001");
  }
}

energy::PowerProfile profile_from(const YAML::Node& node) {
  MapReader m(node, "power profile");
  energy::PowerProfile p;
  p.name = m.get<std::string>("name", "inline");
  p.supply_voltage = m.get<double>("supply_voltage", 3.0);
  if (m.has("tx_watts")) {
    const YAML::Node tx = node["tx_watts"];
    if (!tx.IsMap()) fail_at(tx, "tx_watts must map dBm to watts");
    for (const auto& kv : tx) {
      try {
        p.tx_watts[kv.first.as<double>()] = kv.second.as<double>();
      } catch (const YAML::Exception&) {
        fail_at(kv.first, "tx_watts entries must be numeric");
      }
    }
  }
  p.rx_watts = m.get<double>("rx_watts", 0.0);
  p.sleep_watts = m.get<double>("sleep_watts", 0.0);
  p.mcu_joules_per_command = m.get<double>("mcu_joules_per_command", 0.0);
  m.finish();
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    fail_at(node, e.what());
  }
  return p;
}

void emit_profile_body(YAML::Emitter& out, const energy::PowerProfile& p) {
  out << YAML::BeginMap;
  out << YAML::Key << "name" << YAML::Value << p.name;
  out << YAML::Key << "supply_voltage" << YAML::Value << num(p.supply_voltage);
  out << YAML::Key << "tx_watts" << YAML::Value << YAML::BeginMap;
  for (const auto& [dbm, w] : p.tx_watts) out << YAML::Key << num(dbm) << YAML::Value << num(w);
  out << YAML::EndMap;
  out << YAML::Key << "rx_watts" << YAML::Value << num(p.rx_watts);
  out << YAML::Key << "sleep_watts" << YAML::Value << num(p.sleep_watts);
  out << YAML::Key << "mcu_joules_per_command" << YAML::Value << num(p.mcu_joules_per_command);
  out << YAML::EndMap;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

YAML::Node parse_yaml(const std::string& text) {
  try {
    return YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ScenarioError("line " + std::to_string(e.mark.line + 1) + ": " + e.msg);
  }
}

mac::TrafficModel traffic_from(const YAML::Node& n) {
  const auto s = n.as<std::string>();
  if (s == "periodic") return mac::TrafficModel::Periodic;
  if (s == "poisson") return mac::TrafficModel::Poisson;
  fail_at(n, "traffic must be 'periodic' or 'poisson'");
}

}  // namespace

std::filesystem::path default_profile_dir() { return LORASIM_PROFILE_DIR; }
std::filesystem::path default_scenario_dir() { return LORASIM_SCENARIO_DIR; }

energy::PowerProfile parse_profile(const std::string& text) { return profile_from(parse_yaml(text)); }

energy::PowerProfile load_profile(const std::filesystem::path& path) {
  try {
    return parse_profile(read_file(path));
  } catch (const ScenarioError& e) {
    throw ScenarioError(path.string() + ": " + e.what());
  }
}

std::string emit_profile(const energy::PowerProfile& p) {
  YAML::Emitter out;
  emit_profile_body(out, p);
  return std::string(out.c_str()) + "\n";
}

Scenario parse_scenario(const std::string& text, const std::filesystem::path& profile_dir) {
  const YAML::Node root = parse_yaml(text);
  if (!root || root.IsNull()) throw ScenarioError("scenario is empty");
  MapReader top(root, "scenario");
  Scenario s;
  s.name = top.get<std::string>("name", s.name);
  s.seed = top.get<std::uint64_t>("seed", s.seed);
  s.end_time = top.seconds("end_time", s.end_time);

  if (top.has("bands")) {
    s.bands.clear();
    const YAML::Node bands = root["bands"];
    if (!bands.IsSequence()) fail_at(bands, "bands must be a list");
    for (const auto& b : bands) {
      MapReader m(b, "band");
      regulator::SubBand sb;
      sb.id = m.req<std::string>("id");
      sb.freq_low_hz = m.req<double>("low_hz");
      sb.freq_high_hz = m.req<double>("high_hz");
      sb.duty_cycle_limit = m.req<double>("duty_cycle");
      sb.max_erp_dbm = m.get<double>("max_erp_dbm", 14.0);
      m.finish();
      s.bands.push_back(sb);
    }
  }
  if (top.has("channels")) s.channels = doubles(root["channels"], "channels");

  if (top.has("mac")) {
    MapReader m(root["mac"], "mac");
    auto& p = s.mac;
    p.rx1_delay = m.seconds("rx1_delay", p.rx1_delay);
    p.rx2_delay = m.seconds("rx2_delay", p.rx2_delay);
    p.rx2_freq_hz = m.get<double>("rx2_freq_hz", p.rx2_freq_hz);
    p.rx2_dr = m.get<int>("rx2_dr", p.rx2_dr);
    p.rx1_dr_offset = m.get<int>("rx1_dr_offset", p.rx1_dr_offset);
    p.preamble_detect_symbols = m.get<int>("preamble_detect_symbols", p.preamble_detect_symbols);
    p.join_accept_delay1 = m.seconds("join_accept_delay1", p.join_accept_delay1);
    p.join_accept_delay2 = m.seconds("join_accept_delay2", p.join_accept_delay2);
    p.join_backoff = m.seconds("join_backoff", p.join_backoff);
    p.command_latency = m.seconds("command_latency", p.command_latency);
    p.setup_commands = m.get<int>("setup_commands", p.setup_commands);
    p.resume_commands = m.get<int>("resume_commands", p.resume_commands);
    if (m.has("downlink_policy")) {
      const YAML::Node n = root["mac"]["downlink_policy"];
      const auto v = n.as<std::string>();
      if (v == "prefer_rw1") {
        s.downlink_policy = ns::DownlinkPolicy::PreferRw1;
      } else if (v == "rw2_only") {
        s.downlink_policy = ns::DownlinkPolicy::Rw2Only;
      } else {
        fail_at(n, "downlink_policy must be 'prefer_rw1' or 'rw2_only'");
      }
    }
    s.join_success_probability = m.get<double>("join_success_probability", s.join_success_probability);
    m.finish();
  }

  if (top.has("link")) {
    MapReader m(root["link"], "link");
    s.path_loss.reference_loss_db = m.get<double>("reference_loss_db", s.path_loss.reference_loss_db);
    s.path_loss.reference_distance_m = m.get<double>("reference_distance_m", s.path_loss.reference_distance_m);
    s.path_loss.exponent = m.get<double>("exponent", s.path_loss.exponent);
    if (m.has("sensitivity_dbm")) {
      const YAML::Node n = root["link"]["sensitivity_dbm"];
      const auto v = doubles(n, "sensitivity_dbm");
      if (v.size() != static_cast<std::size_t>(phy::kNumDataRates)) fail_at(n, "sensitivity_dbm needs 8 entries, DR0..DR7");
      std::array<double, phy::kNumDataRates> a{};
      std::copy(v.begin(), v.end(), a.begin());
      s.sensitivity = phy::SensitivityTable(a);
    }
    m.finish();
  }

  if (top.has("power_profile")) {
    const YAML::Node n = root["power_profile"];
    if (n.IsScalar()) {
      s.profile_ref = n.as<std::string>();
      const auto path = profile_dir / (s.profile_ref + ".yaml");
      if (!std::filesystem::exists(path)) fail_at(n, "unknown power profile '" + s.profile_ref + "'");
      s.profile = load_profile(path);
    } else {
      s.profile = profile_from(n);
    }
  }

  if (top.has("switches")) {
    MapReader m(root["switches"], "switches");
    auto& w = s.switches;
    w.device_duty_cycle = m.get<bool>("device_duty_cycle", w.device_duty_cycle);
    w.gateway_duty_cycle = m.get<bool>("gateway_duty_cycle", w.gateway_duty_cycle);
    w.duty_cycle_applies_to_d2d = m.get<bool>("duty_cycle_applies_to_d2d", w.duty_cycle_applies_to_d2d);
    w.d2d_frame_loss_prob = m.get<double>("d2d_frame_loss_prob", w.d2d_frame_loss_prob);
    w.capture_threshold_db = m.get<double>("capture_threshold_db", w.capture_threshold_db);
    m.finish();
  }

  if (top.has("gateways")) {
    const YAML::Node list = root["gateways"];
    if (!list.IsSequence()) fail_at(list, "gateways must be a list");
    for (const auto& g : list) {
      MapReader m(g, "gateway");
      GatewaySpec gs;
      gs.line = g.Mark().line + 1;
      gs.name = m.req<std::string>("name");
      if (m.has("position")) gs.position = position(g["position"]);
      if (m.has("channels")) gs.channels = doubles(g["channels"], "gateway channels");
      gs.tx_power_dbm = m.get<double>("tx_power_dbm", gs.tx_power_dbm);
      m.finish();
      s.gateways.push_back(gs);
    }
  }

  if (top.has("devices")) {
    const YAML::Node list = root["devices"];
    if (!list.IsSequence()) fail_at(list, "devices must be a list");
    for (const auto& d : list) {
      MapReader m(d, "device");
      DeviceSpec ds;
      ds.line = d.Mark().line + 1;
      ds.name = m.req<std::string>("name");
      ds.count = m.get<int>("count", 1);
      ds.dev_eui = m.get<std::string>("dev_eui", ds.name);
      if (m.has("dev_addr")) ds.dev_addr = address(d["dev_addr"]);
      ds.joined = m.get<bool>("joined", ds.dev_addr.has_value());
      if (m.has("position")) ds.position = position(d["position"]);
      if (m.has("channels")) ds.channels = doubles(d["channels"], "device channels");
      ds.dr = m.get<int>("dr", ds.dr);
      ds.tx_power_dbm = m.get<double>("tx_power_dbm", ds.tx_power_dbm);
      if (m.has("traffic")) ds.traffic = traffic_from(d["traffic"]);
      ds.period = m.seconds("period", ds.period);
      ds.first_uplink = m.seconds("first_uplink", ds.first_uplink);
      ds.jitter = m.get<double>("jitter", ds.jitter);
      ds.payload_bytes = m.get<int>("payload_bytes", ds.payload_bytes);
      if (m.has("max_uplinks")) ds.max_uplinks = m.req<int>("max_uplinks");
      m.finish();
      s.devices.push_back(ds);
    }
  }

  if (top.has("relays")) {
    const YAML::Node list = root["relays"];
    if (!list.IsSequence()) fail_at(list, "relays must be a list");
    for (const auto& r : list) {
      MapReader m(r, "relay");
      RelaySpec rs;
      rs.line = r.Mark().line + 1;
      rs.from = m.req<std::string>("from");
      rs.to = m.req<std::string>("to");
      m.finish();
      s.relays.push_back(rs);
    }
  }

  if (top.has("d2d")) {
    const YAML::Node list = root["d2d"];
    if (!list.IsSequence()) fail_at(list, "d2d must be a list");
    for (const auto& e : list) {
      MapReader m(e, "d2d directive");
      D2DDirective dd;
      dd.line = e.Mark().line + 1;
      dd.at = m.seconds("at", dd.at);
      dd.initiator = m.req<std::string>("initiator");
      dd.scanner = m.req<std::string>("scanner");
      auto& p = dd.params;
      p.freq_hz = m.get<std::uint32_t>("freq_hz", p.freq_hz);
      p.dr = m.get<int>("dr", p.dr);
      p.tx_power_dbm = m.get<int>("tx_power_dbm", p.tx_power_dbm);
      p.gap = m.seconds("gap", p.gap);
      p.t2 = m.seconds("t2", p.t2);
      p.session.turnaround = m.seconds("turnaround", p.session.turnaround);
      p.session.guard = m.seconds("guard", p.session.guard);
      p.session.total_bytes = m.get<int>("total_bytes", p.session.total_bytes);
      p.session.data_bytes = m.get<int>("data_bytes", p.session.data_bytes);
      p.session.ack_bytes = m.get<int>("ack_bytes", p.session.ack_bytes);
      p.session.max_attempts = m.get<int>("max_attempts", p.session.max_attempts);
      m.finish();
      s.d2d.push_back(dd);
    }
  }
  top.finish();
  validate(s);
  return s;
}

Scenario load_scenario(const std::filesystem::path& path, const std::filesystem::path& profile_dir) {
  try {
    return parse_scenario(read_file(path), profile_dir);
  } catch (const ScenarioError& e) {
    throw ScenarioError(path.string() + ": " + e.what());
  }
}

Scenario load_named_scenario(const std::string& name_or_path) {
  std::filesystem::path p(name_or_path);
  if (std::filesystem::exists(p)) return load_scenario(p);
  const auto bundled = default_scenario_dir() / (name_or_path + ".yaml");
  if (std::filesystem::exists(bundled)) return load_scenario(bundled);
  throw ScenarioError("no scenario file or bundled scenario named '" + name_or_path + "'");
}

void validate(const Scenario& s) {
  if (s.end_time.count() <= 0) throw ScenarioError("end_time must be positive");
  regulator::BandPlan plan = [&] {
    try {
      return regulator::BandPlan(s.bands);
    } catch (const regulator::ConfigError& e) {
      throw ScenarioError(e.what());
    }
  }();
  auto in_band = [&](double f, int line, const std::string& what) {
    try {
      plan.classify(f);
    } catch (const regulator::ConfigError&) {
      fail_line(line, what + " frequency " + num(f) + " Hz is outside every band");
    }
  };
  auto valid_dr = [](int dr, int line, const std::string& what) {
    if (dr < 0 || dr >= phy::kNumDataRates) fail_line(line, what + " DR " + std::to_string(dr) + " is outside 0..7");
  };
  if (s.channels.empty()) throw ScenarioError("channel plan is empty");
  for (double f : s.channels) in_band(f, 0, "channel");
  in_band(s.mac.rx2_freq_hz, 0, "RX2");
  valid_dr(s.mac.rx2_dr, 0, "RX2");
  if (s.mac.preamble_detect_symbols < 1) throw ScenarioError("preamble_detect_symbols must be at least 1");
  if (s.mac.setup_commands < 0 || s.mac.resume_commands < 0) throw ScenarioError("command counts must be >= 0");
  if (!(s.join_success_probability >= 0.0 && s.join_success_probability <= 1.0)) {
    throw ScenarioError("join_success_probability must be within [0, 1]");
  }
  if (!(s.switches.d2d_frame_loss_prob >= 0.0 && s.switches.d2d_frame_loss_prob <= 1.0)) {
    throw ScenarioError("d2d_frame_loss_prob must be within [0, 1]");
  }
  if (!(s.switches.capture_threshold_db >= 0.0)) throw ScenarioError("capture_threshold_db must be >= 0");
  try {
    s.profile.validate();
  } catch (const std::invalid_argument& e) {
    throw ScenarioError(e.what());
  }

  std::set<std::string> gw_names;
  for (const auto& g : s.gateways) {
    if (!gw_names.insert(g.name).second) fail_line(g.line, "duplicate gateway name '" + g.name + "'");
    if (!std::isfinite(g.position.x) || !std::isfinite(g.position.y)) fail_line(g.line, "gateway position must be finite");
    for (double f : g.channels) in_band(f, g.line, "gateway channel");
  }

  std::set<std::string> names;
  std::set<std::uint32_t> addrs;
  for (const auto& d : s.devices) {
    if (d.count < 1) fail_line(d.line, "device count must be >= 1");
    if (!names.insert(d.name).second) fail_line(d.line, "duplicate device name '" + d.name + "'");
    valid_dr(d.dr, d.line, "device");
    if (d.dr == 7) fail_line(d.line, "GFSK uplinks are not modelled; use DR0..DR6");
    if (!std::isfinite(d.position.x) || !std::isfinite(d.position.y)) fail_line(d.line, "device position must be finite");
    if (d.tx_power_dbm < 2.0 || d.tx_power_dbm > 20.0) fail_line(d.line, "tx_power_dbm must be within 2..20 dBm");
    for (double f : d.channels) in_band(f, d.line, "device channel");
    if (d.period.count() <= 0) fail_line(d.line, "period must be positive");
    if (!(d.jitter >= 0.0 && d.jitter < 0.5)) fail_line(d.line, "jitter must be within [0, 0.5)");
    const int max_payload = phy::data_rate(d.dr).max_mac_payload_bytes;
    if (d.payload_bytes < 0 || d.payload_bytes > max_payload) {
      fail_line(d.line, "payload_bytes must be within 0.." + std::to_string(max_payload) + " at DR" + std::to_string(d.dr));
    }
    if (d.max_uplinks && *d.max_uplinks < 0) fail_line(d.line, "max_uplinks must be >= 0");
    if (d.joined && !d.dev_addr) fail_line(d.line, "a joined device needs a dev_addr");
    if (d.dev_addr) {
      for (int i = 0; i < d.count; ++i) {
        if (!addrs.insert(*d.dev_addr + static_cast<std::uint32_t>(i)).second) {
          fail_line(d.line, "dev_addr " + hex32(*d.dev_addr + static_cast<std::uint32_t>(i)) + " is used twice");
        }
      }
    }
  }
  auto single = [&](const std::string& name, int line) {
    for (const auto& d : s.devices) {
      if (d.name == name) {
        if (d.count != 1) fail_line(line, "'" + name + "' is a device group; name a single device");
        return d;
      }
    }
    fail_line(line, "unknown device '" + name + "'");
  };
  for (const auto& r : s.relays) {
    const auto a = single(r.from, r.line);
    const auto b = single(r.to, r.line);
    if (r.from == r.to) fail_line(r.line, "relay source and destination must differ");
    if (!b.dev_addr) fail_line(r.line, "relay destination needs a provisioned dev_addr");
    (void)a;
  }
  for (const auto& e : s.d2d) {
    single(e.initiator, e.line);
    single(e.scanner, e.line);
    if (e.initiator == e.scanner) fail_line(e.line, "D2D initiator and scanner must be different devices");
    valid_dr(e.params.dr, e.line, "D2D");
    in_band(e.params.freq_hz, e.line, "D2D");
    if (e.params.tx_power_dbm < 2 || e.params.tx_power_dbm > 20) fail_line(e.line, "D2D tx_power_dbm must be within 2..20");
    if (e.params.session.data_bytes < 1 || e.params.session.data_bytes + d2d::kFrameOverheadBytes > phy::kMaxPhyPayloadBytes) {
      fail_line(e.line, "D2D data_bytes must fit a 255 B frame with 13 B overhead");
    }
    if (e.params.session.ack_bytes < 0 || e.params.session.total_bytes < 1 || e.params.session.max_attempts < 1) {
      fail_line(e.line, "D2D byte counts and max_attempts must be positive");
    }
    try {
      d2d::encode_setup({d2d::Role::Initiator, e.params.freq_hz, e.params.dr, e.params.tx_power_dbm, e.params.gap,
                         e.params.t2, 0});
    } catch (const d2d::CodecError& err) {
      fail_line(e.line, err.what());
    }
  }
}

std::vector<DeviceSpec> expand_devices(const Scenario& s) {
  std::vector<DeviceSpec> out;
  for (const auto& d : s.devices) {
    if (d.count == 1) {
      out.push_back(d);
      continue;
    }
    for (int i = 0; i < d.count; ++i) {
      DeviceSpec e = d;
      e.count = 1;
      e.name = d.name + "-" + std::to_string(i);
      e.dev_eui = d.dev_eui + "-" + std::to_string(i);
      if (d.dev_addr) e.dev_addr = *d.dev_addr + static_cast<std::uint32_t>(i);
      out.push_back(e);
    }
  }
  return out;
}

std::string emit_scenario(const Scenario& s) {
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "name" << YAML::Value << s.name;
  out << YAML::Key << "seed" << YAML::Value << s.seed;
  out << YAML::Key << "end_time" << YAML::Value << secs(s.end_time);

  out << YAML::Key << "bands" << YAML::Value << YAML::BeginSeq;
  for (const auto& b : s.bands) {
    out << YAML::Flow << YAML::BeginMap;
    out << YAML::Key << "id" << YAML::Value << b.id;
    out << YAML::Key << "low_hz" << YAML::Value << num(b.freq_low_hz);
    out << YAML::Key << "high_hz" << YAML::Value << num(b.freq_high_hz);
    out << YAML::Key << "duty_cycle" << YAML::Value << num(b.duty_cycle_limit);
    out << YAML::Key << "max_erp_dbm" << YAML::Value << num(b.max_erp_dbm);
    out << YAML::EndMap;
  }
  out << YAML::EndSeq;

  auto list = [&](const std::vector<double>& v) {
    out << YAML::Flow << YAML::BeginSeq;
    for (double x : v) out << num(x);
    out << YAML::EndSeq;
  };
  out << YAML::Key << "channels" << YAML::Value;
  list(s.channels);

  const auto& p = s.mac;
  out << YAML::Key << "mac" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "rx1_delay" << YAML::Value << secs(p.rx1_delay);
  out << YAML::Key << "rx2_delay" << YAML::Value << secs(p.rx2_delay);
  out << YAML::Key << "rx2_freq_hz" << YAML::Value << num(p.rx2_freq_hz);
  out << YAML::Key << "rx2_dr" << YAML::Value << p.rx2_dr;
  out << YAML::Key << "rx1_dr_offset" << YAML::Value << p.rx1_dr_offset;
  out << YAML::Key << "preamble_detect_symbols" << YAML::Value << p.preamble_detect_symbols;
  out << YAML::Key << "join_accept_delay1" << YAML::Value << secs(p.join_accept_delay1);
  out << YAML::Key << "join_accept_delay2" << YAML::Value << secs(p.join_accept_delay2);
  out << YAML::Key << "join_backoff" << YAML::Value << secs(p.join_backoff);
  out << YAML::Key << "command_latency" << YAML::Value << secs(p.command_latency);
  out << YAML::Key << "setup_commands" << YAML::Value << p.setup_commands;
  out << YAML::Key << "resume_commands" << YAML::Value << p.resume_commands;
  out << YAML::Key << "downlink_policy" << YAML::Value << ns::to_string(s.downlink_policy);
  out << YAML::Key << "join_success_probability" << YAML::Value << num(s.join_success_probability);
  out << YAML::EndMap;

  out << YAML::Key << "link" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "reference_loss_db" << YAML::Value << num(s.path_loss.reference_loss_db);
  out << YAML::Key << "reference_distance_m" << YAML::Value << num(s.path_loss.reference_distance_m);
  out << YAML::Key << "exponent" << YAML::Value << num(s.path_loss.exponent);
  out << YAML::Key << "sensitivity_dbm" << YAML::Value;
  list(std::vector<double>(s.sensitivity.values().begin(), s.sensitivity.values().end()));
  out << YAML::EndMap;

  out << YAML::Key << "power_profile" << YAML::Value;
  if (!s.profile_ref.empty()) {
    out << s.profile_ref;
  } else {
    emit_profile_body(out, s.profile);
  }

  const auto& w = s.switches;
  out << YAML::Key << "switches" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "device_duty_cycle" << YAML::Value << YAML::TrueFalseBool << w.device_duty_cycle;
  out << YAML::Key << "gateway_duty_cycle" << YAML::Value << w.gateway_duty_cycle;
  out << YAML::Key << "duty_cycle_applies_to_d2d" << YAML::Value << w.duty_cycle_applies_to_d2d;
  out << YAML::Key << "d2d_frame_loss_prob" << YAML::Value << num(w.d2d_frame_loss_prob);
  out << YAML::Key << "capture_threshold_db" << YAML::Value << num(w.capture_threshold_db);
  out << YAML::EndMap;

  out << YAML::Key << "gateways" << YAML::Value << YAML::BeginSeq;
  for (const auto& g : s.gateways) {
    out << YAML::BeginMap;
    out << YAML::Key << "name" << YAML::Value << g.name;
    out << YAML::Key << "position" << YAML::Value;
    list({g.position.x, g.position.y});
    out << YAML::Key << "channels" << YAML::Value;
    list(g.channels);
    out << YAML::Key << "tx_power_dbm" << YAML::Value << num(g.tx_power_dbm);
    out << YAML::EndMap;
  }
  out << YAML::EndSeq;

  out << YAML::Key << "devices" << YAML::Value << YAML::BeginSeq;
  for (const auto& d : s.devices) {
    out << YAML::BeginMap;
    out << YAML::Key << "name" << YAML::Value << d.name;
    out << YAML::Key << "count" << YAML::Value << d.count;
    out << YAML::Key << "dev_eui" << YAML::Value << d.dev_eui;
    if (d.dev_addr) out << YAML::Key << "dev_addr" << YAML::Value << hex32(*d.dev_addr);
    out << YAML::Key << "joined" << YAML::Value << d.joined;
    out << YAML::Key << "position" << YAML::Value;
    list({d.position.x, d.position.y});
    out << YAML::Key << "channels" << YAML::Value;
    list(d.channels);
    out << YAML::Key << "dr" << YAML::Value << d.dr;
    out << YAML::Key << "tx_power_dbm" << YAML::Value << num(d.tx_power_dbm);
    out << YAML::Key << "traffic" << YAML::Value
        << (d.traffic == mac::TrafficModel::Periodic ? "periodic" : "poisson");
    out << YAML::Key << "period" << YAML::Value << secs(d.period);
    out << YAML::Key << "first_uplink" << YAML::Value << secs(d.first_uplink);
    out << YAML::Key << "jitter" << YAML::Value << num(d.jitter);
    out << YAML::Key << "payload_bytes" << YAML::Value << d.payload_bytes;
    if (d.max_uplinks) out << YAML::Key << "max_uplinks" << YAML::Value << *d.max_uplinks;
    out << YAML::EndMap;
  }
  out << YAML::EndSeq;

  out << YAML::Key << "relays" << YAML::Value << YAML::BeginSeq;
  for (const auto& r : s.relays) {
    out << YAML::Flow << YAML::BeginMap;
    out << YAML::Key << "from" << YAML::Value << r.from;
    out << YAML::Key << "to" << YAML::Value << r.to;
    out << YAML::EndMap;
  }
  out << YAML::EndSeq;

  out << YAML::Key << "d2d" << YAML::Value << YAML::BeginSeq;
  for (const auto& e : s.d2d) {
    const auto& q = e.params;
    out << YAML::BeginMap;
    out << YAML::Key << "at" << YAML::Value << secs(e.at);
    out << YAML::Key << "initiator" << YAML::Value << e.initiator;
    out << YAML::Key << "scanner" << YAML::Value << e.scanner;
    out << YAML::Key << "freq_hz" << YAML::Value << q.freq_hz;
    out << YAML::Key << "dr" << YAML::Value << q.dr;
    out << YAML::Key << "tx_power_dbm" << YAML::Value << q.tx_power_dbm;
    out << YAML::Key << "gap" << YAML::Value << secs(q.gap);
    out << YAML::Key << "t2" << YAML::Value << secs(q.t2);
    out << YAML::Key << "turnaround" << YAML::Value << secs(q.session.turnaround);
    out << YAML::Key << "guard" << YAML::Value << secs(q.session.guard);
    out << YAML::Key << "total_bytes" << YAML::Value << q.session.total_bytes;
    out << YAML::Key << "data_bytes" << YAML::Value << q.session.data_bytes;
    out << YAML::Key << "ack_bytes" << YAML::Value << q.session.ack_bytes;
    out << YAML::Key << "max_attempts" << YAML::Value << q.session.max_attempts;
    out << YAML::EndMap;
  }
  out << YAML::EndSeq;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

}  // namespace lorasim
