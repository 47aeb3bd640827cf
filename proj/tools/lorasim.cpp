// lorasim: scenario runner and calculators.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "lorasim/network.hpp"
#include "lorasim/phy.hpp"
#include "lorasim/regulator.hpp"
#include "lorasim/scenario.hpp"
#include "lorasim/table2.hpp"

namespace fs = std::filesystem;
using namespace lorasim;

namespace {

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

int cmd_run(const std::string& scenario_arg, std::optional<std::uint64_t> seed, const std::string& out_dir,
            bool trace) {
  const Scenario s = load_named_scenario(scenario_arg);
  RunOptions opt;
  opt.seed = seed;
  opt.trace = trace;
  Network net(s, opt);
  net.run();
  const auto metrics = net.metrics();
  const fs::path out(out_dir);
  write_file(out / "metrics.json", metrics.dump(2) + "\n");
  if (trace) write_file(out / "trace.jsonl", net.engine().trace().text());

  std::cout << "scenario " << s.name << " seed " << net.seed() << ": " << metrics["network"]["transmissions"]
            << " transmissions, " << metrics["network"]["collisions"] << " collisions, "
            << metrics["network"]["uplinks_delivered"] << " uplinks delivered\n";
  for (const auto& t : metrics["transfers"]) {
    std::cout << "transfer " << t["from"].get<std::string>() << " -> " << t["to"].get<std::string>() << ": "
              << t["messages_delivered"] << "/" << t["messages_sent"] << " messages, total_transfer_time "
              << t["total_transfer_time"] << " s\n";
  }
  for (const auto& d : metrics["devices"]) {
    for (const auto& x : d["sessions"]) {
      std::printf("d2d %s (%s): %s, %d B, finished at %.6f s\n", d["name"].get<std::string>().c_str(),
                  x["role"].get<std::string>().c_str(), x["outcome"].get<std::string>().c_str(),
                  x["bytes_delivered"].get<int>(), x["finished_s"].get<double>());
    }
  }
  std::cout << "wrote " << (out / "metrics.json").string();
  if (trace) std::cout << " and " << (out / "trace.jsonl").string();
  std::cout << "\n";
  return 0;
}

int cmd_toa(int dr, int bytes, bool mac, bool downlink) {
  const int phy_bytes = mac ? phy::lorawan_phy_bytes(bytes) : bytes;
  const auto opts = downlink ? phy::FrameOptions::downlink() : phy::FrameOptions::uplink();
  const auto toa = phy::time_on_air(dr, phy_bytes, opts);
  std::printf("%.6f\n", to_seconds(toa));
  return 0;
}

int cmd_duty(int dr, int bytes, bool mac, double freq_hz) {
  const int phy_bytes = mac ? phy::lorawan_phy_bytes(bytes) : bytes;
  const auto toa = phy::time_on_air(dr, phy_bytes);
  const auto plan = regulator::BandPlan::eu868();
  const auto& band = plan.classify(freq_hz);
  const auto off = regulator::off_time(toa, band.duty_cycle_limit);
  const double cycle = to_seconds(toa + off);
  std::printf("band %s (limit %.3g%%)\n", band.id.c_str(), 100.0 * band.duty_cycle_limit);
  std::printf("time on air   %.6f s\n", to_seconds(toa));
  std::printf("off time      %.6f s\n", to_seconds(off));
  std::printf("min interval  %.6f s\n", cycle);
  std::printf("max per hour  %lld\n", static_cast<long long>(3600.0 / cycle));
  return 0;
}

int cmd_table2(const std::string& out_dir, bool calibrate, std::optional<std::uint64_t> seed) {
  table2::Options opt;
  opt.calibrate = calibrate;
  opt.seed = seed;
  const auto rep = table2::run(opt);
  std::cout << rep.text();
  if (!out_dir.empty()) {
    write_file(fs::path(out_dir) / "table2.json", rep.to_json().dump(2) + "\n");
    std::cout << "wrote " << (fs::path(out_dir) / "table2.json").string() << "\n";
  }
  return 0;
}

int cmd_calibrate(const std::string& out_file) {
  const auto rep = table2::run({});
  const auto& cal = *rep.calibration;
  std::fprintf(stderr, "fitted tx %.9g W, rx %.9g W\n", cal.tx_watts, cal.rx_watts);
  for (const auto& r : cal.residuals) {
    std::fprintf(stderr, "  %-12s target %.4f J fitted %.4f J (%+.2f%%)\n", r.role.c_str(), r.target_joules,
                 r.fitted_joules, 100.0 * r.relative_error);
  }
  const auto yaml = emit_profile(cal.profile);
  if (out_file.empty()) {
    std::cout << yaml;
  } else {
    write_file(out_file, yaml);
  }
  return 0;
}

void apply_param(Scenario& s, const std::string& name, double v) {
  if (name == "d2d_frame_loss_prob") {
    s.switches.d2d_frame_loss_prob = v;
  } else if (name == "capture_threshold_db") {
    s.switches.capture_threshold_db = v;
  } else if (name == "command_latency") {
    s.mac.command_latency = from_seconds(v);
  } else if (name == "d2d_gap") {
    for (auto& d : s.d2d) d.params.gap = from_seconds(v);
  } else if (name == "end_time") {
    s.end_time = from_seconds(v);
  } else {
    throw CLI::ValidationError("--param", "unknown sweep parameter '" + name + "'");
  }
}

int cmd_sweep(const std::string& scenario_arg, int seeds, std::uint64_t first_seed, const std::string& param,
              const std::vector<double>& values, const std::string& out_dir) {
  const Scenario base = load_named_scenario(scenario_arg);
  std::vector<std::optional<double>> points;
  if (param.empty()) {
    points.push_back(std::nullopt);
  } else {
    for (double v : values) points.push_back(v);
  }

  std::ostringstream csv;
  csv << "param,value,seed,transmissions,collisions,uplinks_delivered,max_band_fraction,"
         "d2d_attempted,d2d_established,d2d_completed,total_transfer_time\n";
  for (const auto& p : points) {
    Scenario s = base;
    if (p) apply_param(s, param, *p);
    for (int i = 0; i < seeds; ++i) {
      RunOptions opt;
      opt.seed = first_seed + static_cast<std::uint64_t>(i);
      opt.trace = false;
      Network net(s, opt);
      net.run();
      const auto m = net.metrics();
      double max_fraction = 0.0;
      for (const auto& b : m["network"]["bands"]) max_fraction = std::max(max_fraction, b["max_on_air_fraction"].get<double>());
      int attempted = 0, established = 0, completed = 0;
      for (const auto& d : m["devices"]) {
        for (const auto& x : d["sessions"]) {
          if (x["role"] != "initiator") continue;
          ++attempted;
          established += !x["established_s"].is_null();
          completed += x["outcome"] == "done";
        }
      }
      std::string transfer;
      if (!m["transfers"].empty() && !m["transfers"][0]["total_transfer_time"].is_null()) {
        transfer = std::to_string(m["transfers"][0]["total_transfer_time"].get<double>());
      }
      csv << (p ? param : "") << "," << (p ? std::to_string(*p) : "") << "," << *opt.seed << ","
          << m["network"]["transmissions"] << "," << m["network"]["collisions"] << ","
          << m["network"]["uplinks_delivered"] << "," << max_fraction << "," << attempted << "," << established
          << "," << completed << "," << transfer << "\n";
    }
  }
  if (out_dir.empty()) {
    std::cout << csv.str();
  } else {
    write_file(fs::path(out_dir) / "sweep.csv", csv.str());
    std::cout << "wrote " << (fs::path(out_dir) / "sweep.csv").string() << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LoRaWAN class A and network-assisted D2D simulator"};
  app.require_subcommand(1);

  std::string scenario;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
  bool trace = false;
  auto* run = app.add_subcommand("run", "Run a scenario and write metrics (and optionally a trace)");
  run->add_option("scenario", scenario, "Scenario file or bundled scenario name")->required();
  run->add_option("--seed", seed, "Override the scenario seed");
  run->add_option("--out", out_dir, "Output directory")->capture_default_str();
  run->add_flag("--trace", trace, "Also write trace.jsonl");

  int dr = 0;
  int bytes = 0;
  bool mac = false;
  bool downlink = false;
  auto* toa = app.add_subcommand("toa", "Time on air of one frame, in seconds");
  toa->add_option("--dr", dr, "Data rate 0..7")->required();
  toa->add_option("--bytes", bytes, "PHY payload bytes (MAC payload with --mac)")->required();
  toa->add_flag("--mac", mac, "Treat --bytes as LoRaWAN application payload");
  toa->add_flag("--downlink", downlink, "No payload CRC, as on downlinks");

  double freq = 868.1e6;
  auto* duty = app.add_subcommand("duty", "Duty cycle budget of one frame");
  duty->add_option("--dr", dr, "Data rate 0..7")->required();
  duty->add_option("--bytes", bytes, "PHY payload bytes (MAC payload with --mac)")->required();
  duty->add_flag("--mac", mac, "Treat --bytes as LoRaWAN application payload");
  duty->add_option("--freq", freq, "Carrier frequency in Hz")->capture_default_str();

  std::string t2_out;
  bool no_calibrate = false;
  auto* t2 = app.add_subcommand("table2", "Reproduce the time and energy comparison");
  t2->add_option("--out", t2_out, "Directory for table2.json");
  t2->add_option("--seed", seed, "Override both scenarios' seed");
  t2->add_flag("--no-calibrate", no_calibrate, "Bill energy with the bundled profile as is");

  int seeds = 10;
  std::uint64_t first_seed = 1;
  std::string param;
  std::vector<double> values;
  std::string sweep_out;
  auto* sweep = app.add_subcommand("sweep", "Run a scenario over seeds and parameter values, CSV out");
  sweep->add_option("scenario", scenario, "Scenario file or bundled scenario name")->required();
  sweep->add_option("--seeds", seeds, "Runs per parameter value")->capture_default_str();
  sweep->add_option("--first-seed", first_seed, "First seed")->capture_default_str();
  sweep->add_option("--param", param,
                    "d2d_frame_loss_prob, capture_threshold_db, command_latency, d2d_gap or end_time");
  sweep->add_option("--values", values, "Parameter values")->delimiter(',');
  sweep->add_option("--out", sweep_out, "Directory for sweep.csv (stdout if omitted)");

  std::string cal_out;
  auto* cal = app.add_subcommand("calibrate", "Fit the power profile to the reference joules");
  cal->add_option("--out", cal_out, "Profile YAML to write (stdout if omitted)");

  auto* check = app.add_subcommand("check", "Validate a scenario and print its canonical form");
  check->add_option("scenario", scenario, "Scenario file or bundled scenario name")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(scenario, seed, out_dir, trace);
    if (*toa) return cmd_toa(dr, bytes, mac, downlink);
    if (*duty) return cmd_duty(dr, bytes, mac, freq);
    if (*t2) return cmd_table2(t2_out, !no_calibrate, seed);
    if (*sweep) {
      if (!param.empty() && values.empty()) throw CLI::ValidationError("--values", "needed with --param");
      return cmd_sweep(scenario, seeds, first_seed, param, values, sweep_out);
    }
    if (*cal) return cmd_calibrate(cal_out);
    if (*check) {
      std::cout << emit_scenario(load_named_scenario(scenario));
      return 0;
    }
  } catch (const ScenarioError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
