#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "lorasim/engine.hpp"
#include "lorasim/mac_device.hpp"
#include "lorasim/netserver.hpp"
#include "lorasim/regulator.hpp"
#include "lorasim/scenario.hpp"

namespace lorasim {

inline constexpr int kMetricsSchemaVersion = 1;

struct RunOptions {
  std::optional<std::uint64_t> seed;  // overrides the scenario's
  bool trace = true;
};

/// Application transfer between a relay pair, measured at the destination.
struct Transfer {
  std::string from;
  std::string to;
  int messages_sent = 0;
  int messages_delivered = 0;
  std::optional<SimTime> first_send;
  std::optional<SimTime> last_delivery;

  std::optional<Duration> total_time() const {
    if (!first_send || !last_delivery) return std::nullopt;
    return *last_delivery - *first_send;
  }
};

struct DirectiveOutcome {
  std::string initiator;
  std::string scanner;
  SimTime at{0};
  bool planned = false;
  std::string error;
};

/// One wired-up simulation: engine, gateways, devices and server.
class Network {
 public:
  /// Validates and builds. D2D directives between provisioned devices are
  /// planned once up front so timing errors surface before t = 0.
  explicit Network(Scenario scenario, RunOptions options = {});
  ~Network();
  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;

  /// Runs to the scenario's end time. Call once.
  void run();

  const Scenario& scenario() const { return scenario_; }
  std::uint64_t seed() const { return seed_; }
  Engine& engine() { return *engine_; }
  const Engine& engine() const { return *engine_; }
  const ns::NetworkServer& server() const { return *ns_; }
  const std::vector<std::unique_ptr<mac::EndDevice>>& devices() const { return devices_; }
  const std::vector<std::unique_ptr<ns::Gateway>>& gateways() const { return gateways_; }
  const mac::EndDevice& device(const std::string& name) const;
  const std::vector<DirectiveOutcome>& directives() const { return directives_; }

  std::vector<Transfer> transfers() const;
  nlohmann::ordered_json metrics() const;

 private:
  Scenario scenario_;
  std::uint64_t seed_;
  regulator::BandPlan bands_;
  std::unique_ptr<Engine> engine_;
  std::unique_ptr<ns::NetworkServer> ns_;
  std::vector<std::unique_ptr<ns::Gateway>> gateways_;
  std::vector<std::unique_ptr<mac::EndDevice>> devices_;
  std::vector<DirectiveOutcome> directives_;
  bool ran_ = false;
};

struct RunResult {
  std::string trace;
  nlohmann::ordered_json metrics;
};

/// Convenience wrapper: build, run, collect.
RunResult run(const Scenario& scenario, const RunOptions& options = {});

}  // namespace lorasim
