#pragma once

#include <initializer_list>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "lorasim/time.hpp"

namespace lorasim {

/// Line-delimited JSON event log. Field order is fixed so identical runs give
/// identical bytes. Records may name the fields that came from random draws
/// under "rng", which lets seed-to-seed diffs be checked mechanically.
class Trace {
 public:
  explicit Trace(bool enabled = true) : enabled_(enabled) {}

  bool enabled() const { return enabled_; }
  void record(SimTime t, std::string_view entity, std::string_view kind, nlohmann::ordered_json fields = {},
              std::initializer_list<const char*> rng_fields = {});

  const std::vector<std::string>& lines() const { return lines_; }
  std::string text() const;
  void write(std::ostream& os) const;

 private:
  bool enabled_;
  std::vector<std::string> lines_;
};

}  // namespace lorasim
