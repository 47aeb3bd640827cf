#include "lorasim/trace.hpp"

namespace lorasim {

void Trace::record(SimTime t, std::string_view entity, std::string_view kind, nlohmann::ordered_json fields,
                   std::initializer_list<const char*> rng_fields) {
  if (!enabled_) return;
  nlohmann::ordered_json rec;
  rec["time_us"] = t.count();
  rec["entity"] = entity;
  rec["kind"] = kind;
  rec["fields"] = fields.is_null() ? nlohmann::ordered_json::object() : std::move(fields);
  if (rng_fields.size() > 0) {
    auto& tags = rec["rng"] = nlohmann::ordered_json::array();
    for (const char* f : rng_fields) tags.push_back(f);
  }
  lines_.push_back(rec.dump());
}

std::string Trace::text() const {
  std::string out;
  for (const auto& l : lines_) {
    out += l;
    out += '\n';
  }
  return out;
}

void Trace::write(std::ostream& os) const {
  for (const auto& l : lines_) os << l << '\n';
}

}  // namespace lorasim
