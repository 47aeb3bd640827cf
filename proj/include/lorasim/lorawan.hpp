#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace lorasim::lorawan {

enum class Window { RW1, RW2 };

inline const char* to_string(Window w) { return w == Window::RW1 ? "rw1" : "rw2"; }

// Frames carry what the simulator needs to route and account for them; the
// on-air size is tracked separately by the transmission.
struct Uplink {
  std::uint32_t dev_addr = 0;
  std::uint32_t fcnt = 0;
  int port = 1;
  std::vector<std::uint8_t> payload;
  int message_id = -1;  // application message carried, -1 for filler traffic
};

struct Downlink {
  std::uint32_t dev_addr = 0;
  std::uint32_t fcnt = 0;
  int port = 1;
  std::vector<std::uint8_t> payload;
  Window window = Window::RW2;
  int message_id = -1;
};

struct JoinRequest {
  std::string dev_eui;
  std::uint32_t nonce = 0;
};

struct JoinAccept {
  std::string dev_eui;
  std::uint32_t dev_addr = 0;
  Window window = Window::RW1;
};

// MHDR + JoinEUI + DevEUI + DevNonce + MIC.
inline constexpr int kJoinRequestBytes = 23;
// MHDR + encrypted accept without CFList + MIC.
inline constexpr int kJoinAcceptBytes = 17;

}  // namespace lorasim::lorawan
