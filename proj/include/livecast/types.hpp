#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>

namespace livecast {

/// Simulated time in milliseconds.
using SimTime = double;

struct PeerId {
  std::uint32_t value = 0;
  friend auto operator<=>(const PeerId&, const PeerId&) = default;
};

struct StreamId {
  std::uint64_t value = 0;
  friend auto operator<=>(const StreamId&, const StreamId&) = default;
};

inline constexpr PeerId kNoPeer{0xffffffffu};

enum class Role : std::uint8_t { kConsumer, kNcp, kPeercaster };

std::string_view to_string(Role role);
Role role_from_string(std::string_view text);

}  // namespace livecast

template <>
struct std::hash<livecast::PeerId> {
  std::size_t operator()(livecast::PeerId id) const noexcept { return std::hash<std::uint32_t>{}(id.value); }
};

template <>
struct std::hash<livecast::StreamId> {
  std::size_t operator()(livecast::StreamId id) const noexcept { return std::hash<std::uint64_t>{}(id.value); }
};
