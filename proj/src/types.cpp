#include "livecast/types.hpp"

#include <stdexcept>

namespace livecast {

std::string_view to_string(Role role) {
  switch (role) {
    case Role::kConsumer: return "consumer";
    case Role::kNcp: return "ncp";
    case Role::kPeercaster: return "peercaster";
  }
  return "unknown";
}

Role role_from_string(std::string_view text) {
  if (text == "consumer") return Role::kConsumer;
  if (text == "ncp") return Role::kNcp;
  if (text == "peercaster") return Role::kPeercaster;
  throw std::invalid_argument("unknown role: " + std::string(text));
}

}  // namespace livecast
