#include "bite/phase.hpp"

#include <array>
#include <stdexcept>
#include <string>

namespace bite {

namespace {

constexpr std::array<std::string_view, 9> kNames = {
    "scan", "face_detect", "approach_arc", "entry", "bite_wait",
    "exit", "retract_arc", "done",         "aborted"};

}  // namespace

std::string_view to_string(TransferPhase phase) { return kNames[static_cast<std::size_t>(phase)]; }

TransferPhase parse_phase(std::string_view name) {
  for (std::size_t i = 0; i < kNames.size(); ++i) {
    if (kNames[i] == name) return static_cast<TransferPhase>(i);
  }
  throw std::invalid_argument("unknown phase: " + std::string(name));
}

}  // namespace bite
