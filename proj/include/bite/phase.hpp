#pragma once

#include <string_view>

namespace bite {

/// Transfer state machine phases, in protocol order.
enum class TransferPhase {
  Scan = 0,
  FaceDetect,
  ApproachArc,
  Entry,
  BiteWait,
  Exit,
  RetractArc,
  Done,
  Aborted,
};

std::string_view to_string(TransferPhase phase);

/// Throws std::invalid_argument on unknown names.
TransferPhase parse_phase(std::string_view name);

/// Exit and RetractArc run with the exit-side gains.
inline bool is_exit_side(TransferPhase phase) {
  return phase == TransferPhase::Exit || phase == TransferPhase::RetractArc;
}

}  // namespace bite
