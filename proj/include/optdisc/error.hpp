#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace optdisc {

enum class Errc {
  NonRectangular,
  UnknownCharacter,
  NoEmptyCells,
  UnenclosedBoundary,
  NoGoalsForMode,
  IndexOutOfRange,
  UnsupportedGrid,
  DegenerateDistribution,
  EmptyInitiationSet,
  SingularSystem,
  PowerSetTooLarge,
  NonConvergent,
  InvalidConfig,
  InvalidArgument,
  Io,
  Format,
};

inline std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::NonRectangular: return "NonRectangular";
    case Errc::UnknownCharacter: return "UnknownCharacter";
    case Errc::NoEmptyCells: return "NoEmptyCells";
    case Errc::UnenclosedBoundary: return "UnenclosedBoundary";
    case Errc::NoGoalsForMode: return "NoGoalsForMode";
    case Errc::IndexOutOfRange: return "IndexOutOfRange";
    case Errc::UnsupportedGrid: return "UnsupportedGrid";
    case Errc::DegenerateDistribution: return "DegenerateDistribution";
    case Errc::EmptyInitiationSet: return "EmptyInitiationSet";
    case Errc::SingularSystem: return "SingularSystem";
    case Errc::PowerSetTooLarge: return "PowerSetTooLarge";
    case Errc::NonConvergent: return "NonConvergent";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::Io: return "Io";
    case Errc::Format: return "Format";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

inline void check_index(std::size_t index, std::size_t bound, const char* what) {
  if (index >= bound) {
    throw Error(Errc::IndexOutOfRange,
                std::string(what) + " " + std::to_string(index) + " >= " + std::to_string(bound));
  }
}

}  // namespace optdisc
