#pragma once

#include <stdexcept>
#include <string>

namespace contactsynth {

enum class ErrorKind {
  InvalidArgument,
  DegenerateGeometry,
  ZeroMotion,
  SolverFailure,
  EmptySelection,
  NoContact,
  InvalidStart,
  InvalidGoal,
  NoPathFound,
  ParseError,
  ConfigError,
  IoError,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::DegenerateGeometry: return "DegenerateGeometry";
    case ErrorKind::ZeroMotion: return "ZeroMotion";
    case ErrorKind::SolverFailure: return "SolverFailure";
    case ErrorKind::EmptySelection: return "EmptySelection";
    case ErrorKind::NoContact: return "NoContact";
    case ErrorKind::InvalidStart: return "InvalidStart";
    case ErrorKind::InvalidGoal: return "InvalidGoal";
    case ErrorKind::NoPathFound: return "NoPathFound";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

/// Exception carrying a machine-checkable error kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace contactsynth
