#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>

namespace spikefluct {

/// Failure categories. The CLI maps these onto its exit codes.
enum class ErrorKind {
  invalid_input,
  dimension_mismatch,
  non_convergence,
  singular,
  support_detected,
  multiplicity,
  simulation,
  verification,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_input: return "invalid_input";
    case ErrorKind::dimension_mismatch: return "dimension_mismatch";
    case ErrorKind::non_convergence: return "non_convergence";
    case ErrorKind::singular: return "singular";
    case ErrorKind::support_detected: return "support_detected";
    case ErrorKind::multiplicity: return "multiplicity";
    case ErrorKind::simulation: return "simulation";
    case ErrorKind::verification: return "verification";
  }
  return "unknown";
}

/// Short scientific rendering for diagnostics.
inline std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", x);
  return buf;
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace spikefluct
