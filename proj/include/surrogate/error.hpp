#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace surrogate {

/// Coarse classification of every failure the library reports. The CLI maps
/// the first group to exit code 2 (bad input or configuration) and the second
/// group to exit code 3 (the estimation itself could not be carried out).
enum class ErrorKind {
  // input / configuration
  schema,
  validation,
  pooling,
  invalid_argument,
  unsupported,
  io,
  // estimation
  singular,
  degenerate_labels,
  separation,
  overlap,
  degenerate_arm,
  unstable_bootstrap,
  unattainable,
  study,
};

constexpr std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::schema: return "schema";
    case ErrorKind::validation: return "validation";
    case ErrorKind::pooling: return "pooling";
    case ErrorKind::invalid_argument: return "invalid_argument";
    case ErrorKind::unsupported: return "unsupported";
    case ErrorKind::io: return "io";
    case ErrorKind::singular: return "singular";
    case ErrorKind::degenerate_labels: return "degenerate_labels";
    case ErrorKind::separation: return "separation";
    case ErrorKind::overlap: return "overlap";
    case ErrorKind::degenerate_arm: return "degenerate_arm";
    case ErrorKind::unstable_bootstrap: return "unstable_bootstrap";
    case ErrorKind::unattainable: return "unattainable";
    case ErrorKind::study: return "study";
  }
  return "unknown";
}

constexpr bool is_input_error(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::schema:
    case ErrorKind::validation:
    case ErrorKind::pooling:
    case ErrorKind::invalid_argument:
    case ErrorKind::unsupported:
    case ErrorKind::io:
      return true;
    default:
      return false;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Raised by fit_all; records which of the four nuisance functions failed.
class NuisanceError : public Error {
 public:
  NuisanceError(std::string nuisance, const Error& cause)
      : Error(cause.kind(), nuisance + ": " + cause.what()),
        nuisance_(std::move(nuisance)) {}

  const std::string& nuisance() const noexcept { return nuisance_; }

 private:
  std::string nuisance_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace surrogate
