#pragma once

#include <stdexcept>
#include <string>

namespace fmsv {

// bad flags, malformed config, contradictory options. cli exit code 1.
struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

// unreadable files, malformed csv, NaN cells, dimension mismatches. cli exit code 2.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// degenerate weights, exhausted rejection loops, non-finite state. cli exit code 3.
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

// every particle weight underflowed to log-zero in one period.
struct ParticleCollapse : NumericalError {
  int period;
  explicit ParticleCollapse(int t)
      : NumericalError("particle weights collapsed to zero at period " + std::to_string(t + 1)),
        period(t) {}
};

}  // namespace fmsv
