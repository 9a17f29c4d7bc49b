#pragma once

#include <stdexcept>
#include <string>

namespace snce {

// Filesystem-level failure: cannot open, read or write.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Structurally invalid file: wrong magic, unsupported version, truncated or
// non-finite payload.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Training produced a non-finite value; carries the step it happened at.
class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& what, long step)
      : std::runtime_error(what), step_(step) {}
  long step() const { return step_; }

 private:
  long step_;
};

}  // namespace snce
