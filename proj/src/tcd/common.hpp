// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace tcd {

// Every failure the library can raise, each mapped to its own C status /
// process exit code. Keep this list in sync with tcd_status in tcd.h.
enum class ErrorCode : int {
  ok = 0,
  invalid_argument = 1,  // bad parameter value (range, sign, enum)
  structure = 2,         // inconsistent shapes / skeleton wiring
  io = 3,                // filesystem-level failure (open, read, write)
  format = 4,            // unrecognized magic / not one of our files
  truncated = 5,         // file shorter than its header promises
  header_mismatch = 6,   // header readable but self-inconsistent
  version = 7,           // file written by an incompatible version
  corrupt = 8,           // payload fails integrity checks
  mode = 9,              // operation not valid for this object's role
  state = 10,            // call sequence violation (e.g. stepping past t=0)
  numeric = 11,          // non-finite value or numerical-domain violation
  degenerate = 12,       // no data to act on (e.g. batch with empty mask)
  external = 13,         // plugged-in external command failed
  internal = 14,         // bug trap; should never surface in normal use
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace tcd
