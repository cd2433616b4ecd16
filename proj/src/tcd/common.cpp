// SPDX-License-Identifier: Apache-2.0
#include "tcd/common.hpp"

namespace tcd {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::ok: return "ok";
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::structure: return "structure";
    case ErrorCode::io: return "io";
    case ErrorCode::format: return "format";
    case ErrorCode::truncated: return "truncated";
    case ErrorCode::header_mismatch: return "header_mismatch";
    case ErrorCode::version: return "version";
    case ErrorCode::corrupt: return "corrupt";
    case ErrorCode::mode: return "mode";
    case ErrorCode::state: return "state";
    case ErrorCode::numeric: return "numeric";
    case ErrorCode::degenerate: return "degenerate";
    case ErrorCode::external: return "external";
    case ErrorCode::internal: return "internal";
  }
  return "unknown";
}

}  // namespace tcd
