#include "momo/error.hpp"

namespace momo {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid-argument";
    case ErrorKind::Schema: return "schema";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::Decode: return "decode";
    case ErrorKind::Injection: return "injection";
    case ErrorKind::Determinism: return "determinism";
    case ErrorKind::NotCaptured: return "not-captured";
    case ErrorKind::NonFinite: return "non-finite";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

}  // namespace momo
