#include "error.hpp"

namespace sculpt {

const char* errc_name(Errc code) {
  switch (code) {
    case Errc::invalid_argument: return "invalid-argument";
    case Errc::dimension_mismatch: return "dimension-mismatch";
    case Errc::format: return "format-error";
    case Errc::io: return "io-error";
    case Errc::validation: return "validation-error";
    case Errc::coupling: return "coupling-error";
    case Errc::internal: return "internal-error";
  }
  return "unknown";
}

void fail(Errc code, const std::string& what) { throw Error(code, what); }

}  // namespace sculpt
