#pragma once

#include <stdexcept>
#include <string>

namespace sculpt {

enum class Errc {
  invalid_argument,
  dimension_mismatch,
  format,
  io,
  validation,
  coupling,
  internal,
};

const char* errc_name(Errc code);

// Every failure raised by the core library is an Error carrying a category
// code; the C API maps the category onto its status enum.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] void fail(Errc code, const std::string& what);

inline void require(bool cond, Errc code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace sculpt
