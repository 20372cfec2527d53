#pragma once

#include <stdexcept>
#include <string>

namespace md {

enum class ErrorKind {
  InvalidArgument,  // bad shapes, out-of-range indices, invalid values
  Config,           // malformed or inconsistent experiment configuration
  NotFound,         // missing file, checkpoint, class
  Format,           // bad magic, version mismatch, truncated or inconsistent files
  Io,               // read/write failures
  Numeric,          // non-finite evaluation, zero-norm vectors
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) throw Error(kind, what);
}

}  // namespace md
