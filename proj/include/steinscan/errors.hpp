#pragma once

#include <stdexcept>
#include <string>

namespace steinscan {

enum class ErrorCode {
  invalid_argument,
  io,
  parse,
  underconstrained,
  singular,
  config,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what_arg)
      : std::runtime_error(what_arg), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& msg) {
  throw Error(code, msg);
}

}  // namespace steinscan
