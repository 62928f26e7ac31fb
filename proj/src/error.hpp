#ifndef BISEL_ERROR_HPP
#define BISEL_ERROR_HPP

#include <cstdint>
#include <stdexcept>
#include <string>

namespace bisel {

enum class ErrorCode {
  InvalidInput,
  InvalidConfig,
  Io,
  Diverged,       // training produced non-finite or runaway parameters
  RatioOverflow,  // importance-ratio exponent too large
  ResourceLimit,
  Internal,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string msg, std::int64_t index = -1)
      : std::runtime_error(std::move(msg)), code_(code), index_(index) {}

  ErrorCode code() const { return code_; }
  // Step or sample index attached to the error, -1 if none.
  std::int64_t index() const { return index_; }

 private:
  ErrorCode code_;
  std::int64_t index_;
};

[[noreturn]] inline void throw_invalid(const std::string& msg) {
  throw Error(ErrorCode::InvalidInput, msg);
}

[[noreturn]] inline void throw_config(const std::string& msg) {
  throw Error(ErrorCode::InvalidConfig, msg);
}

}  // namespace bisel

#endif
