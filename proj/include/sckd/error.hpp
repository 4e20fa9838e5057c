#pragma once

#include <stdexcept>
#include <string>

namespace sckd {

/// Raised when a caller breaks an operation's precondition (shape, range, ...).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Invalid configuration or missing inputs detected before any work starts.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed frame / manifest / checkpoint file.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
  explicit ParseError(const std::string& what) : std::runtime_error(what), offset_(0) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

#define SCKD_EXPECT(cond, msg)                          \
  do {                                                  \
    if (!(cond)) throw ::sckd::ContractViolation(msg);  \
  } while (0)

}  // namespace sckd
