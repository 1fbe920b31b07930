#pragma once

#include <stdexcept>
#include <string>

namespace resopt {

// Library-wide error with a coarse category so the C API can map it to a
// status code and the CLI to an exit code.
class Error : public std::runtime_error {
 public:
  enum class Kind { config, dimension, numeric, io, internal };

  Error(Kind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}

  Kind kind() const { return kind_; }

  static Error config(const std::string& msg) { return {Kind::config, msg}; }
  static Error dimension(const std::string& msg) { return {Kind::dimension, msg}; }
  static Error numeric(const std::string& msg) { return {Kind::numeric, msg}; }
  static Error io(const std::string& msg) { return {Kind::io, msg}; }
  static Error internal(const std::string& msg) { return {Kind::internal, msg}; }

 private:
  Kind kind_;
};

}  // namespace resopt
