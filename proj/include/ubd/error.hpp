#pragma once

#include <stdexcept>
#include <string>

namespace ubd {

/// Base class for every error raised by the toolkit. `kind` lets the CLI map
/// failures onto exit codes (input problems vs. numerical failures).
class Error : public std::runtime_error {
 public:
  enum class Kind { input, computation };

  Error(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

class InputError : public Error {
 public:
  explicit InputError(const std::string& what) : Error(Kind::input, what) {}
};

class ComputationError : public Error {
 public:
  explicit ComputationError(const std::string& what) : Error(Kind::computation, what) {}
};

}  // namespace ubd
