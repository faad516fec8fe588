#pragma once

#include <stdexcept>
#include <string>

namespace metapde {

/// Raised when a caller breaks a documented precondition.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Raised when a computation produces a non-finite value. `node` is the
/// graph node where the problem was first seen, or -1 when not applicable.
class NumericalFailure : public std::runtime_error {
 public:
  explicit NumericalFailure(const std::string& what, long node = -1)
      : std::runtime_error(what), node_(node) {}
  long node() const noexcept { return node_; }

 private:
  long node_;
};

/// Raised for unreadable or inconsistent user input (configs, checkpoints).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool ok, const char* message) {
  if (!ok) throw ContractViolation(message);
}

}  // namespace metapde
