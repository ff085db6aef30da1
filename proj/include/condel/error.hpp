#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace condel {

enum class ErrorKind {
  invalid,       // malformed or out-of-contract input
  not_found,     // unknown id, missing rule, missing file
  conflict,      // duplicate id or rule, finished session
  precondition,  // operation not allowed in the current state
};

// All library failures are reported with this exception. `field` names the
// offending input field when there is one (used in HTTP error bodies).
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message, std::string field = {})
      : std::runtime_error(message), kind_(kind), field_(std::move(field)) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& field() const noexcept { return field_; }

 private:
  ErrorKind kind_;
  std::string field_;
};

}  // namespace condel
