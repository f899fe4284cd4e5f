#pragma once

#include <stdexcept>
#include <string>

namespace segbench {

/// Raised for every contract violation reported to callers (bad input,
/// missing files, mismatched geometry). The message is user-facing.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace segbench
