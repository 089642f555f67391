#pragma once

#include <stdexcept>
#include <string>

namespace cetp {

// Bad inputs (files, config, CLI arguments). The CLI maps this to exit code 2;
// anything else escaping to main is an internal error (exit code 1).
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace cetp
