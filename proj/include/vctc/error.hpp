#pragma once

#include <stdexcept>
#include <string>

namespace vctc {

// Violated precondition of a library call (bad shape, empty input, ...).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Target sequence cannot be aligned to the given number of frames.
class InfeasibleError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Malformed file contents (checkpoint, dataset, LM, metrics, config).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Inconsistent user configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {
inline void require(bool cond, const std::string& what) {
  if (!cond) throw ContractError(what);
}
}  // namespace detail

}  // namespace vctc
