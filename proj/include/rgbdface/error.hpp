#pragma once

#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>

namespace rgbdface {

// Violated caller contract (bad argument ranges, invalid configuration).
class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Tensor shape disagreement between operands or with a model profile.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Dataset manifest / image decoding failure.
class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Gallery/probe protocol cannot be built from the given dataset.
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Checkpoint read/write or compatibility failure.
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

template <typename... Args>
std::string concat(Args&&... args) {
  std::ostringstream oss;
  (oss << ... << std::forward<Args>(args));
  return oss.str();
}

}  // namespace detail

template <typename E, typename... Args>
[[noreturn]] void raise(Args&&... args) {
  throw E(detail::concat(std::forward<Args>(args)...));
}

template <typename E, typename... Args>
void require(bool cond, Args&&... args) {
  if (!cond) raise<E>(std::forward<Args>(args)...);
}

}  // namespace rgbdface
