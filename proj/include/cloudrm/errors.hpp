#pragma once

#include <stdexcept>
#include <string>

namespace cloudrm {

/// Malformed or unsupported file contents.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Failure to open, read or write a path.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cloudrm
