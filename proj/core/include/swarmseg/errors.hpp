#pragma once

#include <stdexcept>
#include <string>

namespace swarmseg {

// Bad shapes, bad flags, mismatched trained dimensions. CLI exit code 2.
class config_error : public std::runtime_error {
 public:
  explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

// Bad dataset contents, out-of-range labels, unreadable files. CLI exit code 3.
class data_error : public std::runtime_error {
 public:
  explicit data_error(const std::string& what) : std::runtime_error(what) {}
};

// Procedural generation could not satisfy its postconditions after bounded retries.
class generation_error : public data_error {
 public:
  explicit generation_error(const std::string& what) : data_error(what) {}
};

}  // namespace swarmseg
