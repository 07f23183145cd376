#pragma once

#include <stdexcept>
#include <string>

namespace lbfl {

// Operand shapes disagree (vector dimensions, batch rows vs labels).
class DimensionError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

// Invalid configuration or out-of-range parameter.
class ConfigError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

// Malformed file contents (wrong magic, inconsistent headers).
class FormatError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// The robust aggregator could not produce a model this round
// (e.g. every submitted model has a non-finite server loss).
class DefenseError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace lbfl
