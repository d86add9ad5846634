#pragma once

#include <stdexcept>
#include <string>

namespace lrgnn {

// A file or record that does not follow the documented schema. `where`
// carries a line number and/or field path.
class SchemaError : public std::runtime_error {
public:
  SchemaError(const std::string &where, const std::string &what)
      : std::runtime_error(where + ": " + what), where_(where) {}
  const std::string &where() const { return where_; }

private:
  std::string where_;
};

// Model/train/search configuration that violates one of its rules.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Numeric failure during optimisation (non-finite loss and the like).
class TrainingError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace lrgnn
