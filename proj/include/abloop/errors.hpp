#pragma once

#include <stdexcept>
#include <string>

namespace abloop {

/// Invalid run configuration. `key()` names the offending setting.
class ConfigError : public std::invalid_argument {
  public:
    ConfigError(std::string key, const std::string& what)
        : std::invalid_argument(what), key_(std::move(key)) {}
    const std::string& key() const noexcept { return key_; }

  private:
    std::string key_;
};

/// Caller broke a documented precondition (length mismatch, bad argument).
class ContractError : public std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// A contrast or aggregate that is undefined for the given data.
class EstimationError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Malformed input file; message carries the row and cell.
class SchemaError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace abloop
