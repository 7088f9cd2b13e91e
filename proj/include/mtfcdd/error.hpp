#pragma once

#include <stdexcept>
#include <string>

namespace mtfcdd {

// Process exit codes shared by every CLI subcommand.
enum class ExitCode : int { kOk = 0, kConfig = 2, kData = 3, kNumeric = 4 };

class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const char* kind, const std::string& what)
      : std::runtime_error(what), code_(code), kind_(kind) {}
  ExitCode code() const noexcept { return code_; }
  const char* kind() const noexcept { return kind_; }

 private:
  ExitCode code_;
  const char* kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ExitCode::kConfig, "config_error", what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ExitCode::kData, "data_error", what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ExitCode::kNumeric, "numeric_error", what) {}
};

// A metric that is undefined for the given input, e.g. AUROC with one class.
class MetricError : public Error {
 public:
  explicit MetricError(const std::string& what) : Error(ExitCode::kData, "undefined_metric", what) {}
};

// Caller broke a documented precondition (negative heatmap, non-binary label).
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& what) : Error(ExitCode::kConfig, "contract_violation", what) {}
};

}  // namespace mtfcdd
