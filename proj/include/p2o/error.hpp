#pragma once

#include <stdexcept>
#include <string>

namespace p2o {

enum class ErrorCode {
  config = 1,
  contract,
  numerical,
  data,
  parse,
  audit,
  io,
  external,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(ErrorCode::config, what) {}
};
struct ContractError : Error {
  explicit ContractError(const std::string& what) : Error(ErrorCode::contract, what) {}
};
struct NumericalError : Error {
  explicit NumericalError(const std::string& what) : Error(ErrorCode::numerical, what) {}
};
struct DataError : Error {
  explicit DataError(const std::string& what) : Error(ErrorCode::data, what) {}
};
struct ParseError : Error {
  explicit ParseError(const std::string& what) : Error(ErrorCode::parse, what) {}
};
struct AuditError : Error {
  explicit AuditError(const std::string& what) : Error(ErrorCode::audit, what) {}
};
struct IoError : Error {
  explicit IoError(const std::string& what) : Error(ErrorCode::io, what) {}
};
struct ExternalError : Error {
  explicit ExternalError(const std::string& what) : Error(ErrorCode::external, what) {}
};

}  // namespace p2o
