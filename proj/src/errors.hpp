#pragma once

#include <stdexcept>
#include <string>

namespace pcsrod {

// Error taxonomy shared by the library, the C API and the CLI exit codes.
enum class ErrorCode : int {
  Ok = 0,
  Config = 10,       // malformed or inconsistent configuration
  Data = 20,         // malformed input data, bad values, out-of-range access
  Numerical = 30,    // factorization failure, divergence, ill-conditioning
  Instability = 40,  // simulation energy blow-up
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(ErrorCode::Config, what) {}
};
struct DataError : Error {
  explicit DataError(const std::string& what) : Error(ErrorCode::Data, what) {}
};
struct NumericalError : Error {
  explicit NumericalError(const std::string& what) : Error(ErrorCode::Numerical, what) {}
};
struct InstabilityError : Error {
  explicit InstabilityError(const std::string& what) : Error(ErrorCode::Instability, what) {}
};
// Non-finite or out-of-domain arguments to math kernels. Treated as a data
// problem at the CLI boundary since it always traces back to input values.
struct InvalidArgumentError : Error {
  explicit InvalidArgumentError(const std::string& what) : Error(ErrorCode::Data, what) {}
};

}  // namespace pcsrod
