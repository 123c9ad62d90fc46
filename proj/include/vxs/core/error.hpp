#pragma once

#include <stdexcept>
#include <string>

namespace vxs {

// Error categories map 1:1 onto CLI exit codes; keep them coarse.
enum class ErrorCategory {
  config = 2,
  io = 3,
  format = 4,
  invalid_input = 5,
  numeric = 6,
};

inline const char* to_string(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::config: return "config";
    case ErrorCategory::io: return "io";
    case ErrorCategory::format: return "format";
    case ErrorCategory::invalid_input: return "invalid-input";
    case ErrorCategory::numeric: return "numeric";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory cat, const std::string& msg)
      : std::runtime_error(msg), cat_(cat) {}
  ErrorCategory category() const { return cat_; }

 private:
  ErrorCategory cat_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& m) : Error(ErrorCategory::config, m) {}
};
struct IoError : Error {
  explicit IoError(const std::string& m) : Error(ErrorCategory::io, m) {}
};
struct FormatError : Error {
  explicit FormatError(const std::string& m) : Error(ErrorCategory::format, m) {}
};
struct InvalidInput : Error {
  explicit InvalidInput(const std::string& m) : Error(ErrorCategory::invalid_input, m) {}
};
struct NumericError : Error {
  explicit NumericError(const std::string& m) : Error(ErrorCategory::numeric, m) {}
};

#define VXS_CHECK(cond, ErrType, msg)      \
  do {                                     \
    if (!(cond)) throw ErrType(msg);       \
  } while (0)

}  // namespace vxs
