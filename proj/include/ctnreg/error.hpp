#ifndef CTNREG_ERROR_HPP
#define CTNREG_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace ctnreg {

enum class ErrorKind {
  kInvalidInput,
  kInvalidMode,
  kInvalidKind,
  kNumericalFailure,
  kDegenerateInput,
  kNotDescentDirection,
  kLineSearchFailure,
  kIo,
  kConfig,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library carries one of the kinds above so
/// callers (the sweep harness in particular) can record and continue.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidInput: return "invalid-input";
    case ErrorKind::kInvalidMode: return "invalid-mode";
    case ErrorKind::kInvalidKind: return "invalid-kind";
    case ErrorKind::kNumericalFailure: return "numerical-failure";
    case ErrorKind::kDegenerateInput: return "degenerate-input";
    case ErrorKind::kNotDescentDirection: return "not-a-descent-direction";
    case ErrorKind::kLineSearchFailure: return "linesearch-failure";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kConfig: return "config";
  }
  return "unknown";
}

}  // namespace ctnreg

#endif  // CTNREG_ERROR_HPP
