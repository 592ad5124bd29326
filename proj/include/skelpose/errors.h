#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace skelpose {

enum class ErrorKind {
    DegenerateInput,
    InsufficientData,
    LengthMismatch,
    ShapeMismatch,
    BindMismatch,
    GraphCycle,
    Validation,
    IO,
    Usage,
};

std::string_view to_string(ErrorKind kind);

// All library failures surface as this exception; `kind()` is what the CLI
// reports in its machine-readable error payload.
class Error : public std::runtime_error {
  public:
    Error(ErrorKind kind, const std::string &message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const { return kind_; }

  private:
    ErrorKind kind_;
};

} // namespace skelpose
