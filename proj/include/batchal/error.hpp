#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace batchal {

enum class ErrorKind {
  Parse,
  Integrity,
  Config,
  State,
  BudgetExhausted,
  Capability,
  Validation,
  Shape,
  TrainingDiverged,
  Precondition,
  Io,
};

std::string_view to_string(ErrorKind kind) noexcept;

// All library failures surface as this one exception type; callers branch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

// Warnings go to stderr unless a sink is installed (tests silence them).
using WarningSink = void (*)(std::string_view);
void set_warning_sink(WarningSink sink) noexcept;
void warn(std::string_view message);

}  // namespace batchal
