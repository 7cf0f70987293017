#include "batchal/error.hpp"

#include <atomic>
#include <iostream>

namespace batchal {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Parse: return "parse error";
    case ErrorKind::Integrity: return "integrity error";
    case ErrorKind::Config: return "configuration error";
    case ErrorKind::State: return "state error";
    case ErrorKind::BudgetExhausted: return "budget exhausted";
    case ErrorKind::Capability: return "capability error";
    case ErrorKind::Validation: return "validation error";
    case ErrorKind::Shape: return "shape error";
    case ErrorKind::TrainingDiverged: return "training diverged";
    case ErrorKind::Precondition: return "precondition violated";
    case ErrorKind::Io: return "i/o error";
  }
  return "error";
}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

namespace {

void stderr_sink(std::string_view message) { std::cerr << "warning: " << message << '\n'; }

std::atomic<WarningSink>& sink() noexcept {
  static std::atomic<WarningSink> s{&stderr_sink};
  return s;
}

}  // namespace

void set_warning_sink(WarningSink s) noexcept { sink().store(s ? s : &stderr_sink); }

void warn(std::string_view message) { sink().load()(message); }

}  // namespace batchal
