#pragma once

#include <ostream>

namespace batchal {

// Entry point of the `batchal` executable. Exit codes: 0 success,
// 1 validation error (bad flags, malformed inputs), 2 runtime error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace batchal
