#pragma once

#include <iosfwd>

namespace jmqr::cli {

enum ExitCode { kSuccess = 0, kUsageError = 1, kNumericFailure = 2 };

/// Runs one command (generate, train, evaluate, predict, report) and returns its exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace jmqr::cli
