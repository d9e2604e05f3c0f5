#pragma once

#include <iosfwd>

namespace hcal::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kNumerical = 3 };

// Entry point of the `hcal` tool: synth | train | eval | metrics | gradcheck.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace hcal::cli
