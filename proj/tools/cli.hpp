#pragma once

#include <iosfwd>

namespace cavflow {

enum ExitCode { kOk = 0, kUsage = 1, kConfig = 2, kRuntime = 3 };

/// Entry point of the `cavflow` tool. Writes normal output to `out` and diagnostics to `err`.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cavflow
