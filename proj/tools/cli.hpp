#pragma once

#include <iosfwd>

namespace modecon {

/// Exit codes: 0 success, 1 usage error, 2 invalid configuration or
/// unsupported input, 3 missing or stale artifact, 4 numerical failure.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace modecon
