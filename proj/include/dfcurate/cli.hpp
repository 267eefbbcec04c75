#pragma once

// Command-line front end. Exit codes: 0 success, 1 validation or runtime
// failure, 2 bad usage.

#include <iosfwd>

namespace dfcurate {

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace dfcurate
