#pragma once

#include <iosfwd>

namespace augseg::cli {

/// Runs one `augseg` invocation. Returns 0 on success, 1 on input, format or
/// usage errors (one-line diagnostic on `err`), 2 on internal failures.
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int dispatch(int argc, const char* const* argv);

/// Quick invariant suite behind `augseg selftest`; one line per check.
bool run_selftest(std::ostream& out);

}  // namespace augseg::cli
