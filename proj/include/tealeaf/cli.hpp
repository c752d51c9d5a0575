#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace tealeaf {

/// Runs one subcommand: ingest | train | adv-train | sweep | evaluate |
/// explain | serve | plot. `args` excludes the program name. Returns 0 on
/// success, 1 for user errors and 2 for internal ones, after printing a
/// one-line diagnostic to `err`.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int dispatch(int argc, const char* const* argv);

}  // namespace tealeaf
