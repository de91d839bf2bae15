#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace lipdse::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitInfeasible = 3;
inline constexpr int kExitNumerical = 4;

/// Runs one command line (program name excluded). Output files, including
/// run_manifest.json, are written only once the command has finished; a
/// failing command leaves the output directory untouched.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run_main(int argc, char** argv);

}  // namespace lipdse::cli
