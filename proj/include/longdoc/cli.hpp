#pragma once

// Command-line front end: synth, featurize, train, eval, extend, stats, bench
// and aggregate. Results go to stdout, progress and diagnostics to stderr.

#include <iosfwd>
#include <string>
#include <vector>

namespace longdoc::cli {

// args[0] is the program name. Returns the process exit code; errors are
// reported as a single line on `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run(int argc, char** argv);

}  // namespace longdoc::cli
