#pragma once

#include <iosfwd>

namespace crowdmetric {

// Entry point for the crowdmetric command-line tool. Returns the exit code.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace crowdmetric
