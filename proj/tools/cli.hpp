#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace otalign::cli {

// Runs the `otalign` command line. `args` excludes the program name. Returns
// the process exit code; failures print one "error: ..." line to `err`.
int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err);

}  // namespace otalign::cli
