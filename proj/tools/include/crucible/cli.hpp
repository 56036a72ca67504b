#pragma once

#include <iosfwd>

namespace crucible::cli {

/// Entry point shared by the executable and the tests. Returns the process
/// exit code: 0 SECURE, 3 EXFILTRATED, 1 usage error, 2 runtime failure.
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace crucible::cli
