#pragma once

#include <iosfwd>

namespace shiftsched::cli {

/// Exit codes: 0 success, 1 usage error, 2 runtime error.
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace shiftsched::cli
