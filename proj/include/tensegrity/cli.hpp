#pragma once

#include <iosfwd>

namespace tensegrity {

// Exit codes: 0 success, 1 failed run or check, 2 usage.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace tensegrity
