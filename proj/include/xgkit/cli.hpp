#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace xgkit {

// Entry point of the xgkit executable. Returns the process exit code:
// 0 success, 1 usage or configuration error, 2 data error, 3 invariant
// violation. Errors go to `err` as "xgkit: <category>: <message>".
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

const std::vector<std::string>& cli_subcommands();

} // namespace xgkit
