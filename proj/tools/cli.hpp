#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace lmmci {

// Exit codes: 0 success, 2 usage or data error, 3 numerical failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lmmci
