#pragma once

#include <string>
#include <vector>

namespace pse {

// Entry point behind the `pse` binary; args[0] is the program name.
// Exit codes: 0 success, 1 partial (e.g. missing files were excluded),
// 2 invalid invocation.
int run_cli(const std::vector<std::string>& args);

}  // namespace pse
