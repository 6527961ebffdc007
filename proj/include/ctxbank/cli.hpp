#pragma once

#include <string>
#include <vector>

namespace ctxbank {

// Entry point behind the ctxbank binary; `args` excludes argv[0]. Errors
// print to stderr; the return value is the process exit code (0 only when
// the command ran without a hard failure).
int run_cli(const std::vector<std::string>& args);

}  // namespace ctxbank
