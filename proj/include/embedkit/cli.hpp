#pragma once

#include <string>
#include <vector>

namespace embedkit {

// Entry point behind the command-line binary: dispatches train, embed, eval,
// soup, quantize and mixtures. Returns 0 on success, 1 on configuration
// errors, 2 on runtime failures.
int cli_run(const std::vector<std::string>& args);

}  // namespace embedkit
