#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace defembed {

/// Entry point for the `defembed` tool: ingest, train, evaluate, query,
/// serve, gradcheck. Returns the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
            const char* const* envp = nullptr);

}  // namespace defembed
