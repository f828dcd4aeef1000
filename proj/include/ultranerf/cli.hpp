#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace unerf::cli {

enum ExitCode : int { kOk = 0, kValidation = 1, kRuntime = 2 };

/// Entry point of the `ultranerf` tool.
int dispatch(int argc, char** argv);

/// Same, with arguments after the program name and explicit streams.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Parses a key=value config file into "--key=value" tokens. Blank lines and
/// lines starting with '#' are ignored. Throws ConfigError on malformed lines.
std::vector<std::string> config_tokens(const std::string& path);

}  // namespace unerf::cli
