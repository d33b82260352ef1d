#ifndef AP_CLI_HPP
#define AP_CLI_HPP

#include <string>
#include <vector>

namespace ap::cli {

// Command-line front end. `args` excludes the program name. Exit codes:
// 0 success (horseshoe certify: granted), 1 usage/config/runtime error,
// 2 certification declined, 3 certification inconclusive.
int run(const std::vector<std::string>& args);

}  // namespace ap::cli

#endif  // AP_CLI_HPP
