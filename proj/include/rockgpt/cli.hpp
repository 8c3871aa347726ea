#pragma once

// command-line dispatch. args exclude the program name, e.g.
// {"metrics", "--volume", "v.rvox", "--out", "reports"}.
// exit status: 0 success, 1 usage error (help prints and returns 0),
// 2 runtime failure. flag values override config-file values, and the
// effective configuration is echoed to the output directory.

#include <string>
#include <vector>

namespace rockgpt {

int cli_main(const std::vector<std::string>& args);

}  // namespace rockgpt
