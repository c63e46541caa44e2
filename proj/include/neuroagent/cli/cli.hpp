#pragma once

// Command-line front end: `generate`, `run` and `eval`.
//
// Exit codes: 0 success, 1 hard failure (nothing could be done), 2 partial
// (some runs or rows failed).

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace neuroagent::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitPartial = 2;

// Flat `key = value` lines; blank lines and '#' comments are skipped, later
// keys win. Throws backend::ConfigError on a line without '='.
std::map<std::string, std::string> parse_config(const std::string& text);

// args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace neuroagent::cli
