#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ctrw/dist.hpp"

namespace ctrw::cli {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int { exit_ok = 0, exit_domain = 2, exit_usage = 64, exit_numeric = 70 };

// Runs one command; `args` excludes the program name. Messages go to `out`
// and `err`; the return value is the process exit code.
int run(std::vector<std::string> args, std::ostream& out, std::ostream& err);

// "exp:R" | "lognormal:mu:sigma" | "empirical:path"
WaitingTimeModel parse_waiting_model(std::string_view text);
// "gauss:mu:sigma" | "halfgauss:mu:sigma" | "twopoint:a" | "empirical:path"
IncrementModel parse_increment_model(std::string_view text);
// A real number > 2, or "inf" for independent waiting times.
RepetitionDistribution parse_repetition(std::string_view text);
// Non-negative integer, also written in exponent form ("1e7").
std::uint64_t parse_count(std::string_view text, std::string_view what);

// key=value lines or a JSON object (a manifest's "config" member is used
// when present). Keys may be written with '-' or '_'.
std::vector<std::pair<std::string, std::string>> read_config_file(const std::filesystem::path& path,
                                                                  std::string* command = nullptr);

}  // namespace ctrw::cli
