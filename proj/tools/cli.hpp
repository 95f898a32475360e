#pragma once

#include <iosfwd>

namespace veta::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitRuntime = 3;

/// Parses argv and runs one subcommand (gen-scene, train, render, eval,
/// mi-report). Log lines and summaries go to `out`, diagnostics to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace veta::cli
