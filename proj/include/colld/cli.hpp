// Copyright (c) 2026 The CoLLD Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace colld {

/// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1; // numeric and I/O failures
inline constexpr int kExitConfig = 2;  // bad flags, config or schema errors

/// Entry point of the `colld` tool. `args` excludes the program name. Query
/// subcommands print one JSON document to `out`; diagnostics go to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace colld
