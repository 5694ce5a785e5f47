// Copyright 2026 The moeplan Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>

namespace moeplan::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitNoSolution = 1;
inline constexpr int kExitInvalidInput = 2;

// Entry point of the `moeplan` tool. Output that is not written to a file
// goes to `out`; diagnostics go to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace moeplan::cli
