// Copyright 2026 The moeplan Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace moeplan {

// Byte counts are exact integers throughout; time inside solvers and the
// simulator is integer nanoseconds so that comparisons never drift.
using Bytes = std::int64_t;
using Nanos = std::chrono::nanoseconds;

inline constexpr Bytes kKiB = 1024;
inline constexpr Bytes kMiB = 1024 * kKiB;
inline constexpr Bytes kGiB = 1024 * kMiB;

inline double to_seconds(Nanos t) { return static_cast<double>(t.count()) * 1e-9; }
Nanos from_seconds(double seconds);

// Parses "45GiB", "1.5 MiB", "45GB", "1024" into bytes. Binary suffixes are
// powers of 1024, decimal ones powers of 1000. Returns nullopt on bad input.
std::optional<double> parse_byte_quantity(std::string_view text);
// Same as parse_byte_quantity but also accepts a trailing "/s".
std::optional<double> parse_rate_quantity(std::string_view text);
// Accepts plain seconds or "ns", "us", "ms", "s" suffixes.
std::optional<double> parse_time_quantity(std::string_view text);
// Accepts plain FLOP/s or "TFLOPS" / "PFLOPS" / "GFLOPS" suffixes.
std::optional<double> parse_flops_quantity(std::string_view text);

std::string format_bytes(Bytes bytes);

}  // namespace moeplan
