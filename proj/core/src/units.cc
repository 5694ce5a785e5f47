// Copyright 2026 The moeplan Authors
// SPDX-License-Identifier: Apache-2.0

#include "moeplan/units.h"

#include <fmt/format.h>

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <utility>

namespace moeplan {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

// Splits "12.5 GiB" into a finite non-negative number and its suffix.
std::optional<std::pair<double, std::string_view>> split_number(std::string_view text) {
  text = trim(text);
  if (text.empty()) return std::nullopt;
  double value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr == text.data()) return std::nullopt;
  if (!std::isfinite(value)) return std::nullopt;
  std::string_view suffix = trim(std::string_view(ptr, text.data() + text.size() - ptr));
  return std::make_pair(value, suffix);
}

template <std::size_t N>
std::optional<double> scaled(std::string_view text,
                             const std::array<std::pair<std::string_view, double>, N>& table) {
  auto parts = split_number(text);
  if (!parts) return std::nullopt;
  auto [value, suffix] = *parts;
  for (const auto& [name, factor] : table) {
    if (suffix == name) return value * factor;
  }
  return std::nullopt;
}

constexpr std::array<std::pair<std::string_view, double>, 12> kByteSuffixes{{
    {"", 1.0},
    {"B", 1.0},
    {"KiB", 1024.0},
    {"MiB", 1024.0 * 1024},
    {"GiB", 1024.0 * 1024 * 1024},
    {"TiB", 1024.0 * 1024 * 1024 * 1024},
    {"KB", 1e3},
    {"MB", 1e6},
    {"GB", 1e9},
    {"TB", 1e12},
    {"kB", 1e3},
    {"PiB", 1024.0 * 1024 * 1024 * 1024 * 1024},
}};

}  // namespace

Nanos from_seconds(double seconds) { return Nanos(std::llround(seconds * 1e9)); }

std::optional<double> parse_byte_quantity(std::string_view text) {
  return scaled(text, kByteSuffixes);
}

std::optional<double> parse_rate_quantity(std::string_view text) {
  text = trim(text);
  if (text.size() >= 2 && text.substr(text.size() - 2) == "/s") text.remove_suffix(2);
  return parse_byte_quantity(text);
}

std::optional<double> parse_time_quantity(std::string_view text) {
  static constexpr std::array<std::pair<std::string_view, double>, 5> kTable{
      {{"", 1.0}, {"s", 1.0}, {"ms", 1e-3}, {"us", 1e-6}, {"ns", 1e-9}}};
  return scaled(text, kTable);
}

std::optional<double> parse_flops_quantity(std::string_view text) {
  static constexpr std::array<std::pair<std::string_view, double>, 4> kTable{
      {{"", 1.0}, {"GFLOPS", 1e9}, {"TFLOPS", 1e12}, {"PFLOPS", 1e15}}};
  return scaled(text, kTable);
}

std::string format_bytes(Bytes bytes) {
  const double b = static_cast<double>(bytes);
  if (std::abs(b) >= static_cast<double>(kGiB)) return fmt::format("{:.2f} GiB", b / kGiB);
  if (std::abs(b) >= static_cast<double>(kMiB)) return fmt::format("{:.2f} MiB", b / kMiB);
  if (std::abs(b) >= static_cast<double>(kKiB)) return fmt::format("{:.2f} KiB", b / kKiB);
  return fmt::format("{} B", bytes);
}

}  // namespace moeplan
