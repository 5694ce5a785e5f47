// Copyright 2026 The moeplan Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

// The distro's benchmark_main archive carries LTO bytecode from another
// compiler release, so the entry point lives here.
BENCHMARK_MAIN();
