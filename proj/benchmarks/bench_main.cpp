#include <benchmark/benchmark.h>

// The distro's libbenchmark_main.a is LTO bytecode from another compiler release.
BENCHMARK_MAIN();
