// Serial reference vs OpenMP kernels. Each OpenMP run is checked against the
// serial output before timing.

#include <benchmark/benchmark.h>

#include <cstring>
#include <vector>

#include "aligntf/kernels.hpp"
#include "aligntf/rng.hpp"

using namespace aligntf;
using namespace aligntf::kernels;

namespace {

std::vector<float> random_values(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<float> v(n);
    for (auto& x : v) x = static_cast<float>(rng.normal());
    return v;
}

using GemmFn = void (*)(std::size_t, std::size_t, std::size_t, const float*, const float*, float*, bool);

void run_gemm(benchmark::State& state, GemmFn fn) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto a = random_values(n * n, 1), b = random_values(n * n, 2);
    std::vector<float> c(n * n), ref(n * n);
    serial::gemm_nn<float>(n, n, n, a.data(), b.data(), ref.data(), false);
    fn(n, n, n, a.data(), b.data(), c.data(), false);
    if (std::memcmp(c.data(), ref.data(), c.size() * sizeof(float)) != 0) {
        state.SkipWithError("output differs from the serial reference");
        return;
    }
    for (auto _ : state) {
        fn(n, n, n, a.data(), b.data(), c.data(), false);
        benchmark::DoNotOptimize(c.data());
        benchmark::ClobberMemory();
    }
    state.counters["flops"] =
        benchmark::Counter(2.0 * static_cast<double>(n * n * n), benchmark::Counter::kIsIterationInvariantRate);
    state.counters["threads"] = max_threads();
}

using SoftmaxFn = void (*)(std::size_t, std::size_t, const float*, float*);

void run_softmax(benchmark::State& state, SoftmaxFn fn) {
    const auto rows = static_cast<std::size_t>(state.range(0)), cols = static_cast<std::size_t>(state.range(1));
    const auto x = random_values(rows * cols, 3);
    std::vector<float> y(rows * cols), ref(rows * cols);
    serial::softmax_rows<float>(rows, cols, x.data(), ref.data());
    fn(rows, cols, x.data(), y.data());
    if (std::memcmp(y.data(), ref.data(), y.size() * sizeof(float)) != 0) {
        state.SkipWithError("output differs from the serial reference");
        return;
    }
    for (auto _ : state) {
        fn(rows, cols, x.data(), y.data());
        benchmark::DoNotOptimize(y.data());
        benchmark::ClobberMemory();
    }
    state.counters["threads"] = max_threads();
}

void BM_GemmSerial(benchmark::State& s) { run_gemm(s, serial::gemm_nn<float>); }
void BM_GemmOmp(benchmark::State& s) { run_gemm(s, omp::gemm_nn<float>); }
void BM_SoftmaxSerial(benchmark::State& s) { run_softmax(s, serial::softmax_rows<float>); }
void BM_SoftmaxOmp(benchmark::State& s) { run_softmax(s, omp::softmax_rows<float>); }

}  // namespace

BENCHMARK(BM_GemmSerial)->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_GemmOmp)->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_SoftmaxSerial)->Args({256, 64})->Args({1024, 96});
BENCHMARK(BM_SoftmaxOmp)->Args({256, 64})->Args({1024, 96});

BENCHMARK_MAIN();
