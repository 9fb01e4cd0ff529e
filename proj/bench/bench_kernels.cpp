// Serial reference vs OpenMP kernels. Args: chain length (and batch size for
// the batch folds).

#include <benchmark/benchmark.h>

#include <vector>

#include "pzero/dataset.hpp"
#include "pzero/fold_kernels.hpp"
#include "pzero/rl.hpp"

using namespace pzero;

namespace {

std::uint32_t some_mask(int length) { return 0x5a5a5a5au & ((1u << length) - 1); }

std::vector<std::uint32_t> batch_masks(int length, std::size_t n)
{
    std::vector<std::uint32_t> m(n);
    std::uint32_t x = 12345;
    for (auto& v : m) {
        x = x * 1664525u + 1013904223u;
        v = (x >> 7) & ((1u << length) - 1);
    }
    return m;
}

template <bool Parallel>
void spectrum(benchmark::State& state)
{
    const int L = static_cast<int>(state.range(0));
    const auto& space = lattice::FoldSpace::get(L);
    std::vector<int> out(space.state_count());
    for (auto _ : state) {
        if constexpr (Parallel) {
            kernels::energy_spectrum_parallel(space, some_mask(L), out);
        } else {
            kernels::energy_spectrum_serial(space, some_mask(L), out);
        }
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(space.state_count()));
}

template <bool Parallel>
void summary(benchmark::State& state)
{
    const int L = static_cast<int>(state.range(0));
    const auto& space = lattice::FoldSpace::get(L);
    for (auto _ : state) {
        auto s = Parallel ? kernels::fold_summary_parallel(space, some_mask(L))
                          : kernels::fold_summary_serial(space, some_mask(L));
        benchmark::DoNotOptimize(s);
    }
}

template <bool Parallel>
void batch(benchmark::State& state)
{
    const int L = static_cast<int>(state.range(0));
    const auto& space = lattice::FoldSpace::get(L);
    const auto masks = batch_masks(L, static_cast<std::size_t>(state.range(1)));
    for (auto _ : state) {
        auto s = Parallel ? kernels::fold_batch_parallel(space, masks) : kernels::fold_batch_serial(space, masks);
        benchmark::DoNotOptimize(s.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(1));
}

// one rollout-and-score pass over the training targets
template <rl::Execution Exec>
void collect(benchmark::State& state)
{
    const int L = static_cast<int>(state.range(0));
    static const auto ds = build_dataset({L, 10, 2, 1, 0});
    const auto targets = ds.select(Split::train);
    policy::Dimensions d;
    d.features = policy::feature_count(static_cast<std::size_t>(L));
    const auto params = policy::PolicyParams::random(Alphabet(), d, 7, 0.3);
    rl::TrainConfig cfg;
    int it = 0;
    for (auto _ : state) {
        auto g = rl::collect_groups(params, targets, cfg, ++it, Exec, cfg.sampler);
        benchmark::DoNotOptimize(g.data());
    }
}

}  // namespace

BENCHMARK(spectrum<false>)->Name("spectrum/serial")->Arg(12)->Arg(14)->Arg(16)->Unit(benchmark::kMicrosecond);
BENCHMARK(spectrum<true>)->Name("spectrum/omp")->Arg(12)->Arg(14)->Arg(16)->Unit(benchmark::kMicrosecond);
BENCHMARK(summary<false>)->Name("summary/serial")->Arg(14)->Arg(16)->Unit(benchmark::kMicrosecond);
BENCHMARK(summary<true>)->Name("summary/omp")->Arg(14)->Arg(16)->Unit(benchmark::kMicrosecond);
BENCHMARK(batch<false>)->Name("batch/serial")->Args({12, 256})->Args({14, 64})->Unit(benchmark::kMillisecond);
BENCHMARK(batch<true>)->Name("batch/omp")->Args({12, 256})->Args({14, 64})->Unit(benchmark::kMillisecond);
BENCHMARK(collect<rl::Execution::serial>)->Name("collect_groups/serial")->Arg(12)->Unit(benchmark::kMillisecond);
BENCHMARK(collect<rl::Execution::parallel>)->Name("collect_groups/omp")->Arg(12)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
