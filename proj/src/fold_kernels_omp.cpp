#include "pzero/fold_kernels.hpp"

#include <cassert>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace pzero::kernels {

int max_threads() noexcept
{
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

void energy_spectrum_parallel(const lattice::FoldSpace& space, std::uint32_t hmask, std::span<int> out)
{
    assert(out.size() == space.state_count());
    const auto* contacts = space.flat_contacts().data();
    const auto* off = space.offsets().data();
    const auto n = static_cast<std::int64_t>(out.size());
    int* dst = out.data();
#pragma omp parallel for schedule(static)
    for (std::int64_t s = 0; s < n; ++s) {
        int e = 0;
        for (auto k = off[s]; k < off[s + 1]; ++k) {
            e -= static_cast<int>((hmask >> contacts[k].i) & (hmask >> contacts[k].j) & 1u);
        }
        dst[s] = e;
    }
}

lattice::FoldSummary fold_summary_parallel(const lattice::FoldSpace& space, std::uint32_t hmask)
{
    std::vector<int> spectrum(space.state_count());
    energy_spectrum_parallel(space, hmask, spectrum);
    return detail::summarize(spectrum);
}

std::vector<lattice::FoldSummary> fold_batch_parallel(const lattice::FoldSpace& space,
                                                      std::span<const std::uint32_t> masks)
{
    std::vector<lattice::FoldSummary> out(masks.size());
    const auto n = static_cast<std::int64_t>(masks.size());
#pragma omp parallel
    {
        std::vector<int> spectrum(space.state_count());
#pragma omp for schedule(dynamic, 4)
        for (std::int64_t i = 0; i < n; ++i) {
            energy_spectrum_serial(space, masks[static_cast<std::size_t>(i)], spectrum);
            out[static_cast<std::size_t>(i)] = detail::summarize(spectrum);
        }
    }
    return out;
}

}  // namespace pzero::kernels
