#pragma once

// Energy kernels over a FoldSpace. The serial versions are the reference; the
// OpenMP versions must agree with them bit for bit (integer arithmetic, and
// every reduction is merged in a fixed order).

#include <cstdint>
#include <span>
#include <vector>

#include "pzero/lattice.hpp"

namespace pzero::kernels {

/// out[s] = HP energy of the H-mask on state s.
void energy_spectrum_serial(const lattice::FoldSpace& space, std::uint32_t hmask, std::span<int> out);
void energy_spectrum_parallel(const lattice::FoldSpace& space, std::uint32_t hmask, std::span<int> out);

lattice::FoldSummary fold_summary_serial(const lattice::FoldSpace& space, std::uint32_t hmask);
lattice::FoldSummary fold_summary_parallel(const lattice::FoldSpace& space, std::uint32_t hmask);

/// Folds many sequences; parallel over sequences.
std::vector<lattice::FoldSummary> fold_batch_serial(const lattice::FoldSpace& space,
                                                    std::span<const std::uint32_t> masks);
std::vector<lattice::FoldSummary> fold_batch_parallel(const lattice::FoldSpace& space,
                                                      std::span<const std::uint32_t> masks);

int max_threads() noexcept;

namespace detail {
lattice::FoldSummary summarize(std::span<const int> spectrum);
}

}  // namespace pzero::kernels
