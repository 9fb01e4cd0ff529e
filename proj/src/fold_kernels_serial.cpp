#include "pzero/fold_kernels.hpp"

#include <algorithm>
#include <cassert>

namespace pzero::kernels {

namespace {

int state_energy(const lattice::Contact* first, const lattice::Contact* last, std::uint32_t hmask)
{
    int e = 0;
    for (auto* c = first; c != last; ++c) {
        e -= static_cast<int>((hmask >> c->i) & (hmask >> c->j) & 1u);
    }
    return e;
}

}  // namespace

void energy_spectrum_serial(const lattice::FoldSpace& space, std::uint32_t hmask, std::span<int> out)
{
    assert(out.size() == space.state_count());
    const auto& contacts = space.flat_contacts();
    const auto& off = space.offsets();
    for (std::size_t s = 0; s < out.size(); ++s) {
        out[s] = state_energy(contacts.data() + off[s], contacts.data() + off[s + 1], hmask);
    }
}

lattice::FoldSummary detail::summarize(std::span<const int> spectrum)
{
    lattice::FoldSummary out;
    out.min_energy = spectrum.empty() ? 0 : *std::min_element(spectrum.begin(), spectrum.end());
    out.histogram.assign(static_cast<std::size_t>(-out.min_energy) + 1, 0);
    for (std::size_t s = 0; s < spectrum.size(); ++s) {
        ++out.histogram[static_cast<std::size_t>(-spectrum[s])];
        if (spectrum[s] == out.min_energy) {
            out.ground_states.push_back(static_cast<std::uint32_t>(s));
        }
    }
    return out;
}

lattice::FoldSummary fold_summary_serial(const lattice::FoldSpace& space, std::uint32_t hmask)
{
    std::vector<int> spectrum(space.state_count());
    energy_spectrum_serial(space, hmask, spectrum);
    return detail::summarize(spectrum);
}

std::vector<lattice::FoldSummary> fold_batch_serial(const lattice::FoldSpace& space,
                                                    std::span<const std::uint32_t> masks)
{
    std::vector<lattice::FoldSummary> out;
    out.reserve(masks.size());
    for (auto m : masks) {
        out.push_back(fold_summary_serial(space, m));
    }
    return out;
}

}  // namespace pzero::kernels
