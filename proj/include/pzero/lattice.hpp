#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "pzero/sequence.hpp"

namespace pzero::lattice {

inline constexpr int max_length = 16;

struct Point {
    int x = 0;
    int y = 0;
    auto operator<=>(const Point&) const = default;
};

/// Topological contact: lattice-adjacent residues i < j with j > i + 1.
struct Contact {
    std::uint8_t i = 0;
    std::uint8_t j = 0;
    auto operator<=>(const Contact&) const = default;
};

using Walk = std::vector<Point>;

bool is_self_avoiding_walk(std::span<const Point> walk);

/// Applies one of the 8 square-lattice symmetries (0 = identity) and
/// translates so the walk starts at the origin.
Walk transform(std::span<const Point> walk, int symmetry);

/// Lexicographically smallest image under the 8 lattice symmetries.
Walk canonical_directed(std::span<const Point> walk);
/// Lexicographically smallest image under the 8 lattice symmetries and
/// chain reversal.
Walk canonical_shape(std::span<const Point> walk);

std::vector<Contact> contacts_of(std::span<const Point> walk);

class Conformation {
public:
    Conformation() = default;
    /// Throws an input error unless `coords` is a self-avoiding walk.
    explicit Conformation(Walk coords);

    const Walk& coords() const noexcept { return coords_; }
    std::size_t size() const noexcept { return coords_.size(); }
    bool is_canonical() const noexcept { return canonical_; }
    const std::vector<Contact>& contacts() const noexcept { return contacts_; }

    bool operator==(const Conformation& o) const { return coords_ == o.coords_; }

private:
    Walk coords_;
    std::vector<Contact> contacts_;
    bool canonical_ = false;
};

/// One canonical representative per class of walks of `length` residues,
/// classes taken under the lattice symmetries and chain reversal.
/// Capacity error above max_length.
std::vector<Conformation> enumerate_conformations(int length);

/// HP energy: minus the number of contacts joining two H residues.
int energy(const Sequence& y, const Conformation& c);

/// Ground-state summary of one sequence over a FoldSpace.
struct FoldSummary {
    int min_energy = 0;
    std::vector<std::uint32_t> ground_states;
    /// histogram[k] = number of states with energy -k
    std::vector<std::uint64_t> histogram;
};

/// Folding state space for one chain length: every walk up to lattice
/// symmetry, with a fixed residue numbering. Chain reversal is *not* quotiented
/// out here because a heteropolymer read backwards is a different state.
class FoldSpace {
public:
    static const FoldSpace& get(int length);  // built once per length, shared

    explicit FoldSpace(int length);

    int length() const noexcept { return length_; }
    std::size_t state_count() const noexcept { return offsets_.size() - 1; }
    std::size_t shape_count() const noexcept { return shape_count_; }

    Walk walk(std::size_t state) const;
    std::span<const Contact> contacts(std::size_t state) const
    {
        return {contacts_.data() + offsets_[state], contacts_.data() + offsets_[state + 1]};
    }
    std::size_t shape_of(std::size_t state) const { return shape_of_[state]; }
    std::optional<std::size_t> straight_state() const noexcept { return straight_; }

    /// State index for an arbitrary walk of the right length (any symmetry image).
    std::optional<std::size_t> find(std::span<const Point> walk) const;

    /// Memoized fold of an H-mask; thread-safe, references stay valid.
    const FoldSummary& fold(std::uint32_t hmask) const;

    // flat CSR storage, read by the energy kernels
    const std::vector<Contact>& flat_contacts() const noexcept { return contacts_; }
    const std::vector<std::uint32_t>& offsets() const noexcept { return offsets_; }

private:
    int length_;
    std::size_t shape_count_ = 0;
    std::vector<std::uint32_t> codes_;  // sorted step codes, 2 bits per step
    std::vector<Contact> contacts_;
    std::vector<std::uint32_t> offsets_;
    std::vector<std::uint32_t> shape_of_;
    std::optional<std::size_t> straight_;

    mutable std::shared_mutex cache_mutex_;
    mutable std::unordered_map<std::uint32_t, std::unique_ptr<FoldSummary>> cache_;
};


struct BackboneTarget {
    std::string id;
    Conformation conformation;
    Sequence wild_type;
    std::size_t state = 0;  // index into FoldSpace::get(length)

    std::size_t length() const noexcept { return conformation.size(); }
    const std::vector<Contact>& contact_map() const noexcept { return conformation.contacts(); }
};

/// Builds a target from any symmetry image of a walk; checks lengths.
BackboneTarget make_target(std::string id, const Walk& walk, Sequence wild_type);

/// Best fraction of target contacts reproduced by a ground state of `y`.
/// With an empty contact map: 1 iff the straight chain is a ground state.
double structure_match(const BackboneTarget& target, const Sequence& y);

/// True when every conformation is a ground state of y (no H-H contact possible
/// or no H at all); structure_match is then trivially optimistic.
bool is_degenerate(const Sequence& y);

/// Every sequence whose unique ground state is the target's conformation, in
/// H-mask order. Includes the wild type.
std::vector<Sequence> designing_sequences(const BackboneTarget& target);

inline constexpr double default_temperature = 0.5;

/// Folding free energy of `y` into `state`, -T log(w / (Z - w)).
double folding_dG(const FoldSpace& space, const Sequence& y, std::size_t state, double temperature);

/// Exact Boltzmann stability change relative to the target's wild type.
double oracle_ddG(const BackboneTarget& target, const Sequence& y,
                  double temperature = default_temperature);

}  // namespace pzero::lattice
