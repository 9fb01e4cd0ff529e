#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "pzero/lattice.hpp"

namespace pzero {

enum class Split { train, test };

const char* to_string(Split s) noexcept;
Split parse_split(const std::string& s);

struct DatasetSpec {
    int length = 14;
    std::size_t n_train = 30;
    std::size_t n_test = 10;
    std::uint64_t seed = 0;
    /// Upper bound on sampled sequences; 0 picks 32 * 2^length.
    std::size_t max_trials = 0;
};

struct Dataset {
    int length = 0;
    std::uint64_t seed = 0;
    std::vector<lattice::BackboneTarget> targets;
    std::vector<Split> splits;  // parallel to targets

    std::vector<const lattice::BackboneTarget*> select(Split which) const;
    const lattice::BackboneTarget& by_id(const std::string& id) const;
    Split split_of(const std::string& id) const;
};

/// Samples HP sequences uniformly and keeps those with a unique ground state,
/// one target per distinct shape (walks equal up to symmetry and chain reversal).
/// Generation error when the trial budget runs out; the message carries the counts.
Dataset build_dataset(const DatasetSpec& spec);

nlohmann::json to_json(const Dataset& d);
Dataset dataset_from_json(const nlohmann::json& j);

/// Stable text rendering (the dataset file contents).
std::string serialize(const Dataset& d);

}  // namespace pzero
