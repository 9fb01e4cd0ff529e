#pragma once

#include <span>
#include <vector>

#include "pzero/sequence.hpp"

namespace pzero::diversity {

using Embedding = std::vector<double>;

/// 1 - mean pairwise cosine over all unordered pairs. Usage error for B < 2.
double d_cos(std::span<const Embedding> batch);

/// d D_cos / d z_i, one gradient per embedding.
std::vector<Embedding> d_cos_grad(std::span<const Embedding> batch);

struct OffDiagonalEstimate {
    double mean_cos = 0.0;   // (m |zbar|^2 - 1) / (m - 1)
    double diversity = 0.0;  // 1 - mean_cos
};

/// Closed-form off-diagonal estimator from the batch mean.
OffDiagonalEstimate d_cos_offdiag_estimate(std::span<const Embedding> batch);

struct EntropyBound {
    double entropy = 0.0;
    double perplexity = 1.0;
};

inline constexpr double entropy_floor = 1e-9;

/// -log(1 - D/2) and 1 / (1 - D/2), with 1 - D/2 floored at entropy_floor.
EntropyBound entropy_lower_bound(double diversity);

/// Mean normalized Hamming distance over all pairs. Input error on mixed
/// lengths, usage error for fewer than two sequences.
double hamming_diversity(std::span<const Sequence> sequences);

/// Per-member mean distance to the rest of the group (cosine distance of
/// embeddings / normalized Hamming).
std::vector<double> embedding_distance_to_rest(std::span<const Embedding> batch);
std::vector<double> hamming_distance_to_rest(std::span<const Sequence> sequences);

/// Number of distinct sequences.
std::size_t distinct_count(std::span<const Sequence> sequences);

}  // namespace pzero::diversity
