#include "pzero/diversity.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "pzero/error.hpp"

namespace pzero::diversity {

namespace {

double dot(const Embedding& a, const Embedding& b)
{
    double acc = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        acc += a[k] * b[k];
    }
    return acc;
}

double cosine(const Embedding& a, const Embedding& b)
{
    const double nn = dot(a, a) * dot(b, b);
    require(nn > 0.0, ErrorKind::domain, "cosine of a zero or empty embedding");
    return dot(a, b) / std::sqrt(nn);
}

double hamming(const Sequence& a, const Sequence& b)
{
    require(a.size() == b.size(), ErrorKind::input, "hamming distance needs equal lengths");
    std::size_t diff = 0;
    for (std::size_t t = 0; t < a.size(); ++t) {
        diff += a[t] != b[t] ? 1 : 0;
    }
    return static_cast<double>(diff) / static_cast<double>(a.size());
}

}  // namespace

double d_cos(std::span<const Embedding> batch)
{
    require(batch.size() >= 2, ErrorKind::usage, "D_cos needs at least two embeddings");
    const auto b = batch.size();
    double sum = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = i + 1; j < b; ++j) {
            sum += cosine(batch[i], batch[j]);
        }
    }
    return 1.0 - 2.0 * sum / static_cast<double>(b * (b - 1));
}

std::vector<Embedding> d_cos_grad(std::span<const Embedding> batch)
{
    require(batch.size() >= 2, ErrorKind::usage, "D_cos needs at least two embeddings");
    const auto b = batch.size();
    const double scale = -2.0 / static_cast<double>(b * (b - 1));
    std::vector<Embedding> out(b, Embedding(batch.front().size(), 0.0));
    for (std::size_t i = 0; i < b; ++i) {
        const auto& zi = batch[i];
        const double ni = std::sqrt(dot(zi, zi));
        for (std::size_t j = 0; j < b; ++j) {
            if (j == i) {
                continue;
            }
            const auto& zj = batch[j];
            const double nj = std::sqrt(dot(zj, zj));
            const double c = dot(zi, zj) / (ni * nj);
            // d cos(zi, zj) / d zi = zj / (|zi||zj|) - cos * zi / |zi|^2
            for (std::size_t k = 0; k < zi.size(); ++k) {
                out[i][k] += scale * (zj[k] / (ni * nj) - c * zi[k] / (ni * ni));
            }
        }
    }
    return out;
}

OffDiagonalEstimate d_cos_offdiag_estimate(std::span<const Embedding> batch)
{
    require(batch.size() >= 2, ErrorKind::usage, "the off-diagonal estimator needs m >= 2");
    const auto m = static_cast<double>(batch.size());
    Embedding mean(batch.front().size(), 0.0);
    for (const auto& z : batch) {
        for (std::size_t k = 0; k < z.size(); ++k) {
            mean[k] += z[k] / m;
        }
    }
    OffDiagonalEstimate est;
    est.mean_cos = (m * dot(mean, mean) - 1.0) / (m - 1.0);
    est.diversity = 1.0 - est.mean_cos;
    return est;
}

EntropyBound entropy_lower_bound(double diversity)
{
    const double info = std::max(1.0 - diversity / 2.0, entropy_floor);
    return {-std::log(info), 1.0 / info};
}

double hamming_diversity(std::span<const Sequence> sequences)
{
    require(sequences.size() >= 2, ErrorKind::usage, "hamming diversity needs at least two sequences");
    const auto b = sequences.size();
    double sum = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = i + 1; j < b; ++j) {
            sum += hamming(sequences[i], sequences[j]);
        }
    }
    return 2.0 * sum / static_cast<double>(b * (b - 1));
}

std::vector<double> embedding_distance_to_rest(std::span<const Embedding> batch)
{
    require(batch.size() >= 2, ErrorKind::usage, "distance to rest needs at least two members");
    std::vector<double> out(batch.size(), 0.0);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        for (std::size_t j = 0; j < batch.size(); ++j) {
            if (i != j) {
                out[i] += 1.0 - cosine(batch[i], batch[j]);
            }
        }
        out[i] /= static_cast<double>(batch.size() - 1);
    }
    return out;
}

std::vector<double> hamming_distance_to_rest(std::span<const Sequence> sequences)
{
    require(sequences.size() >= 2, ErrorKind::usage, "distance to rest needs at least two members");
    std::vector<double> out(sequences.size(), 0.0);
    for (std::size_t i = 0; i < sequences.size(); ++i) {
        for (std::size_t j = 0; j < sequences.size(); ++j) {
            if (i != j) {
                out[i] += hamming(sequences[i], sequences[j]);
            }
        }
        out[i] /= static_cast<double>(sequences.size() - 1);
    }
    return out;
}

std::size_t distinct_count(std::span<const Sequence> sequences)
{
    return std::set<Sequence>(sequences.begin(), sequences.end()).size();
}

}  // namespace pzero::diversity
