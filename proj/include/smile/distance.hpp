#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace smile {

/// Flattened feature embedding of one edited image.
struct EmbeddingVector {
    std::vector<double> values;
    std::string model_id;
    std::string image_id;
    std::string prompt_hash;

    std::size_t size() const { return values.size(); }
};

/// ((1/n) * sum_j |a_j - b_j|^p)^(1/p) over embedding components.
double embedding_distance(std::span<const double> reference, std::span<const double> perturbed, double p = 2.0);

/// 1 - cosine similarity; used by the distance-grid evaluation.
double cosine_embedding_distance(std::span<const double> reference, std::span<const double> perturbed);

enum class ImageDistance { kWasserstein, kCosine };
std::string to_string(ImageDistance d);
ImageDistance parse_image_distance(const std::string& s);

/// 1-Wasserstein distance between two empirical distributions: the area
/// between their ECDFs, summed over the merged breakpoints.
double wasserstein_1d(std::span<const double> x, std::span<const double> y);

enum class ResampleScheme {
    /// Second index set is the complement of the first (permutation split).
    kDisjointSplit,
    /// Both index sets drawn independently without replacement, so they may
    /// overlap. This is the literal resampling loop; its null p-values skew low.
    kIndependentDraws,
};
std::string to_string(ResampleScheme s);
ResampleScheme parse_resample_scheme(const std::string& s);

struct BootstrapOptions {
    std::uint64_t max_itr = 100000;
    std::uint64_t seed = 0;
    ResampleScheme scheme = ResampleScheme::kDisjointSplit;
    /// Worker threads. Output is identical for any value.
    unsigned parallelism = 1;
};

struct BootstrapResult {
    double p_value = 1.0;
    double observed_wd = 0.0;
    std::uint64_t exceed_count = 0;
    std::uint64_t iterations = 0;
};

/// Bootstrap p-value for the observed 1-D Wasserstein distance: the fraction
/// of resamples whose distance strictly exceeds the observed one.
///
/// Iterations are grouped in fixed blocks, each with its own RNG stream
/// derived from (seed, block index), so sharding never changes the result.
BootstrapResult bootstrap_pvalue(std::span<const double> x, std::span<const double> y,
                                 const BootstrapOptions& options = {});

struct DistanceReport {
    double distance = 0.0;
    std::optional<double> p_value;
    double norm_p = 2.0;
    bool significant = true;
};

struct SignificanceSplit {
    std::vector<std::size_t> kept;
    std::vector<std::size_t> dropped;
};

SignificanceSplit filter_significant(std::span<const DistanceReport> reports, double alpha = 0.05);

}  // namespace smile
