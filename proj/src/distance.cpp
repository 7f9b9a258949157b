#include "smile/distance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <thread>

#include "smile/error.hpp"
#include "smile/hash.hpp"

namespace smile {

double embedding_distance(std::span<const double> reference, std::span<const double> perturbed, double p) {
    if (reference.size() != perturbed.size()) {
        throw Error(ErrorCode::kLengthMismatch, "embeddings of length " + std::to_string(reference.size()) + " and " +
                                                    std::to_string(perturbed.size()));
    }
    if (reference.empty()) throw Error(ErrorCode::kLengthMismatch, "empty embeddings");
    if (!(p >= 1.0) || !std::isfinite(p)) throw Error(ErrorCode::kInvalidNorm, "norm order p = " + std::to_string(p));

    double sum = 0.0;
    for (std::size_t j = 0; j < reference.size(); ++j) {
        const double d = std::abs(reference[j] - perturbed[j]);
        sum += p == 1.0 ? d : (p == 2.0 ? d * d : std::pow(d, p));
    }
    const double mean = sum / static_cast<double>(reference.size());
    if (p == 1.0) return mean;
    if (p == 2.0) return std::sqrt(mean);
    return std::pow(mean, 1.0 / p);
}

double cosine_embedding_distance(std::span<const double> reference, std::span<const double> perturbed) {
    if (reference.size() != perturbed.size() || reference.empty())
        throw Error(ErrorCode::kLengthMismatch, "cosine distance on mismatched embeddings");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t j = 0; j < reference.size(); ++j) {
        dot += reference[j] * perturbed[j];
        na += reference[j] * reference[j];
        nb += perturbed[j] * perturbed[j];
    }
    if (na == 0.0 || nb == 0.0) return na == nb ? 0.0 : 1.0;
    return std::max(0.0, 1.0 - std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0));
}

std::string to_string(ImageDistance d) { return d == ImageDistance::kWasserstein ? "wd" : "cosine"; }

ImageDistance parse_image_distance(const std::string& s) {
    if (s == "wd" || s == "wasserstein") return ImageDistance::kWasserstein;
    if (s == "cosine") return ImageDistance::kCosine;
    throw Error(ErrorCode::kInvalidArgument, "unknown image distance '" + s + "'");
}

namespace {

double wasserstein_sorted(const std::vector<double>& xs, const std::vector<double>& ys) {
    // Sweep the merged breakpoints; between consecutive breakpoints both ECDFs
    // are constant.
    const double nx = static_cast<double>(xs.size());
    const double ny = static_cast<double>(ys.size());
    std::size_t i = 0, j = 0;
    double prev = std::min(xs.front(), ys.front());
    double area = 0.0;
    while (i < xs.size() || j < ys.size()) {
        double next;
        if (j == ys.size() || (i < xs.size() && xs[i] <= ys[j])) {
            next = xs[i];
        } else {
            next = ys[j];
        }
        area += std::abs(static_cast<double>(i) / nx - static_cast<double>(j) / ny) * (next - prev);
        while (i < xs.size() && xs[i] == next) ++i;
        while (j < ys.size() && ys[j] == next) ++j;
        prev = next;
    }
    return area;
}

}  // namespace

double wasserstein_1d(std::span<const double> x, std::span<const double> y) {
    if (x.empty() || y.empty()) throw Error(ErrorCode::kEmptySample, "Wasserstein distance needs two non-empty samples");
    std::vector<double> xs(x.begin(), x.end());
    std::vector<double> ys(y.begin(), y.end());
    std::sort(xs.begin(), xs.end());
    std::sort(ys.begin(), ys.end());
    return wasserstein_sorted(xs, ys);
}

std::string to_string(ResampleScheme s) { return s == ResampleScheme::kDisjointSplit ? "disjoint" : "independent"; }

ResampleScheme parse_resample_scheme(const std::string& s) {
    if (s == "disjoint" || s == "permutation") return ResampleScheme::kDisjointSplit;
    if (s == "independent" || s == "paper") return ResampleScheme::kIndependentDraws;
    throw Error(ErrorCode::kInvalidArgument, "unknown resampling scheme '" + s + "'");
}

namespace {

constexpr std::uint64_t kBlockSize = 1000;

// Partial Fisher-Yates: the first k entries of `idx` become a uniform sample
// without replacement.
void partial_shuffle(std::vector<std::size_t>& idx, std::size_t k, std::mt19937_64& rng) {
    for (std::size_t i = 0; i < k; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
}

std::uint64_t run_block(std::span<const double> pooled, std::size_t nx, std::size_t ny, double observed,
                        std::uint64_t seed, std::uint64_t block, std::uint64_t iterations, ResampleScheme scheme) {
    std::mt19937_64 rng(derive_seed(seed, block));
    std::vector<std::size_t> idx(pooled.size());
    std::vector<double> xs(nx), ys(ny);
    std::uint64_t bigger = 0;
    for (std::uint64_t it = 0; it < iterations; ++it) {
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        partial_shuffle(idx, nx, rng);
        for (std::size_t k = 0; k < nx; ++k) xs[k] = pooled[idx[k]];
        if (scheme == ResampleScheme::kDisjointSplit) {
            for (std::size_t k = 0; k < ny; ++k) ys[k] = pooled[idx[nx + k]];
        } else {
            std::iota(idx.begin(), idx.end(), std::size_t{0});
            partial_shuffle(idx, ny, rng);
            for (std::size_t k = 0; k < ny; ++k) ys[k] = pooled[idx[k]];
        }
        std::sort(xs.begin(), xs.end());
        std::sort(ys.begin(), ys.end());
        if (wasserstein_sorted(xs, ys) > observed) ++bigger;
    }
    return bigger;
}

}  // namespace

BootstrapResult bootstrap_pvalue(std::span<const double> x, std::span<const double> y,
                                 const BootstrapOptions& options) {
    if (x.size() < 2 || y.size() < 2) throw Error(ErrorCode::kSampleTooSmall, "bootstrap needs at least 2 values per sample");
    if (options.max_itr == 0) throw Error(ErrorCode::kInvalidArgument, "max_itr must be positive");

    BootstrapResult result;
    result.observed_wd = wasserstein_1d(x, y);
    result.iterations = options.max_itr;

    std::vector<double> pooled(x.begin(), x.end());
    pooled.insert(pooled.end(), y.begin(), y.end());

    const std::uint64_t n_blocks = (options.max_itr + kBlockSize - 1) / kBlockSize;
    auto block_iters = [&](std::uint64_t b) {
        return std::min(kBlockSize, options.max_itr - b * kBlockSize);
    };
    std::vector<std::uint64_t> counts(n_blocks, 0);
    const unsigned workers = std::max(1u, std::min<unsigned>(options.parallelism, static_cast<unsigned>(n_blocks)));
    auto work = [&](unsigned w) {
        for (std::uint64_t b = w; b < n_blocks; b += workers)
            counts[b] = run_block(pooled, x.size(), y.size(), result.observed_wd, options.seed, b, block_iters(b),
                                  options.scheme);
    };
    if (workers == 1) {
        work(0);
    } else {
        std::vector<std::jthread> threads;
        for (unsigned w = 0; w < workers; ++w) threads.emplace_back(work, w);
    }
    result.exceed_count = std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
    result.p_value = static_cast<double>(result.exceed_count) / static_cast<double>(options.max_itr);
    return result;
}

SignificanceSplit filter_significant(std::span<const DistanceReport> reports, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::kInvalidArgument, "alpha must lie in (0, 1)");
    SignificanceSplit split;
    for (std::size_t i = 0; i < reports.size(); ++i) {
        if (!reports[i].p_value) throw Error(ErrorCode::kMissingPValue, "report " + std::to_string(i) + " has no p-value");
        (*reports[i].p_value <= alpha ? split.kept : split.dropped).push_back(i);
    }
    return split;
}

}  // namespace smile
