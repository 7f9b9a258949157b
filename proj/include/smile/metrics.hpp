#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace smile {

// Fidelity family. `f` is the black-box response, `g` the surrogate
// prediction, `w` the sample weights.

double r2(std::span<const double> f, std::span<const double> g);

/// Weighted R^2. With `strict` (the default) the numerator is the unweighted
/// residual sum and only the centering uses the weighted mean; otherwise
/// both sums are weighted.
double r2_weighted(std::span<const double> f, std::span<const double> g, std::span<const double> w,
                   bool strict = true);

double r2_weighted_adjusted(double r2w, std::size_t n_samples, std::size_t n_variables);

double wmse(std::span<const double> f, std::span<const double> g, std::span<const double> w);
double wmae(std::span<const double> f, std::span<const double> g, std::span<const double> w);
double l1(std::span<const double> f, std::span<const double> g);
double l2(std::span<const double> f, std::span<const double> g);

struct FidelityReport {
    double r2 = 0.0;
    double r2_weighted = 0.0;
    double r2_weighted_adjusted = 0.0;
    double wmse = 0.0;
    double wmae = 0.0;
    double l1 = 0.0;
    double l2 = 0.0;
    std::size_t n_samples = 0;
    std::size_t n_variables = 0;
};

/// All fidelity metrics at once. Undefined R^2 entries (constant response,
/// too few degrees of freedom) come back as NaN instead of throwing.
FidelityReport fidelity(std::span<const double> f, std::span<const double> g, std::span<const double> w,
                        std::size_t n_variables, bool strict = true);

double jaccard(const std::set<std::string>& a, const std::set<std::string>& b);
double jaccard(const std::set<std::size_t>& a, const std::set<std::size_t>& b);

/// Indices of the k largest |values|; ties go to the lower index.
std::set<std::size_t> top_k_indices(std::span<const double> values, std::size_t k);

/// Per-token labels: 1 marks a control keyword.
struct GroundTruthAttribution {
    std::vector<int> labels;
};

struct AttributionAccuracy {
    double accuracy = 0.0;
    double f1 = 0.0;
    std::optional<double> auroc;
};

/// AUROC is the fraction of (keyword, non-keyword) pairs ordered correctly,
/// ties counted 1/2, computed on the raw scores. ACC and F1 binarize the
/// max-abs-normalized scores at `threshold`.
AttributionAccuracy attribution_accuracy(std::span<const double> importance, const GroundTruthAttribution& truth,
                                         double threshold = 0.5);

/// Throws NoPositives / NoNegatives when undefined.
double attribution_auroc(std::span<const double> importance, const GroundTruthAttribution& truth);

struct ConsistencyResult {
    std::vector<double> variance;  // sample variance (K - 1 divisor)
    std::vector<double> stddev;
    double mean_stddev = 0.0;
    double mean_variance = 0.0;
};

/// Per-token spread of coefficient vectors from K repeated runs.
ConsistencyResult consistency(std::span<const std::vector<double>> coefficient_runs);

}  // namespace smile
