#include "smile/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "smile/error.hpp"

namespace smile {

namespace {

void check_pair(std::span<const double> f, std::span<const double> g) {
    if (f.size() != g.size()) throw Error(ErrorCode::kLengthMismatch, "f and g differ in length");
    if (f.empty()) throw Error(ErrorCode::kLengthMismatch, "empty inputs");
}

double weight_total(std::span<const double> f, std::span<const double> w) {
    if (w.size() != f.size()) throw Error(ErrorCode::kLengthMismatch, "weights differ in length");
    double total = 0.0;
    for (double x : w) {
        if (!(x >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "negative weight");
        total += x;
    }
    if (!(total > 0.0)) throw Error(ErrorCode::kAllZeroWeights, "weights sum to zero");
    return total;
}

double residual_ss(std::span<const double> f, std::span<const double> g) {
    double s = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) s += (f[i] - g[i]) * (f[i] - g[i]);
    return s;
}

}  // namespace

double r2(std::span<const double> f, std::span<const double> g) {
    check_pair(f, g);
    if (f.size() < 2) throw Error(ErrorCode::kDegenerateVariance, "R^2 needs at least two samples");
    const double mean = std::accumulate(f.begin(), f.end(), 0.0) / static_cast<double>(f.size());
    double total = 0.0;
    for (double x : f) total += (x - mean) * (x - mean);
    if (!(total > 0.0)) throw Error(ErrorCode::kDegenerateVariance, "response has zero variance");
    return 1.0 - residual_ss(f, g) / total;
}

double r2_weighted(std::span<const double> f, std::span<const double> g, std::span<const double> w, bool strict) {
    check_pair(f, g);
    const double wsum = weight_total(f, w);
    double mean = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) mean += w[i] * f[i];
    mean /= wsum;
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
        const double r = f[i] - g[i];
        const double c = f[i] - mean;
        num += strict ? r * r : w[i] * r * r;
        den += strict ? c * c : w[i] * c * c;
    }
    if (!(den > 0.0)) throw Error(ErrorCode::kDegenerateVariance, "response has zero weighted variance");
    return 1.0 - num / den;
}

double r2_weighted_adjusted(double r2w, std::size_t n_samples, std::size_t n_variables) {
    if (n_samples <= n_variables + 1)
        throw Error(ErrorCode::kDegenerateDoF, "N_p = " + std::to_string(n_samples) + ", N_s = " + std::to_string(n_variables));
    const double np = static_cast<double>(n_samples);
    const double ns = static_cast<double>(n_variables);
    return 1.0 - (1.0 - r2w) * ((np - 1.0) / (np - ns - 1.0));
}

double wmse(std::span<const double> f, std::span<const double> g, std::span<const double> w) {
    check_pair(f, g);
    const double wsum = weight_total(f, w);
    double s = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) s += w[i] * (f[i] - g[i]) * (f[i] - g[i]);
    return s / wsum;
}

double wmae(std::span<const double> f, std::span<const double> g, std::span<const double> w) {
    check_pair(f, g);
    const double wsum = weight_total(f, w);
    double s = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) s += w[i] * std::abs(f[i] - g[i]);
    return s / wsum;
}

double l1(std::span<const double> f, std::span<const double> g) {
    check_pair(f, g);
    double s = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) s += std::abs(f[i] - g[i]);
    return s / static_cast<double>(f.size());
}

double l2(std::span<const double> f, std::span<const double> g) {
    check_pair(f, g);
    return residual_ss(f, g) / static_cast<double>(f.size());
}

FidelityReport fidelity(std::span<const double> f, std::span<const double> g, std::span<const double> w,
                        std::size_t n_variables, bool strict) {
    constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
    FidelityReport out;
    out.n_samples = f.size();
    out.n_variables = n_variables;
    out.wmse = wmse(f, g, w);
    out.wmae = wmae(f, g, w);
    out.l1 = l1(f, g);
    out.l2 = l2(f, g);
    try {
        out.r2 = r2(f, g);
    } catch (const Error&) {
        out.r2 = kNaN;
    }
    try {
        out.r2_weighted = r2_weighted(f, g, w, strict);
    } catch (const Error&) {
        out.r2_weighted = kNaN;
    }
    out.r2_weighted_adjusted = (std::isnan(out.r2_weighted) || f.size() <= n_variables + 1)
                                   ? kNaN
                                   : r2_weighted_adjusted(out.r2_weighted, f.size(), n_variables);
    return out;
}

namespace {

template <typename T>
double jaccard_impl(const std::set<T>& a, const std::set<T>& b) {
    if (a.empty() && b.empty()) throw Error(ErrorCode::kBothEmpty, "Jaccard index of two empty sets");
    std::size_t inter = 0;
    for (const auto& x : a) inter += b.count(x);
    const std::size_t uni = a.size() + b.size() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace

double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) { return jaccard_impl(a, b); }
double jaccard(const std::set<std::size_t>& a, const std::set<std::size_t>& b) { return jaccard_impl(a, b); }

std::set<std::size_t> top_k_indices(std::span<const double> values, std::size_t k) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return std::abs(values[a]) > std::abs(values[b]); });
    order.resize(std::min(k, order.size()));
    return {order.begin(), order.end()};
}

double attribution_auroc(std::span<const double> importance, const GroundTruthAttribution& truth) {
    if (importance.size() != truth.labels.size())
        throw Error(ErrorCode::kLengthMismatch, "importance and labels differ in length");
    double score = 0.0;
    std::size_t pairs = 0, positives = 0, negatives = 0;
    for (std::size_t i = 0; i < importance.size(); ++i) (truth.labels[i] ? positives : negatives) += 1;
    if (positives == 0) throw Error(ErrorCode::kNoPositives, "no keyword tokens");
    if (negatives == 0) throw Error(ErrorCode::kNoNegatives, "every token is a keyword");
    for (std::size_t i = 0; i < importance.size(); ++i) {
        if (!truth.labels[i]) continue;
        for (std::size_t j = 0; j < importance.size(); ++j) {
            if (truth.labels[j]) continue;
            ++pairs;
            if (importance[i] > importance[j]) score += 1.0;
            else if (importance[i] == importance[j]) score += 0.5;
        }
    }
    return score / static_cast<double>(pairs);
}

AttributionAccuracy attribution_accuracy(std::span<const double> importance, const GroundTruthAttribution& truth,
                                         double threshold) {
    if (importance.size() != truth.labels.size())
        throw Error(ErrorCode::kLengthMismatch, "importance and labels differ in length");
    double max_abs = 0.0;
    for (double v : importance) max_abs = std::max(max_abs, std::abs(v));

    std::size_t tp = 0, fp = 0, fn = 0, correct = 0;
    for (std::size_t i = 0; i < importance.size(); ++i) {
        const double normalized = max_abs > 0.0 ? std::abs(importance[i]) / max_abs : 0.0;
        const bool predicted = normalized >= threshold;
        const bool actual = truth.labels[i] != 0;
        if (predicted == actual) ++correct;
        if (predicted && actual) ++tp;
        if (predicted && !actual) ++fp;
        if (!predicted && actual) ++fn;
    }
    AttributionAccuracy out;
    out.accuracy = importance.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(importance.size());
    const std::size_t denom = 2 * tp + fp + fn;
    out.f1 = denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
    try {
        out.auroc = attribution_auroc(importance, truth);
    } catch (const Error& e) {
        if (e.code() != ErrorCode::kNoPositives && e.code() != ErrorCode::kNoNegatives) throw;
    }
    return out;
}

ConsistencyResult consistency(std::span<const std::vector<double>> runs) {
    if (runs.size() < 2) throw Error(ErrorCode::kShapeMismatch, "consistency needs at least two runs");
    const std::size_t width = runs.front().size();
    for (const auto& r : runs)
        if (r.size() != width) throw Error(ErrorCode::kShapeMismatch, "runs have different token counts");

    ConsistencyResult out;
    out.variance.assign(width, 0.0);
    out.stddev.assign(width, 0.0);
    const double k = static_cast<double>(runs.size());
    for (std::size_t t = 0; t < width; ++t) {
        double mean = 0.0;
        for (const auto& r : runs) mean += r[t];
        mean /= k;
        double ss = 0.0;
        for (const auto& r : runs) ss += (r[t] - mean) * (r[t] - mean);
        out.variance[t] = ss / (k - 1.0);
        out.stddev[t] = std::sqrt(out.variance[t]);
    }
    if (width > 0) {
        out.mean_stddev = std::accumulate(out.stddev.begin(), out.stddev.end(), 0.0) / static_cast<double>(width);
        out.mean_variance = std::accumulate(out.variance.begin(), out.variance.end(), 0.0) / static_cast<double>(width);
    }
    return out;
}

}  // namespace smile
