#include "smile/explain.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "smile/error.hpp"
#include "smile/hash.hpp"

namespace smile {

std::vector<double> normalize_importance(const std::vector<double>& coefficients) {
    double max_abs = 0.0;
    for (double c : coefficients) max_abs = std::max(max_abs, std::abs(c));
    std::vector<double> out(coefficients.size(), 0.0);
    if (max_abs > 0.0)
        for (std::size_t i = 0; i < coefficients.size(); ++i) out[i] = std::abs(coefficients[i]) / max_abs;
    return out;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) {
    return std::chrono::duration<double>(Clock::now() - t).count();
}

// Text weights with empty rows (only possible when explicitly allowed) placed
// at the largest distance seen among non-empty rows.
SampleWeights text_weights(const TokenizedPrompt& tok, const PerturbationSet& set, const WordEmbedder& embedder,
                           const ExplainConfig& config) {
    WeightingOptions opts;
    opts.text_distance = config.text_distance;
    opts.kernel_form = config.kernel_form;
    opts.sigma = config.sigma;
    opts.sigma_scale = config.sigma_scale;

    PerturbationSet non_empty = set;
    std::vector<std::size_t> empty_rows;
    non_empty.masks.clear();
    non_empty.prompts.clear();
    std::vector<std::size_t> kept_rows;
    for (std::size_t r = 0; r < set.size(); ++r) {
        if (std::any_of(set.masks[r].begin(), set.masks[r].end(), [](auto b) { return b != 0; })) {
            non_empty.masks.push_back(set.masks[r]);
            non_empty.prompts.push_back(set.prompts[r]);
            kept_rows.push_back(r);
        } else {
            empty_rows.push_back(r);
        }
    }
    if (empty_rows.empty()) return weigh_perturbations(tok, set, embedder, opts);

    SampleWeights partial = weigh_perturbations(tok, non_empty, embedder, opts);
    double empty_distance = *std::max_element(partial.distance.begin(), partial.distance.end());
    if (!(empty_distance > 0.0)) empty_distance = 1.0;

    SampleWeights out;
    out.kernel_form = partial.kernel_form;
    out.text_distance = partial.text_distance;
    out.distance.assign(set.size(), empty_distance);
    for (std::size_t k = 0; k < kept_rows.size(); ++k) out.distance[kept_rows[k]] = partial.distance[k];
    if (config.sigma > 0.0) {
        out.sigma = config.sigma;
    } else {
        const double max_d = *std::max_element(out.distance.begin(), out.distance.end());
        out.sigma = adaptive_sigma(max_d, config.sigma_scale, config.kernel_form);
    }
    for (double d : out.distance) out.weight.push_back(kernel_weight(d, out.sigma, config.kernel_form));
    return out;
}

}  // namespace

ExplanationReport explain(Adapter& adapter, const ImageRef& image, std::string_view prompt, const ExplainConfig& config,
                          ExplainTimings* timings, const WordEmbedder* embedder) {
    const auto started = Clock::now();
    double adapter_seconds = 0.0;

    if (!(config.norm_p >= 1.0)) throw Error(ErrorCode::kInvalidNorm, "norm order must be >= 1");
    HashEmbedder builtin(config.embedder_seed, config.embedder_dimension);
    const WordEmbedder& words = embedder ? *embedder : builtin;

    ExplanationReport report;
    report.config = config;
    report.prompt = tokenize(prompt);
    report.image_digest = image.digest;
    report.adapter_id = adapter.model_id();
    report.embedder_name = words.name();

    const std::size_t n_tokens = report.prompt.size();
    const std::uint64_t capacity = mask_capacity(n_tokens, config.allow_empty_prompt);
    const std::size_t n_rows = static_cast<std::size_t>(std::min<std::uint64_t>(config.n_perturbations, capacity));
    if (n_rows < 2) {
        throw Error(ErrorCode::kInfeasibleRequest,
                    "a " + std::to_string(n_tokens) + "-token prompt admits no perturbation besides the baseline");
    }
    SamplingOptions sampling;
    sampling.include_baseline = true;
    sampling.allow_empty = config.allow_empty_prompt;
    report.perturbations = make_perturbations(report.prompt, n_rows, config.seed, sampling);
    const PerturbationSet& set = report.perturbations;

    std::vector<EmbedQuery> queries;
    queries.reserve(set.size());
    for (const auto& p : set.prompts) queries.push_back(EmbedQuery{image, p});
    QueryOptions qopts;
    qopts.parallelism = config.parallelism;
    qopts.retries = config.retries;

    const auto adapter_started = Clock::now();
    const std::vector<EditResponse> responses = adapter.query(queries, qopts);
    adapter_seconds += seconds_since(adapter_started);
    if (responses.size() != set.size())
        throw Error(ErrorCode::kAdapterMalformedResponse, "adapter answered " + std::to_string(responses.size()) +
                                                              " of " + std::to_string(set.size()) + " requests");
    if (!responses[0].ok())
        throw Error(ErrorCode::kPartialFailure, "baseline prompt failed: " + responses[0].error.value_or("unknown"));

    const std::vector<double>& reference = *responses[0].embedding;
    report.distances.assign(set.size(), std::numeric_limits<double>::quiet_NaN());
    report.p_values.assign(set.size(), std::nullopt);
    bool adapter_failures = false;
    std::vector<bool> usable(set.size(), false);
    for (std::size_t r = 0; r < set.size(); ++r) {
        if (!responses[r].ok()) {
            adapter_failures = true;
            report.dropped.push_back({r, "adapter error: " + responses[r].error.value_or("unknown")});
            continue;
        }
        const auto& e = *responses[r].embedding;
        if (e.size() != reference.size())
            throw Error(ErrorCode::kAdapterMalformedResponse, "embedding dimension changed within one run");
        report.distances[r] = config.image_distance == ImageDistance::kWasserstein
                                  ? embedding_distance(reference, e, config.norm_p)
                                  : cosine_embedding_distance(reference, e);
        usable[r] = true;
    }

    if (config.significance_filter) {
        std::vector<DistanceReport> tested;
        std::vector<std::size_t> tested_rows;
        const std::vector<double> zeros(reference.size(), 0.0);
        for (std::size_t r = 1; r < set.size(); ++r) {
            if (!usable[r]) continue;
            std::vector<double> diff(reference.size());
            for (std::size_t j = 0; j < diff.size(); ++j) diff[j] = (*responses[r].embedding)[j] - reference[j];
            BootstrapOptions b;
            b.max_itr = config.bootstrap_max_itr;
            b.seed = derive_seed(config.seed, r);
            b.scheme = config.resample_scheme;
            b.parallelism = config.parallelism;
            const auto res = bootstrap_pvalue(diff, zeros, b);
            report.p_values[r] = res.p_value;
            tested.push_back(DistanceReport{report.distances[r], res.p_value, config.norm_p, res.p_value <= config.alpha});
            tested_rows.push_back(r);
        }
        if (!tested.empty()) {
            for (std::size_t k : filter_significant(tested, config.alpha).dropped) {
                usable[tested_rows[k]] = false;
                report.dropped.push_back({tested_rows[k], "not significant"});
            }
        }
        std::sort(report.dropped.begin(), report.dropped.end(),
                  [](const DroppedRow& a, const DroppedRow& b) { return a.row < b.row; });
    }

    report.weights = text_weights(report.prompt, set, words, config);

    for (std::size_t r = config.include_baseline_in_fit ? 0 : 1; r < set.size(); ++r)
        if (usable[r]) report.fit_rows.push_back(r);
    if (adapter_failures && report.fit_rows.size() < n_tokens + 2) {
        throw Error(ErrorCode::kPartialFailure, std::to_string(report.dropped.size()) + " perturbations failed; " +
                                                    std::to_string(report.fit_rows.size()) + " usable rows for " +
                                                    std::to_string(n_tokens) + " tokens");
    }
    if (report.fit_rows.empty()) throw Error(ErrorCode::kPartialFailure, "no usable perturbation rows");

    std::vector<Mask> design;
    std::vector<double> response, weight;
    for (std::size_t r : report.fit_rows) {
        design.push_back(set.masks[r]);
        response.push_back(report.distances[r]);
        weight.push_back(report.weights.weight[r]);
    }
    report.fit = fit_surrogate(config.method, design, response, weight);
    report.normalized_importance = normalize_importance(report.fit.coefficients);
    for (double c : report.fit.coefficients) report.signs.push_back(c > 0.0 ? 1 : (c < 0.0 ? -1 : 0));

    std::vector<double> predicted;
    for (const auto& row : design) predicted.push_back(report.fit.predict(row));
    try {
        report.fidelity = fidelity(response, predicted, weight, n_tokens);
    } catch (const Error&) {
        // All-zero weights after underflow: leave the fidelity block at defaults.
        report.fidelity = FidelityReport{};
        report.fidelity.n_samples = response.size();
        report.fidelity.n_variables = n_tokens;
    }

    if (timings) {
        timings->adapter_seconds = adapter_seconds;
        timings->engine_seconds = seconds_since(started) - adapter_seconds;
    }
    return report;
}

}  // namespace smile
