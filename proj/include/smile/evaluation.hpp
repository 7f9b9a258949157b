#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "smile/explain.hpp"
#include "smile/metrics.hpp"

namespace smile {

/// One corpus line: {"image": "...", "prompt": "...", "keywords": [...]}.
struct CorpusRecord {
    std::string image;  // resolved against the corpus file's directory
    std::string prompt;
    std::vector<std::string> keywords;
};

/// Throws InvalidArgument naming the line on malformed records.
std::vector<CorpusRecord> load_corpus(const std::filesystem::path& path);

/// Labels tokens whose keyword_key matches any word of any keyword phrase.
GroundTruthAttribution ground_truth(const TokenizedPrompt& prompt, const std::vector<std::string>& keywords);

/// Suffix appended by the stability protocol.
inline constexpr const char* kStabilitySuffix = " ###";

struct StabilityResult {
    double jaccard = 0.0;
    std::set<std::size_t> top_original;
    std::set<std::size_t> top_suffixed;
    ExplanationReport original;
    ExplanationReport suffixed;
};

/// Explains `prompt` and `prompt + " ###"`, takes the top-k tokens by
/// |coefficient| among the original tokens of each run and returns the Jaccard
/// index of the two sets.
StabilityResult stability_test(Adapter& adapter, const ImageRef& image, const std::string& prompt,
                               const ExplainConfig& config, std::size_t k = 2);

/// Per-token coefficient spread across repeated runs on identical input.
ConsistencyResult consistency_test(const std::vector<ExplanationReport>& reports);

// ---------------------------------------------------------------------------
// Corpus-level suites

struct AccuracyRow {
    std::string prompt;
    AttributionAccuracy scores;
};

struct AccuracySummary {
    std::vector<AccuracyRow> rows;
    double mean_accuracy = 0.0;
    double mean_f1 = 0.0;
    double mean_auroc = 0.0;
    std::size_t auroc_count = 0;
    std::size_t failures = 0;
};

AccuracySummary run_accuracy(Adapter& adapter, const std::vector<CorpusRecord>& corpus, const ExplainConfig& config,
                             double threshold = 0.5);

struct StabilitySummary {
    std::vector<double> per_prompt;
    double mean_jaccard = 0.0;
    std::size_t failures = 0;
};

/// `k` = 0 uses the number of keyword tokens of each record (2 if none).
StabilitySummary run_stability(Adapter& adapter, const std::vector<CorpusRecord>& corpus, const ExplainConfig& config,
                               std::size_t k = 0);

struct ConsistencySummary {
    std::vector<ConsistencyResult> per_prompt;
    double mean_variance = 0.0;
    double mean_stddev = 0.0;
    std::size_t failures = 0;
};

/// Repeats each record `repeats` times with seeds config.seed, config.seed + 1, ...
ConsistencySummary run_consistency(Adapter& adapter, const std::vector<CorpusRecord>& corpus,
                                   const ExplainConfig& config, std::size_t repeats);

struct FidelityRow {
    std::size_t n_perturbations = 0;
    TextDistance text_distance = TextDistance::kWmd;
    ImageDistance image_distance = ImageDistance::kWasserstein;
    SurrogateMethod method = SurrogateMethod::kWeightedLeastSquares;
    double norm_p = 2.0;
    FidelityReport mean;  // averaged over corpus records
    std::size_t records = 0;
    std::size_t failures = 0;
};

/// Perturbation-count sweep (WD text/image, WLS) followed by the
/// {cosine, WD} x {cosine, WD} x {WLS, Bayesian ridge} grid at
/// config.n_perturbations, repeated for each norm order.
std::vector<FidelityRow> run_fidelity(Adapter& adapter, const std::vector<CorpusRecord>& corpus,
                                      const ExplainConfig& config, const std::vector<std::size_t>& counts,
                                      const std::vector<double>& norm_orders);

FidelityRow fidelity_cell(Adapter& adapter, const std::vector<CorpusRecord>& corpus, ExplainConfig config);

// ---------------------------------------------------------------------------
// Timing

enum class BenchMethod { kLimeWeights, kSmileWeights, kBayes };
std::string to_string(BenchMethod m);
BenchMethod parse_bench_method(const std::string& s);

/// lime-weights: cosine text distance + conventional kernel + WLS.
/// smile-weights: WMD + printed kernel + WLS. bayes: the lime-weights
/// weighting with a Bayesian ridge surrogate.
ExplainConfig configure_bench_method(ExplainConfig base, BenchMethod m);

struct BenchRow {
    std::string framework;
    BenchMethod method = BenchMethod::kSmileWeights;
    std::string prompt;
    std::string perturbation_hash;
    double adapter_seconds = 0.0;
    double engine_seconds = 0.0;
};

std::vector<BenchRow> run_bench(Adapter& adapter, const std::vector<CorpusRecord>& corpus, const ExplainConfig& config,
                                const std::vector<BenchMethod>& methods, int repeats = 1);

}  // namespace smile
