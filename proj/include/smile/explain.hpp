#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "smile/adapter.hpp"
#include "smile/distance.hpp"
#include "smile/metrics.hpp"
#include "smile/perturbation.hpp"
#include "smile/surrogate.hpp"
#include "smile/textsim.hpp"

namespace smile {

struct ExplainConfig {
    std::uint64_t seed = 0;
    std::size_t n_perturbations = 64;  // baseline row included
    double norm_p = 2.0;
    ImageDistance image_distance = ImageDistance::kWasserstein;

    TextDistance text_distance = TextDistance::kWmd;
    KernelForm kernel_form = KernelForm::kPaper;
    double sigma = 0.0;  // <= 0: adaptive_sigma(max text distance, sigma_scale, kernel_form)
    double sigma_scale = 0.25;
    std::uint64_t embedder_seed = 0x5eed;
    std::size_t embedder_dimension = 16;

    SurrogateMethod method = SurrogateMethod::kWeightedLeastSquares;
    bool include_baseline_in_fit = false;
    bool allow_empty_prompt = false;

    bool significance_filter = false;
    double alpha = 0.05;
    std::uint64_t bootstrap_max_itr = 100000;
    ResampleScheme resample_scheme = ResampleScheme::kDisjointSplit;

    unsigned parallelism = 1;
    int retries = 2;
};

struct DroppedRow {
    std::size_t row = 0;
    std::string reason;
};

/// Everything needed to audit or replay one explanation run.
struct ExplanationReport {
    TokenizedPrompt prompt;
    std::string image_digest;
    std::string adapter_id;
    std::string embedder_name;
    ExplainConfig config;

    PerturbationSet perturbations;
    std::vector<double> distances;  // per row; NaN where the adapter failed
    std::vector<std::optional<double>> p_values;
    SampleWeights weights;
    std::vector<std::size_t> fit_rows;
    std::vector<DroppedRow> dropped;

    SurrogateFit fit;
    /// |coefficient| / max |coefficient|; all zeros when every coefficient is 0.
    std::vector<double> normalized_importance;
    std::vector<int> signs;
    FidelityReport fidelity;
};

struct ExplainTimings {
    double adapter_seconds = 0.0;
    double engine_seconds = 0.0;
};

std::vector<double> normalize_importance(const std::vector<double>& coefficients);

/// tokenize -> sample masks -> embed baseline and perturbed edits -> image
/// distances -> text weights -> weighted surrogate.
///
/// The row count is capped at the number of distinct admissible masks. Rows the
/// adapter fails on are excised; the fit proceeds if at least N_t + 2 remain,
/// else PartialFailure. `embedder` defaults to the built-in hash embedder.
ExplanationReport explain(Adapter& adapter, const ImageRef& image, std::string_view prompt, const ExplainConfig& config,
                          ExplainTimings* timings = nullptr, const WordEmbedder* embedder = nullptr);

}  // namespace smile
