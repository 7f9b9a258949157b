#include "smile/evaluation.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "smile/error.hpp"

namespace smile {

using nlohmann::json;

std::vector<CorpusRecord> load_corpus(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::kIoError, "cannot read corpus '" + path.string() + "'");
    const auto base = path.parent_path();
    std::vector<CorpusRecord> out;
    std::string line;
    for (int line_no = 1; std::getline(in, line); ++line_no) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const json j = json::parse(line, nullptr, false);
        const std::string where = path.string() + ":" + std::to_string(line_no);
        if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::kInvalidArgument, where + ": not a JSON object");
        try {
            CorpusRecord r;
            std::filesystem::path image = j.at("image").get<std::string>();
            r.image = (image.is_relative() ? base / image : image).string();
            r.prompt = j.at("prompt").get<std::string>();
            r.keywords = j.value("keywords", std::vector<std::string>{});
            out.push_back(std::move(r));
        } catch (const json::exception& e) {
            throw Error(ErrorCode::kInvalidArgument, where + ": " + e.what());
        }
    }
    return out;
}

GroundTruthAttribution ground_truth(const TokenizedPrompt& prompt, const std::vector<std::string>& keywords) {
    std::set<std::string> words;
    for (const auto& phrase : keywords) {
        std::istringstream ss(phrase);
        for (std::string w; ss >> w;) {
            auto key = keyword_key(w);
            if (!key.empty()) words.insert(key);
        }
    }
    GroundTruthAttribution truth;
    for (const auto& t : prompt.tokens) truth.labels.push_back(words.count(keyword_key(t)) ? 1 : 0);
    return truth;
}

StabilityResult stability_test(Adapter& adapter, const ImageRef& image, const std::string& prompt,
                               const ExplainConfig& config, std::size_t k) {
    StabilityResult out{};
    out.original = explain(adapter, image, prompt, config);
    out.suffixed = explain(adapter, image, prompt + kStabilitySuffix, config);
    const std::size_t n = out.original.prompt.size();
    const std::span<const double> a(out.original.fit.coefficients);
    const std::span<const double> b(out.suffixed.fit.coefficients.data(), n);
    out.top_original = top_k_indices(a, k);
    out.top_suffixed = top_k_indices(b, k);
    out.jaccard = jaccard(out.top_original, out.top_suffixed);
    return out;
}

ConsistencyResult consistency_test(const std::vector<ExplanationReport>& reports) {
    if (reports.size() < 2) throw Error(ErrorCode::kShapeMismatch, "consistency needs at least two reports");
    std::vector<std::vector<double>> runs;
    for (const auto& r : reports) {
        if (r.prompt.tokens != reports.front().prompt.tokens)
            throw Error(ErrorCode::kShapeMismatch, "reports explain different prompts");
        runs.push_back(r.fit.coefficients);
    }
    return consistency(runs);
}

namespace {

void log_failure(const CorpusRecord& r, const std::exception& e) {
    std::cerr << "record '" << r.prompt << "' failed: " << e.what() << "\n";
}

}  // namespace

AccuracySummary run_accuracy(Adapter& adapter, const std::vector<CorpusRecord>& corpus, const ExplainConfig& config,
                             double threshold) {
    AccuracySummary s;
    for (const auto& rec : corpus) {
        try {
            const auto image = ImageRef::from_file(rec.image);
            const auto report = explain(adapter, image, rec.prompt, config);
            const auto truth = ground_truth(report.prompt, rec.keywords);
            AccuracyRow row{rec.prompt, attribution_accuracy(report.normalized_importance, truth, threshold)};
            s.mean_accuracy += row.scores.accuracy;
            s.mean_f1 += row.scores.f1;
            if (row.scores.auroc) {
                s.mean_auroc += *row.scores.auroc;
                ++s.auroc_count;
            }
            s.rows.push_back(std::move(row));
        } catch (const Error& e) {
            if (e.code() == ErrorCode::kAdapterUnavailable) throw;
            log_failure(rec, e);
            ++s.failures;
        }
    }
    if (!s.rows.empty()) {
        s.mean_accuracy /= static_cast<double>(s.rows.size());
        s.mean_f1 /= static_cast<double>(s.rows.size());
    }
    s.mean_auroc = s.auroc_count ? s.mean_auroc / static_cast<double>(s.auroc_count) : std::nan("");
    return s;
}

StabilitySummary run_stability(Adapter& adapter, const std::vector<CorpusRecord>& corpus, const ExplainConfig& config,
                               std::size_t k) {
    StabilitySummary s;
    double total = 0.0;
    for (const auto& rec : corpus) {
        try {
            const auto image = ImageRef::from_file(rec.image);
            std::size_t kk = k;
            if (kk == 0) {
                const auto truth = ground_truth(tokenize(rec.prompt), rec.keywords);
                for (int l : truth.labels) kk += static_cast<std::size_t>(l);
                if (kk == 0) kk = 2;
            }
            const double jac = stability_test(adapter, image, rec.prompt, config, kk).jaccard;
            s.per_prompt.push_back(jac);
            total += jac;
        } catch (const Error& e) {
            if (e.code() == ErrorCode::kAdapterUnavailable) throw;
            log_failure(rec, e);
            ++s.failures;
        }
    }
    s.mean_jaccard = s.per_prompt.empty() ? std::nan("") : total / static_cast<double>(s.per_prompt.size());
    return s;
}

ConsistencySummary run_consistency(Adapter& adapter, const std::vector<CorpusRecord>& corpus,
                                   const ExplainConfig& config, std::size_t repeats) {
    ConsistencySummary s;
    for (const auto& rec : corpus) {
        try {
            const auto image = ImageRef::from_file(rec.image);
            std::vector<ExplanationReport> reports;
            for (std::size_t r = 0; r < repeats; ++r) {
                ExplainConfig c = config;
                c.seed = config.seed + r;
                reports.push_back(explain(adapter, image, rec.prompt, c));
            }
            auto res = consistency_test(reports);
            s.mean_variance += res.mean_variance;
            s.mean_stddev += res.mean_stddev;
            s.per_prompt.push_back(std::move(res));
        } catch (const Error& e) {
            if (e.code() == ErrorCode::kAdapterUnavailable) throw;
            log_failure(rec, e);
            ++s.failures;
        }
    }
    if (!s.per_prompt.empty()) {
        s.mean_variance /= static_cast<double>(s.per_prompt.size());
        s.mean_stddev /= static_cast<double>(s.per_prompt.size());
    }
    return s;
}

FidelityRow fidelity_cell(Adapter& adapter, const std::vector<CorpusRecord>& corpus, ExplainConfig config) {
    FidelityRow row;
    row.n_perturbations = config.n_perturbations;
    row.text_distance = config.text_distance;
    row.image_distance = config.image_distance;
    row.method = config.method;
    row.norm_p = config.norm_p;
    FidelityReport& m = row.mean;
    for (const auto& rec : corpus) {
        try {
            const auto image = ImageRef::from_file(rec.image);
            const auto f = explain(adapter, image, rec.prompt, config).fidelity;
            m.r2 += f.r2;
            m.r2_weighted += f.r2_weighted;
            m.r2_weighted_adjusted += f.r2_weighted_adjusted;
            m.wmse += f.wmse;
            m.wmae += f.wmae;
            m.l1 += f.l1;
            m.l2 += f.l2;
            m.n_samples += f.n_samples;
            m.n_variables += f.n_variables;
            ++row.records;
        } catch (const Error& e) {
            if (e.code() == ErrorCode::kAdapterUnavailable) throw;
            log_failure(rec, e);
            ++row.failures;
        }
    }
    if (row.records > 0) {
        const double n = static_cast<double>(row.records);
        m.r2 /= n;
        m.r2_weighted /= n;
        m.r2_weighted_adjusted /= n;
        m.wmse /= n;
        m.wmae /= n;
        m.l1 /= n;
        m.l2 /= n;
        m.n_samples /= row.records;
        m.n_variables /= row.records;
    }
    return row;
}

std::vector<FidelityRow> run_fidelity(Adapter& adapter, const std::vector<CorpusRecord>& corpus,
                                      const ExplainConfig& config, const std::vector<std::size_t>& counts,
                                      const std::vector<double>& norm_orders) {
    std::vector<FidelityRow> rows;
    for (double p : norm_orders) {
        for (std::size_t n : counts) {
            ExplainConfig c = config;
            c.norm_p = p;
            c.n_perturbations = n;
            c.text_distance = TextDistance::kWmd;
            c.image_distance = ImageDistance::kWasserstein;
            c.method = SurrogateMethod::kWeightedLeastSquares;
            rows.push_back(fidelity_cell(adapter, corpus, c));
        }
        for (auto text : {TextDistance::kCosine, TextDistance::kWmd}) {
            for (auto img : {ImageDistance::kCosine, ImageDistance::kWasserstein}) {
                for (auto method : {SurrogateMethod::kWeightedLeastSquares, SurrogateMethod::kBayesianRidge}) {
                    ExplainConfig c = config;
                    c.norm_p = p;
                    c.text_distance = text;
                    c.image_distance = img;
                    c.method = method;
                    rows.push_back(fidelity_cell(adapter, corpus, c));
                }
            }
        }
    }
    return rows;
}

std::string to_string(BenchMethod m) {
    switch (m) {
        case BenchMethod::kLimeWeights: return "lime-weights";
        case BenchMethod::kSmileWeights: return "smile-weights";
        case BenchMethod::kBayes: return "bayes";
    }
    return "?";
}

BenchMethod parse_bench_method(const std::string& s) {
    if (s == "lime-weights" || s == "lime") return BenchMethod::kLimeWeights;
    if (s == "smile-weights" || s == "smile") return BenchMethod::kSmileWeights;
    if (s == "bayes" || s == "baylime") return BenchMethod::kBayes;
    throw Error(ErrorCode::kInvalidArgument, "unknown bench method '" + s + "'");
}

ExplainConfig configure_bench_method(ExplainConfig base, BenchMethod m) {
    switch (m) {
        case BenchMethod::kLimeWeights:
            base.text_distance = TextDistance::kCosine;
            base.kernel_form = KernelForm::kConventional;
            base.method = SurrogateMethod::kWeightedLeastSquares;
            break;
        case BenchMethod::kSmileWeights:
            base.text_distance = TextDistance::kWmd;
            base.kernel_form = KernelForm::kPaper;
            base.method = SurrogateMethod::kWeightedLeastSquares;
            break;
        case BenchMethod::kBayes:
            base.text_distance = TextDistance::kCosine;
            base.kernel_form = KernelForm::kConventional;
            base.method = SurrogateMethod::kBayesianRidge;
            break;
    }
    return base;
}

namespace {

std::string framework_of(BenchMethod m) {
    switch (m) {
        case BenchMethod::kLimeWeights: return "LIME";
        case BenchMethod::kSmileWeights: return "SMILE";
        case BenchMethod::kBayes: return "Bay-LIME";
    }
    return "?";
}

}  // namespace

std::vector<BenchRow> run_bench(Adapter& adapter, const std::vector<CorpusRecord>& corpus, const ExplainConfig& config,
                                const std::vector<BenchMethod>& methods, int repeats) {
    std::vector<BenchRow> rows;
    for (const auto& rec : corpus) {
        const auto image = ImageRef::from_file(rec.image);
        for (BenchMethod m : methods) {
            BenchRow row;
            row.framework = framework_of(m);
            row.method = m;
            row.prompt = rec.prompt;
            const ExplainConfig c = configure_bench_method(config, m);
            // Minimum over repeats; the first run's design hash is kept.
            for (int r = 0; r < std::max(1, repeats); ++r) {
                ExplainTimings t;
                const auto report = explain(adapter, image, rec.prompt, c, &t);
                if (r == 0) {
                    row.perturbation_hash = perturbation_hash(report.perturbations);
                    row.adapter_seconds = t.adapter_seconds;
                    row.engine_seconds = t.engine_seconds;
                } else {
                    row.adapter_seconds = std::min(row.adapter_seconds, t.adapter_seconds);
                    row.engine_seconds = std::min(row.engine_seconds, t.engine_seconds);
                }
            }
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

}  // namespace smile
