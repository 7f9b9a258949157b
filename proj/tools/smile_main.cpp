// smile: explain, evaluate, bootstrap, bench.
//
// Exit codes: 0 success, 1 internal error, 2 adapter failure, 3 bad arguments
// or unreadable inputs.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include "smile/adapter.hpp"
#include "smile/cache.hpp"
#include "smile/distance.hpp"
#include "smile/error.hpp"
#include "smile/evaluation.hpp"
#include "smile/explain.hpp"
#include "smile/report.hpp"

namespace fs = std::filesystem;
using smile::ErrorCode;

namespace {

constexpr int kExitInternal = 1;
constexpr int kExitAdapter = 2;
constexpr int kExitArguments = 3;

struct CommonFlags {
    std::string adapter;
    std::uint64_t seed = 0;
    std::size_t perturbations = 64;
    double norm_p = 2.0;
    double sigma = 0.0;
    std::string kernel_form = "paper";
    std::string method = "wls";
    std::string text_distance = "wmd";
    std::string image_distance = "wd";
    double alpha = 0.05;
    bool significance = false;
    std::uint64_t max_itr = 100000;
    std::string scheme = "disjoint";
    unsigned parallelism = 1;
    int retries = 2;
    bool include_baseline = false;
    bool allow_empty = false;
    std::string cache_dir;
    std::string out_dir = ".";
};

void add_common(CLI::App* cmd, CommonFlags& f, bool with_explain_flags = true) {
    cmd->add_option("--adapter", f.adapter, "synthetic:<spec> | exec:<command> | http:<url> (default $SMILE_ADAPTER)");
    cmd->add_option("--seed", f.seed, "Random seed");
    cmd->add_option("--out-dir", f.out_dir, "Output directory");
    if (!with_explain_flags) return;
    cmd->add_option("--perturbations", f.perturbations, "Perturbations per explanation, baseline included");
    cmd->add_option("--norm-p", f.norm_p, "Norm order of the image embedding distance")->check(CLI::Range(1.0, 1e9));
    cmd->add_option("--sigma", f.sigma, "Kernel width (<= 0: scaled from the largest text distance)");
    cmd->add_option("--kernel-form", f.kernel_form, "paper | conventional")->check(CLI::IsMember({"paper", "conventional"}));
    cmd->add_option("--method", f.method, "wls | bayes")->check(CLI::IsMember({"wls", "bayes", "bayesian-ridge"}));
    cmd->add_option("--text-distance", f.text_distance, "wmd | cosine")->check(CLI::IsMember({"wmd", "wd", "cosine"}));
    cmd->add_option("--image-distance", f.image_distance, "wd | cosine")->check(CLI::IsMember({"wd", "cosine"}));
    cmd->add_option("--alpha", f.alpha, "Significance level for --significance")->check(CLI::Range(1e-12, 1.0 - 1e-12));
    cmd->add_flag("--significance", f.significance, "Drop perturbations whose bootstrap p-value exceeds alpha");
    cmd->add_option("--max-itr", f.max_itr, "Bootstrap iterations");
    cmd->add_option("--scheme", f.scheme, "Bootstrap resampling: disjoint | independent")
        ->check(CLI::IsMember({"disjoint", "independent"}));
    cmd->add_option("--parallelism", f.parallelism, "Concurrent adapter requests")->check(CLI::PositiveNumber);
    cmd->add_option("--retries", f.retries, "Retries per failed adapter request");
    cmd->add_flag("--include-baseline", f.include_baseline, "Use the unperturbed prompt as a regression sample");
    cmd->add_flag("--allow-empty", f.allow_empty, "Allow masks that drop every word");
    cmd->add_option("--cache-dir", f.cache_dir, "Persistent embedding cache directory");
}

smile::ExplainConfig make_config(const CommonFlags& f) {
    smile::ExplainConfig c;
    c.seed = f.seed;
    c.n_perturbations = f.perturbations;
    c.norm_p = f.norm_p;
    c.sigma = f.sigma;
    c.kernel_form = smile::parse_kernel_form(f.kernel_form);
    c.method = smile::parse_surrogate_method(f.method);
    c.text_distance = smile::parse_text_distance(f.text_distance);
    c.image_distance = smile::parse_image_distance(f.image_distance);
    c.alpha = f.alpha;
    c.significance_filter = f.significance;
    c.bootstrap_max_itr = f.max_itr;
    c.resample_scheme = smile::parse_resample_scheme(f.scheme);
    c.parallelism = f.parallelism;
    c.retries = f.retries;
    c.include_baseline_in_fit = f.include_baseline;
    c.allow_empty_prompt = f.allow_empty;
    return c;
}

// Owns the transport and the optional cache layer.
struct AdapterStack {
    std::unique_ptr<smile::Adapter> base;
    std::unique_ptr<smile::EmbeddingCache> cache;
    std::unique_ptr<smile::CachingAdapter> cached;

    smile::Adapter& get() { return cached ? static_cast<smile::Adapter&>(*cached) : *base; }
};

AdapterStack open_adapter(const CommonFlags& f) {
    std::string selector = f.adapter;
    if (selector.empty()) {
        if (const char* env = std::getenv("SMILE_ADAPTER")) selector = env;
    }
    if (selector.empty()) throw smile::Error(ErrorCode::kInvalidArgument, "no adapter: pass --adapter or set SMILE_ADAPTER");
    AdapterStack stack;
    try {
        stack.base = smile::make_adapter(selector);
    } catch (const smile::Error& e) {
        if (e.code() == ErrorCode::kIoError || e.code() == ErrorCode::kInvalidArgument) throw;
        throw smile::Error(ErrorCode::kAdapterUnavailable, e.what());
    }
    if (!f.cache_dir.empty()) {
        stack.cache = std::make_unique<smile::EmbeddingCache>(f.cache_dir);
        stack.cached = std::make_unique<smile::CachingAdapter>(*stack.base, *stack.cache);
    }
    return stack;
}

int exit_code_for(const smile::Error& e) {
    switch (e.code()) {
        case ErrorCode::kAdapterUnavailable:
        case ErrorCode::kAdapterMalformedResponse:
        case ErrorCode::kProtocolViolation:
        case ErrorCode::kPartialFailure:
            return kExitAdapter;
        case ErrorCode::kEmptyPrompt:
        case ErrorCode::kInvalidArgument:
        case ErrorCode::kIoError:
        case ErrorCode::kInfeasibleRequest:
        case ErrorCode::kInvalidNorm:
        case ErrorCode::kNonpositiveSigma:
        case ErrorCode::kSampleTooSmall:
        case ErrorCode::kEmptySample:
            return kExitArguments;
        default:
            return kExitInternal;
    }
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw smile::Error(ErrorCode::kIoError, "cannot create output directory '" + dir.string() + "'");
}

std::string fmt(double x, int digits = 4) {
    if (std::isnan(x)) return "nan";
    std::ostringstream ss;
    ss << std::fixed << std::setprecision(digits) << x;
    return ss.str();
}

std::string g6(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", x);
    return buf;
}

// ---------------------------------------------------------------------------

int cmd_explain(const CommonFlags& f, const std::string& image_path, const std::string& prompt) {
    const auto image = smile::ImageRef::from_file(image_path);
    const auto config = make_config(f);
    auto stack = open_adapter(f);
    const auto report = smile::explain(stack.get(), image, prompt, config);

    const fs::path dir = f.out_dir;
    ensure_dir(dir);
    smile::write_files_atomically({{dir / "report.json", smile::report_to_json(report).dump(2) + "\n"},
                                   {dir / "heatmap.html", smile::report_to_html(report)},
                                   {dir / "importance.csv", smile::report_to_csv(report)}});

    std::cout << "adapter " << report.adapter_id << ", " << report.perturbations.size() << " perturbations, "
              << report.fit_rows.size() << " fitted\n";
    for (std::size_t i = 0; i < report.prompt.size(); ++i) {
        std::cout << "  " << std::left << std::setw(20) << report.prompt.tokens[i] << " "
                  << fmt(report.normalized_importance[i], 3) << "  (coef " << g6(report.fit.coefficients[i]) << ")\n";
    }
    std::cout << "wrote " << (dir / "report.json").string() << ", heatmap.html, importance.csv\n";
    return 0;
}

int cmd_evaluate(const CommonFlags& f, const std::string& suite, const std::string& corpus_path, std::size_t repeats,
                 std::size_t top_k, std::vector<std::size_t> counts, std::vector<double> norm_orders) {
    const auto corpus = smile::load_corpus(corpus_path);
    if (corpus.empty()) throw smile::Error(ErrorCode::kInvalidArgument, "corpus '" + corpus_path + "' has no records");
    for (const auto& r : corpus) {
        if (!fs::exists(r.image)) throw smile::Error(ErrorCode::kIoError, "corpus image '" + r.image + "' not found");
    }
    const auto config = make_config(f);
    auto stack = open_adapter(f);
    auto& adapter = stack.get();
    const std::string model = adapter.model_id();
    const fs::path dir = f.out_dir;
    ensure_dir(dir);
    std::vector<std::pair<fs::path, std::string>> files;
    std::ostringstream console;

    const bool all = suite == "all";
    if (all || suite == "accuracy") {
        const auto s = smile::run_accuracy(adapter, corpus, config);
        std::ostringstream csv, txt;
        csv << "model,att_acc,att_f1,att_auroc,records,failures\n"
            << model << "," << s.mean_accuracy << "," << s.mean_f1 << "," << s.mean_auroc << "," << s.rows.size() << ","
            << s.failures << "\n";
        txt << "Attribution accuracy (" << s.rows.size() << " prompts, " << s.failures << " failed)\n"
            << std::left << std::setw(24) << "Model" << std::setw(10) << "ATT ACC" << std::setw(10) << "ATT F1"
            << "ATT AUROC\n"
            << std::setw(24) << model << std::setw(10) << fmt(s.mean_accuracy, 3) << std::setw(10) << fmt(s.mean_f1, 3)
            << fmt(s.mean_auroc, 3) << "\n";
        files.push_back({dir / "accuracy.csv", csv.str()});
        files.push_back({dir / "accuracy.txt", txt.str()});
        console << txt.str() << "\n";
    }
    if (all || suite == "stability") {
        const auto s = smile::run_stability(adapter, corpus, config, top_k);
        std::ostringstream csv, txt;
        csv << "model,jaccard,records,failures\n"
            << model << "," << s.mean_jaccard << "," << s.per_prompt.size() << "," << s.failures << "\n";
        txt << "Stability (\"###\" suffix, " << s.per_prompt.size() << " prompts)\n"
            << std::left << std::setw(24) << "Model" << "Jaccard Index\n"
            << std::setw(24) << model << fmt(s.mean_jaccard, 2) << "\n";
        files.push_back({dir / "stability.csv", csv.str()});
        files.push_back({dir / "stability.txt", txt.str()});
        console << txt.str() << "\n";
    }
    if (all || suite == "consistency") {
        const auto s = smile::run_consistency(adapter, corpus, config, repeats);
        std::ostringstream csv, txt;
        csv << "model,variance,std,repeats,records,failures\n"
            << model << "," << s.mean_variance << "," << s.mean_stddev << "," << repeats << "," << s.per_prompt.size()
            << "," << s.failures << "\n";
        txt << "Consistency (" << repeats << " repeats per prompt)\n"
            << std::left << std::setw(24) << "Model" << std::setw(12) << "Variance" << "Std\n"
            << std::setw(24) << model << std::setw(12) << fmt(s.mean_variance) << fmt(s.mean_stddev) << "\n";
        files.push_back({dir / "consistency.csv", csv.str()});
        files.push_back({dir / "consistency.txt", txt.str()});
        console << txt.str() << "\n";
    }
    if (all || suite == "fidelity") {
        const auto rows = smile::run_fidelity(adapter, corpus, config, counts, norm_orders);
        std::ostringstream csv, txt;
        csv << "n_perturbations,text_distance,image_distance,surrogate,norm_p,mse,r2_w,mae,l1,l2,r2_w_adj,records,failures\n";
        txt << "Fidelity (model " << model << ")\n"
            << std::left << std::setw(8) << "N" << std::setw(8) << "Text" << std::setw(8) << "Image" << std::setw(16)
            << "Surrogate" << std::setw(6) << "p" << std::setw(10) << "MSE" << std::setw(10) << "R2_w" << std::setw(10)
            << "MAE" << std::setw(10) << "L1" << std::setw(10) << "L2" << "R2_w_adj\n";
        for (const auto& r : rows) {
            const auto& m = r.mean;
            const std::string text = r.text_distance == smile::TextDistance::kWmd ? "WD" : "Cosine";
            const std::string img = r.image_distance == smile::ImageDistance::kWasserstein ? "WD" : "Cosine";
            const std::string sur = r.method == smile::SurrogateMethod::kWeightedLeastSquares ? "WLR" : "BayLIME";
            csv << r.n_perturbations << "," << text << "," << img << "," << sur << "," << r.norm_p << "," << m.wmse << ","
                << m.r2_weighted << "," << m.wmae << "," << m.l1 << "," << m.l2 << "," << m.r2_weighted_adjusted << ","
                << r.records << "," << r.failures << "\n";
            txt << std::setw(8) << r.n_perturbations << std::setw(8) << text << std::setw(8) << img << std::setw(16) << sur
                << std::setw(6) << g6(r.norm_p) << std::setw(10) << fmt(m.wmse) << std::setw(10) << fmt(m.r2_weighted)
                << std::setw(10) << fmt(m.wmae) << std::setw(10) << fmt(m.l1) << std::setw(10) << fmt(m.l2)
                << fmt(m.r2_weighted_adjusted) << "\n";
        }
        files.push_back({dir / "fidelity.csv", csv.str()});
        files.push_back({dir / "fidelity.txt", txt.str()});
        console << txt.str() << "\n";
    }
    if (files.empty()) throw smile::Error(ErrorCode::kInvalidArgument, "unknown suite '" + suite + "'");
    smile::write_files_atomically(files);
    std::cout << console.str();
    return 0;
}

std::vector<double> read_samples(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw smile::Error(ErrorCode::kIoError, "cannot read sample file '" + path + "'");
    std::vector<double> out;
    std::string line;
    for (int n = 1; std::getline(in, line); ++n) {
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto last = line.find_last_not_of(" \t\r");
        const std::string text = line.substr(first, last - first + 1);
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(text, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != text.size() || !std::isfinite(v))
            throw smile::Error(ErrorCode::kInvalidArgument, path + ":" + std::to_string(n) + ": not a real number");
        out.push_back(v);
    }
    return out;
}

int cmd_bootstrap(const CommonFlags& f, const std::string& a, const std::string& b, std::uint64_t max_itr,
                  const std::string& scheme, unsigned parallelism) {
    const auto x = read_samples(a);
    const auto y = read_samples(b);
    smile::BootstrapOptions opts;
    opts.max_itr = max_itr;
    opts.seed = f.seed;
    opts.scheme = smile::parse_resample_scheme(scheme);
    opts.parallelism = parallelism;
    const auto res = smile::bootstrap_pvalue(x, y, opts);

    // Filtering keeps a perturbation only when its distance distribution
    // differs from the reference at level alpha.
    const bool significant = res.p_value <= f.alpha;
    std::cout << "p_value " << g6(res.p_value) << "\n" << "wd " << g6(res.observed_wd) << "\n"
              << "significant " << (significant ? "yes" : "no") << " (alpha " << g6(f.alpha) << ")\n";
    const nlohmann::json j{{"p_value", res.p_value},
                           {"wd", res.observed_wd},
                           {"alpha", f.alpha},
                           {"significant", significant},
                           {"exceed_count", res.exceed_count},
                           {"max_itr", res.iterations},
                           {"seed", opts.seed},
                           {"scheme", smile::to_string(opts.scheme)},
                           {"n_x", x.size()},
                           {"n_y", y.size()}};
    const fs::path dir = f.out_dir;
    ensure_dir(dir);
    smile::write_files_atomically({{dir / "bootstrap.json", j.dump(2) + "\n"}});
    return 0;
}

int cmd_bench(const CommonFlags& f, const std::string& corpus_path, const std::vector<std::string>& method_names,
              int repeats) {
    const auto corpus = smile::load_corpus(corpus_path);
    if (corpus.empty()) throw smile::Error(ErrorCode::kInvalidArgument, "corpus '" + corpus_path + "' has no records");
    for (const auto& r : corpus) {
        if (!fs::exists(r.image)) throw smile::Error(ErrorCode::kIoError, "corpus image '" + r.image + "' not found");
    }
    std::vector<smile::BenchMethod> methods;
    for (const auto& m : method_names) methods.push_back(smile::parse_bench_method(m));
    const auto config = make_config(f);
    auto stack = open_adapter(f);
    const auto rows = smile::run_bench(stack.get(), corpus, config, methods, repeats);

    std::ostringstream csv, txt;
    csv << "framework,method,prompt,perturbation_hash,adapter_seconds,engine_seconds\n";
    txt << "Execution time, " << config.n_perturbations << " perturbations\n"
        << std::left << std::setw(10) << "Framework" << std::setw(15) << "Method" << std::setw(18) << "Design hash"
        << std::setw(14) << "Adapter (s)" << std::setw(14) << "Engine (s)" << "Prompt\n";
    for (const auto& r : rows) {
        std::string quoted = "\"";
        for (char c : r.prompt) quoted += (c == '"') ? std::string("\"\"") : std::string(1, c);
        quoted += "\"";
        csv << r.framework << "," << smile::to_string(r.method) << "," << quoted << "," << r.perturbation_hash << ","
            << g6(r.adapter_seconds) << "," << g6(r.engine_seconds) << "\n";
        txt << std::setw(10) << r.framework << std::setw(15) << smile::to_string(r.method) << std::setw(18)
            << r.perturbation_hash << std::setw(14) << fmt(r.adapter_seconds, 6) << std::setw(14)
            << fmt(r.engine_seconds, 6) << r.prompt << "\n";
    }
    const fs::path dir = f.out_dir;
    ensure_dir(dir);
    smile::write_files_atomically({{dir / "bench.csv", csv.str()}, {dir / "bench.txt", txt.str()}});
    std::cout << txt.str();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Word-level attribution for instruction-based image editing models"};
    app.require_subcommand(1);

    CommonFlags explain_flags, eval_flags, boot_flags, bench_flags;

    auto* explain = app.add_subcommand("explain", "Explain one (image, prompt) pair");
    std::string image_path, prompt;
    explain->add_option("image", image_path, "Input image")->required();
    explain->add_option("prompt", prompt, "Editing instruction")->required();
    add_common(explain, explain_flags);

    auto* evaluate = app.add_subcommand("evaluate", "Run an evaluation suite over a prompt corpus");
    std::string suite = "all", corpus;
    std::size_t repeats = 10, top_k = 0;
    std::vector<std::size_t> counts{32, 64, 128, 256};
    std::vector<double> norm_orders;
    evaluate->add_option("--suite", suite, "accuracy | stability | consistency | fidelity | all")
        ->check(CLI::IsMember({"accuracy", "stability", "consistency", "fidelity", "all"}));
    evaluate->add_option("--corpus", corpus, "Line-delimited JSON corpus")->required();
    evaluate->add_option("--repeats", repeats, "Runs per prompt for the consistency suite")->check(CLI::Range(2, 100000));
    evaluate->add_option("--top-k", top_k, "Top-k size for stability (0 = number of keyword tokens)");
    evaluate->add_option("--counts", counts, "Perturbation counts swept by the fidelity suite")->delimiter(',');
    evaluate->add_option("--norm-p-sweep", norm_orders, "Norm orders swept by the fidelity suite")->delimiter(',');
    add_common(evaluate, eval_flags);

    auto* bootstrap = app.add_subcommand("bootstrap", "Bootstrap p-value of the 1-D Wasserstein distance");
    std::string file_a, file_b;
    std::uint64_t boot_itr = 100000;
    std::string boot_scheme = "disjoint";
    unsigned boot_parallelism = 1;
    bootstrap->add_option("samples_a", file_a, "One real per line")->required();
    bootstrap->add_option("samples_b", file_b, "One real per line")->required();
    bootstrap->add_option("--max-itr", boot_itr, "Resampling iterations")->check(CLI::PositiveNumber);
    bootstrap->add_option("--scheme", boot_scheme, "disjoint | independent")
        ->check(CLI::IsMember({"disjoint", "independent"}));
    bootstrap->add_option("--parallelism", boot_parallelism, "Worker threads")->check(CLI::PositiveNumber);
    bootstrap->add_option("--alpha", boot_flags.alpha, "Significance level")->check(CLI::Range(1e-12, 1.0 - 1e-12));
    add_common(bootstrap, boot_flags, false);

    auto* bench = app.add_subcommand("bench", "Time the weighting/surrogate variants on identical designs");
    std::string bench_corpus;
    std::vector<std::string> methods{"lime-weights", "smile-weights", "bayes"};
    int bench_repeats = 3;
    bench->add_option("--corpus", bench_corpus, "Line-delimited JSON corpus")->required();
    bench->add_option("--methods", methods, "lime-weights, smile-weights, bayes")->delimiter(',');
    bench->add_option("--repeats", bench_repeats, "Timing repeats (minimum is reported)")->check(CLI::PositiveNumber);
    add_common(bench, bench_flags);
    bench_flags.perturbations = 60;

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitArguments;
    }

    try {
        if (*explain) return cmd_explain(explain_flags, image_path, prompt);
        if (*evaluate) {
            if (norm_orders.empty()) norm_orders.push_back(eval_flags.norm_p);
            return cmd_evaluate(eval_flags, suite, corpus, repeats, top_k, counts, norm_orders);
        }
        if (*bootstrap) return cmd_bootstrap(boot_flags, file_a, file_b, boot_itr, boot_scheme, boot_parallelism);
        if (*bench) return cmd_bench(bench_flags, bench_corpus, methods, bench_repeats);
    } catch (const smile::Error& e) {
        std::cerr << "smile: " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::cerr << "smile: " << e.what() << "\n";
        return kExitInternal;
    }
    return kExitInternal;
}
