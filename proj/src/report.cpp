#include "smile/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <system_error>

#include "smile/error.hpp"
#include "smile/hash.hpp"

namespace smile {

using nlohmann::json;

namespace {

json number_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

std::string fmt17(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string html_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            case '\'': out += "&#39;"; break;
            default: out.push_back(c);
        }
    }
    return out;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    return out + "\"";
}

}  // namespace

json config_to_json(const ExplainConfig& c) {
    return json{{"seed", c.seed},
                {"n_perturbations", c.n_perturbations},
                {"norm_p", c.norm_p},
                {"image_distance", to_string(c.image_distance)},
                {"text_distance", std::string(to_string(c.text_distance))},
                {"kernel_form", std::string(to_string(c.kernel_form))},
                {"sigma", c.sigma},
                {"sigma_scale", c.sigma_scale},
                {"embedder_seed", c.embedder_seed},
                {"embedder_dimension", c.embedder_dimension},
                {"method", to_string(c.method)},
                {"include_baseline_in_fit", c.include_baseline_in_fit},
                {"allow_empty_prompt", c.allow_empty_prompt},
                {"significance_filter", c.significance_filter},
                {"alpha", c.alpha},
                {"bootstrap_max_itr", c.bootstrap_max_itr},
                {"resample_scheme", to_string(c.resample_scheme)},
                {"parallelism", c.parallelism},
                {"retries", c.retries}};
}

ExplainConfig config_from_json(const json& j) {
    ExplainConfig c;
    try {
        c.seed = j.value("seed", c.seed);
        c.n_perturbations = j.value("n_perturbations", c.n_perturbations);
        c.norm_p = j.value("norm_p", c.norm_p);
        if (j.contains("image_distance")) c.image_distance = parse_image_distance(j.at("image_distance").get<std::string>());
        if (j.contains("text_distance")) c.text_distance = parse_text_distance(j.at("text_distance").get<std::string>());
        if (j.contains("kernel_form")) c.kernel_form = parse_kernel_form(j.at("kernel_form").get<std::string>());
        c.sigma = j.value("sigma", c.sigma);
        c.sigma_scale = j.value("sigma_scale", c.sigma_scale);
        c.embedder_seed = j.value("embedder_seed", c.embedder_seed);
        c.embedder_dimension = j.value("embedder_dimension", c.embedder_dimension);
        if (j.contains("method")) c.method = parse_surrogate_method(j.at("method").get<std::string>());
        c.include_baseline_in_fit = j.value("include_baseline_in_fit", c.include_baseline_in_fit);
        c.allow_empty_prompt = j.value("allow_empty_prompt", c.allow_empty_prompt);
        c.significance_filter = j.value("significance_filter", c.significance_filter);
        c.alpha = j.value("alpha", c.alpha);
        c.bootstrap_max_itr = j.value("bootstrap_max_itr", c.bootstrap_max_itr);
        if (j.contains("resample_scheme"))
            c.resample_scheme = parse_resample_scheme(j.at("resample_scheme").get<std::string>());
        c.parallelism = j.value("parallelism", c.parallelism);
        c.retries = j.value("retries", c.retries);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::kInvalidArgument, std::string("config: ") + e.what());
    }
    return c;
}

json report_to_json(const ExplanationReport& r) {
    json masks = json::array();
    for (const auto& m : r.perturbations.masks) {
        std::string bits;
        for (auto b : m) bits.push_back(b ? '1' : '0');
        masks.push_back(bits);
    }
    json distances = json::array();
    for (double d : r.distances) distances.push_back(number_or_null(d));
    json p_values = json::array();
    for (const auto& p : r.p_values) p_values.push_back(p ? json(*p) : json(nullptr));
    json dropped = json::array();
    for (const auto& d : r.dropped) dropped.push_back(json{{"row", d.row}, {"reason", d.reason}});

    json tokens = json::array();
    for (std::size_t i = 0; i < r.prompt.size(); ++i) {
        tokens.push_back(json{{"token", r.prompt.tokens[i]},
                              {"coefficient", r.fit.coefficients[i]},
                              {"importance", r.normalized_importance[i]},
                              {"sign", r.signs[i]}});
    }

    const auto& f = r.fidelity;
    return json{
        {"schema", "smile.explanation/1"},
        {"prompt", json{{"raw", r.prompt.raw}, {"tokens", r.prompt.tokens}}},
        {"image_digest", r.image_digest},
        {"adapter_id", r.adapter_id},
        {"embedder", r.embedder_name},
        {"config", config_to_json(r.config)},
        {"perturbations",
         json{{"seed", r.perturbations.seed},
              {"requested", r.perturbations.requested},
              {"count", r.perturbations.size()},
              {"hash", perturbation_hash(r.perturbations)},
              {"masks", masks},
              {"prompts", r.perturbations.prompts}}},
        {"distances", distances},
        {"p_values", p_values},
        {"weights",
         json{{"text_distance", std::string(to_string(r.weights.text_distance))},
              {"kernel_form", std::string(to_string(r.weights.kernel_form))},
              {"sigma", r.weights.sigma},
              {"distance", r.weights.distance},
              {"weight", r.weights.weight}}},
        {"fit_rows", r.fit_rows},
        {"dropped", dropped},
        {"fit",
         json{{"method", to_string(r.fit.method)},
              {"coefficients", r.fit.coefficients},
              {"intercept", r.fit.intercept},
              {"weighted_loss", r.fit.weighted_loss},
              {"condition_diagnostic", number_or_null(r.fit.condition_diagnostic)},
              {"ridge_lambda", r.fit.ridge_lambda},
              {"degenerate_columns", r.fit.degenerate_columns},
              {"alpha_noise", r.fit.alpha_noise},
              {"lambda_prior", r.fit.lambda_prior},
              {"iterations", r.fit.iterations}}},
        {"tokens", tokens},
        {"normalized_importance", r.normalized_importance},
        {"fidelity",
         json{{"r2", number_or_null(f.r2)},
              {"r2_weighted", number_or_null(f.r2_weighted)},
              {"r2_weighted_adjusted", number_or_null(f.r2_weighted_adjusted)},
              {"wmse", number_or_null(f.wmse)},
              {"wmae", number_or_null(f.wmae)},
              {"l1", number_or_null(f.l1)},
              {"l2", number_or_null(f.l2)},
              {"n_samples", f.n_samples},
              {"n_variables", f.n_variables}}},
    };
}

std::string report_to_csv(const ExplanationReport& r) {
    std::string out = "token,coefficient,importance\n";
    for (std::size_t i = 0; i < r.prompt.size(); ++i) {
        out += csv_field(r.prompt.tokens[i]) + "," + fmt17(r.fit.coefficients[i]) + "," +
               fmt17(r.normalized_importance[i]) + "\n";
    }
    return out;
}

Rgb heatmap_color(double importance) {
    constexpr Rgb kLight{255, 255, 255};
    constexpr Rgb kDark{139, 0, 0};
    const double t = std::clamp(std::isfinite(importance) ? importance : 0.0, 0.0, 1.0);
    auto lerp = [t](int a, int b) { return static_cast<int>(std::lround(a + (b - a) * t)); };
    return Rgb{lerp(kLight.r, kDark.r), lerp(kLight.g, kDark.g), lerp(kLight.b, kDark.b)};
}

std::string report_to_html(const ExplanationReport& r) {
    std::ostringstream html;
    html << "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n"
         << "<title>Word attribution: " << html_escape(r.prompt.normalized()) << "</title>\n"
         << "<style>\n"
         << "body{font-family:sans-serif;margin:2em;background:#ffffff;color:#222}\n"
         << ".tok{display:inline-block;padding:.35em .6em;margin:.15em;border:1px solid #999;border-radius:.4em}\n"
         << ".val{display:block;font-size:.75em;text-align:center}\n"
         << "table{border-collapse:collapse;margin-top:1.5em}td,th{border:1px solid #ccc;padding:.2em .6em;text-align:left}\n"
         << "</style>\n</head>\n<body>\n<h1>Word attribution</h1>\n<div class=\"heatmap\">\n";
    for (std::size_t i = 0; i < r.prompt.size(); ++i) {
        const double imp = r.normalized_importance[i];
        const Rgb c = heatmap_color(imp);
        const bool dark = imp > 0.55;
        html << "<span class=\"tok\" data-token-index=\"" << i << "\" data-importance=\"" << fmt17(imp)
             << "\" data-coefficient=\"" << fmt17(r.fit.coefficients[i]) << "\" style=\"background:rgb(" << c.r << ","
             << c.g << "," << c.b << ");color:" << (dark ? "#fff" : "#000") << "\">" << html_escape(r.prompt.tokens[i])
             << "<span class=\"val\">" << std::fixed;
        html.precision(2);
        html << imp << "</span></span>\n";
        html.unsetf(std::ios::fixed);
    }
    html.precision(6);
    html << "</div>\n<table>\n"
         << "<tr><th>adapter</th><td>" << html_escape(r.adapter_id) << "</td></tr>\n"
         << "<tr><th>image digest</th><td>" << html_escape(r.image_digest) << "</td></tr>\n"
         << "<tr><th>method</th><td>" << to_string(r.fit.method) << "</td></tr>\n"
         << "<tr><th>text distance / kernel</th><td>" << to_string(r.weights.text_distance) << " / "
         << to_string(r.weights.kernel_form) << " (sigma " << r.weights.sigma << ")</td></tr>\n"
         << "<tr><th>perturbations</th><td>" << r.perturbations.size() << " (seed " << r.config.seed << ", "
         << r.fit_rows.size() << " fitted)</td></tr>\n"
         << "<tr><th>norm order p</th><td>" << r.config.norm_p << "</td></tr>\n"
         << "<tr><th>weighted R&sup2;</th><td>" << r.fidelity.r2_weighted << "</td></tr>\n"
         << "</table>\n</body>\n</html>\n";
    return html.str();
}

void write_files_atomically(const std::vector<std::pair<std::filesystem::path, std::string>>& files) {
    std::vector<std::filesystem::path> temps;
    auto cleanup = [&] {
        std::error_code ec;
        for (const auto& t : temps) std::filesystem::remove(t, ec);
    };
    for (const auto& [path, content] : files) {
        auto tmp = path;
        tmp += ".partial";
        temps.push_back(tmp);
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << content;
        out.close();
        if (!out) {
            cleanup();
            throw Error(ErrorCode::kIoError, "cannot write '" + tmp.string() + "'");
        }
    }
    for (std::size_t i = 0; i < files.size(); ++i) {
        std::error_code ec;
        std::filesystem::rename(temps[i], files[i].first, ec);
        if (ec) {
            cleanup();
            throw Error(ErrorCode::kIoError, "cannot move '" + files[i].first.string() + "' into place: " + ec.message());
        }
    }
}

}  // namespace smile
