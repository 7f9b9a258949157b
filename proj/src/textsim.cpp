#include "smile/textsim.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "smile/error.hpp"
#include "smile/hash.hpp"
#include "smile/transport.hpp"

namespace smile {

std::vector<std::vector<double>> WordEmbedder::embed_all(std::span<const std::string> words) const {
    std::vector<std::vector<double>> out;
    out.reserve(words.size());
    for (const auto& w : words) out.push_back(embed(w));
    return out;
}

HashEmbedder::HashEmbedder(std::uint64_t seed, std::size_t dimension) : seed_(seed), dimension_(dimension) {
    if (dimension == 0) throw Error(ErrorCode::kInvalidArgument, "embedder dimension must be positive");
}

std::string HashEmbedder::name() const { return "hash" + std::to_string(dimension_) + ":" + std::to_string(seed_); }

std::vector<double> HashEmbedder::embed(std::string_view word) const {
    std::mt19937_64 rng(derive_seed(seed_, fnv1a64(word)));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> v(dimension_);
    double norm2 = 0.0;
    do {
        norm2 = 0.0;
        for (auto& x : v) {
            x = normal(rng);
            norm2 += x * x;
        }
    } while (norm2 == 0.0);
    const double inv = 1.0 / std::sqrt(norm2);
    for (auto& x : v) x *= inv;
    return v;
}

TableEmbedder::TableEmbedder(std::string name, std::unordered_map<std::string, std::vector<double>> table)
    : name_(std::move(name)), table_(std::move(table)) {
    for (const auto& [word, vec] : table_) {
        if (dimension_ == 0) dimension_ = vec.size();
        if (vec.size() != dimension_) throw Error(ErrorCode::kLengthMismatch, "embedding table row '" + word + "'");
    }
    if (dimension_ == 0) throw Error(ErrorCode::kInvalidArgument, "empty embedding table");
}

std::vector<double> TableEmbedder::embed(std::string_view word) const {
    auto it = table_.find(std::string(word));
    if (it == table_.end()) return std::vector<double>(dimension_, 0.0);
    return it->second;
}

FunctionEmbedder::FunctionEmbedder(std::string name, std::size_t dimension, BatchFn fn)
    : name_(std::move(name)), dimension_(dimension), fn_(std::move(fn)) {}

std::vector<double> FunctionEmbedder::embed(std::string_view word) const {
    const std::string w(word);
    auto out = fn_(std::span<const std::string>(&w, 1));
    if (out.size() != 1 || out.front().size() != dimension_) {
        throw Error(ErrorCode::kAdapterMalformedResponse, "embedder returned wrong shape for '" + w + "'");
    }
    return std::move(out.front());
}

namespace {

struct Bow {
    std::vector<std::string> words;
    std::vector<double> mass;
};

Bow normalized_bow(std::span<const std::string> tokens) {
    std::map<std::string, int> counts;
    for (const auto& t : tokens) ++counts[t];
    Bow bow;
    for (const auto& [w, c] : counts) {
        bow.words.push_back(w);
        bow.mass.push_back(static_cast<double>(c) / static_cast<double>(tokens.size()));
    }
    return bow;
}

double euclidean(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

std::vector<double> mean_vector(std::span<const std::string> tokens, const WordEmbedder& embedder) {
    std::vector<double> mean(embedder.dimension(), 0.0);
    for (const auto& t : tokens) {
        const auto v = embedder.embed(t);
        for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += v[i];
    }
    for (auto& x : mean) x /= static_cast<double>(tokens.size());
    return mean;
}

}  // namespace

double wmd(std::span<const std::string> original, std::span<const std::string> perturbed,
           const WordEmbedder& embedder) {
    if (original.empty() || perturbed.empty()) throw Error(ErrorCode::kEmptyText, "WMD needs tokens on both sides");
    const Bow a = normalized_bow(original);
    const Bow b = normalized_bow(perturbed);
    const auto va = embedder.embed_all(a.words);
    const auto vb = embedder.embed_all(b.words);

    TransportProblem problem;
    problem.supply = a.mass;
    problem.demand = b.mass;
    problem.cost.resize(a.words.size() * b.words.size());
    for (std::size_t i = 0; i < a.words.size(); ++i)
        for (std::size_t j = 0; j < b.words.size(); ++j)
            problem.cost[i * b.words.size() + j] = euclidean(va[i], vb[j]);
    return std::max(0.0, solve_transport(problem).cost);
}

double cosine_text_distance(std::span<const std::string> original, std::span<const std::string> perturbed,
                            const WordEmbedder& embedder) {
    if (original.empty() || perturbed.empty()) throw Error(ErrorCode::kEmptyText, "cosine distance needs tokens on both sides");
    const auto a = mean_vector(original, embedder);
    const auto b = mean_vector(perturbed, embedder);
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 1.0;
    const double cos = std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
    return std::max(0.0, 1.0 - cos);
}

std::string_view to_string(KernelForm form) {
    return form == KernelForm::kPaper ? "paper" : "conventional";
}

std::string_view to_string(TextDistance d) { return d == TextDistance::kWmd ? "wmd" : "cosine"; }

KernelForm parse_kernel_form(std::string_view s) {
    if (s == "paper") return KernelForm::kPaper;
    if (s == "conventional") return KernelForm::kConventional;
    throw Error(ErrorCode::kInvalidArgument, "unknown kernel form '" + std::string(s) + "'");
}

TextDistance parse_text_distance(std::string_view s) {
    if (s == "wmd" || s == "wd") return TextDistance::kWmd;
    if (s == "cosine") return TextDistance::kCosine;
    throw Error(ErrorCode::kInvalidArgument, "unknown text distance '" + std::string(s) + "'");
}

double kernel_weight(double distance, double sigma, KernelForm form) {
    if (!(sigma > 0.0)) throw Error(ErrorCode::kNonpositiveSigma, "sigma = " + std::to_string(sigma));
    if (!(distance >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "distance must be nonnegative");
    if (form == KernelForm::kPaper) {
        const double r = distance / (sigma * sigma);
        return std::exp(-(r * r));
    }
    return std::exp(-(distance * distance) / (sigma * sigma));
}

double adaptive_sigma(double max_distance, double scale, KernelForm form) {
    if (!(max_distance > 0.0) || !(scale > 0.0)) return 1.0;
    const double width = scale * max_distance;
    return form == KernelForm::kPaper ? std::sqrt(width) : width;
}

SampleWeights weigh_perturbations(const TokenizedPrompt& original, const PerturbationSet& set,
                                  const WordEmbedder& embedder, const WeightingOptions& options) {
    if (set.size() == 0) throw Error(ErrorCode::kInvalidArgument, "empty perturbation set");
    SampleWeights out;
    out.kernel_form = options.kernel_form;
    out.text_distance = options.text_distance;
    out.distance.reserve(set.size());
    std::vector<std::string> kept;
    for (const auto& mask : set.masks) {
        if (mask.size() != original.size()) throw Error(ErrorCode::kLengthMismatch, "mask width");
        kept.clear();
        for (std::size_t i = 0; i < mask.size(); ++i)
            if (mask[i]) kept.push_back(original.tokens[i]);
        out.distance.push_back(options.text_distance == TextDistance::kWmd
                                   ? wmd(original.tokens, kept, embedder)
                                   : cosine_text_distance(original.tokens, kept, embedder));
    }
    if (options.sigma > 0.0) {
        out.sigma = options.sigma;
    } else {
        const double max_d = *std::max_element(out.distance.begin(), out.distance.end());
        out.sigma = adaptive_sigma(max_d, options.sigma_scale, options.kernel_form);
    }
    out.weight.reserve(set.size());
    for (double d : out.distance) out.weight.push_back(kernel_weight(d, out.sigma, options.kernel_form));
    return out;
}

}  // namespace smile
