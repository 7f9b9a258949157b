#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "smile/perturbation.hpp"

namespace smile {

/// Word -> vector map used as the WMD ground metric. Implementations must be
/// deterministic and safe for concurrent reads.
class WordEmbedder {
public:
    virtual ~WordEmbedder() = default;
    virtual std::string name() const = 0;
    virtual std::size_t dimension() const = 0;
    virtual std::vector<double> embed(std::string_view word) const = 0;

    std::vector<std::vector<double>> embed_all(std::span<const std::string> words) const;
};

/// Seeded hash of the word mapped to a unit vector (16 dims by default).
class HashEmbedder final : public WordEmbedder {
public:
    explicit HashEmbedder(std::uint64_t seed = 0x5eed, std::size_t dimension = 16);

    std::string name() const override;
    std::size_t dimension() const override { return dimension_; }
    std::vector<double> embed(std::string_view word) const override;

private:
    std::uint64_t seed_;
    std::size_t dimension_;
};

/// Fixed lookup table; unknown words map to the zero vector.
class TableEmbedder final : public WordEmbedder {
public:
    TableEmbedder(std::string name, std::unordered_map<std::string, std::vector<double>> table);

    std::string name() const override { return name_; }
    std::size_t dimension() const override { return dimension_; }
    std::vector<double> embed(std::string_view word) const override;

private:
    std::string name_;
    std::size_t dimension_ = 0;
    std::unordered_map<std::string, std::vector<double>> table_;
};

/// Word-list-in / vector-list-out function table for external embedders.
class FunctionEmbedder final : public WordEmbedder {
public:
    using BatchFn = std::function<std::vector<std::vector<double>>(std::span<const std::string>)>;

    FunctionEmbedder(std::string name, std::size_t dimension, BatchFn fn);

    std::string name() const override { return name_; }
    std::size_t dimension() const override { return dimension_; }
    std::vector<double> embed(std::string_view word) const override;

private:
    std::string name_;
    std::size_t dimension_;
    BatchFn fn_;
};

/// Exact word mover's distance between the normalized bag-of-words of the two
/// token lists, Euclidean ground metric. Throws EmptyText on an empty side.
double wmd(std::span<const std::string> original, std::span<const std::string> perturbed,
           const WordEmbedder& embedder);

/// 1 - cosine similarity of the mean word vectors. Zero mean vectors give 1.
double cosine_text_distance(std::span<const std::string> original, std::span<const std::string> perturbed,
                            const WordEmbedder& embedder);

enum class KernelForm {
    kPaper,         // exp(-(d / sigma^2)^2)
    kConventional,  // exp(-d^2 / sigma^2)
};

enum class TextDistance { kWmd, kCosine };

std::string_view to_string(KernelForm form);
std::string_view to_string(TextDistance d);
KernelForm parse_kernel_form(std::string_view s);
TextDistance parse_text_distance(std::string_view s);

double kernel_weight(double distance, double sigma, KernelForm form = KernelForm::kPaper);

/// Default width for a set whose largest distance is `max_distance`. The
/// effective width is `scale * max_distance` in distance units for both forms,
/// so for kPaper this returns sqrt(scale * max_distance). 1 when max is 0.
double adaptive_sigma(double max_distance, double scale, KernelForm form);

struct SampleWeights {
    std::vector<double> distance;  // text distance per perturbation (WMD by default)
    std::vector<double> weight;
    double sigma = 0.0;
    KernelForm kernel_form = KernelForm::kPaper;
    TextDistance text_distance = TextDistance::kWmd;
};

struct WeightingOptions {
    TextDistance text_distance = TextDistance::kWmd;
    KernelForm kernel_form = KernelForm::kPaper;
    /// Kernel width; <= 0 selects adaptive_sigma(max distance, sigma_scale, form).
    double sigma = 0.0;
    double sigma_scale = 0.25;
};

SampleWeights weigh_perturbations(const TokenizedPrompt& original, const PerturbationSet& set,
                                  const WordEmbedder& embedder, const WeightingOptions& options = {});

}  // namespace smile
