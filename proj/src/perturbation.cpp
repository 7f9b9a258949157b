#include "smile/perturbation.hpp"

#include <cctype>
#include <random>
#include <set>
#include <sstream>

#include "smile/error.hpp"
#include "smile/hash.hpp"

namespace smile {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string join(std::span<const std::string> parts) {
    std::string out;
    for (const auto& p : parts) {
        if (!out.empty()) out.push_back(' ');
        out += p;
    }
    return out;
}

}  // namespace

std::string TokenizedPrompt::normalized() const { return join(tokens); }

TokenizedPrompt tokenize(std::string_view prompt) {
    TokenizedPrompt out;
    out.raw = std::string(prompt);
    std::size_t i = 0;
    while (i < prompt.size()) {
        while (i < prompt.size() && is_space(prompt[i])) ++i;
        std::size_t start = i;
        while (i < prompt.size() && !is_space(prompt[i])) ++i;
        if (i > start) out.tokens.emplace_back(prompt.substr(start, i - start));
    }
    if (out.tokens.empty()) throw Error(ErrorCode::kEmptyPrompt, "prompt has no non-whitespace characters");
    return out;
}

std::uint64_t mask_capacity(std::size_t n_tokens, bool allow_empty) {
    if (n_tokens >= 64) return UINT64_MAX;
    const std::uint64_t all = std::uint64_t{1} << n_tokens;
    return allow_empty ? all : all - 1;
}

std::vector<Mask> sample_masks(std::size_t n_tokens, std::size_t n_perturbations, std::uint64_t seed,
                               const SamplingOptions& options) {
    if (n_tokens < 1) throw Error(ErrorCode::kInvalidArgument, "n_tokens must be >= 1");
    if (n_perturbations < 2) throw Error(ErrorCode::kInvalidArgument, "n_perturbations must be >= 2");
    if (n_perturbations > mask_capacity(n_tokens, options.allow_empty)) {
        throw Error(ErrorCode::kInfeasibleRequest,
                    std::to_string(n_perturbations) + " distinct masks requested over " +
                        std::to_string(n_tokens) + " tokens");
    }

    std::mt19937_64 rng(seed);
    std::bernoulli_distribution coin(0.5);
    std::set<Mask> seen;
    std::vector<Mask> masks;
    masks.reserve(n_perturbations);

    if (options.include_baseline) {
        Mask ones(n_tokens, 1);
        seen.insert(ones);
        masks.push_back(std::move(ones));
    }

    while (masks.size() < n_perturbations) {
        Mask row(n_tokens);
        bool accepted = false;
        for (int attempt = 0; attempt <= options.max_retries; ++attempt) {
            bool any = false;
            for (auto& bit : row) {
                bit = coin(rng) ? 1 : 0;
                any = any || bit;
            }
            if (!any && !options.allow_empty) continue;
            if (seen.insert(row).second) {
                accepted = true;
                break;
            }
        }
        if (accepted) {
            masks.push_back(std::move(row));
        } else {
            // Give up on this slot; the caller sees the short count.
            --n_perturbations;
        }
    }
    return masks;
}

std::string apply_mask(std::span<const std::string> tokens, const Mask& mask) {
    if (mask.size() != tokens.size()) {
        throw Error(ErrorCode::kLengthMismatch, "mask has " + std::to_string(mask.size()) +
                                                    " entries for " + std::to_string(tokens.size()) + " tokens");
    }
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (!mask[i]) continue;
        if (!out.empty()) out.push_back(' ');
        out += tokens[i];
    }
    return out;
}

PerturbationSet make_perturbations(const TokenizedPrompt& prompt, std::size_t n_perturbations,
                                   std::uint64_t seed, const SamplingOptions& options) {
    PerturbationSet set;
    set.seed = seed;
    set.includes_baseline = options.include_baseline;
    set.requested = n_perturbations;
    set.masks = sample_masks(prompt.size(), n_perturbations, seed, options);
    set.prompts.reserve(set.masks.size());
    for (const auto& m : set.masks) set.prompts.push_back(apply_mask(prompt.tokens, m));
    return set;
}

std::string perturbation_hash(const PerturbationSet& set) {
    std::string bytes;
    for (const auto& row : set.masks) {
        for (auto b : row) bytes.push_back(b ? '1' : '0');
        bytes.push_back('\n');
    }
    return sha256_hex(bytes).substr(0, 16);
}

}  // namespace smile
