#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace smile {

/// Instruction split into whitespace-delimited word tokens.
///
/// Normalization trims the prompt and collapses internal whitespace runs to a
/// single space. Punctuation stays attached to its word and case is preserved,
/// so `join(tokens, " ")` reproduces the normalized prompt exactly.
struct TokenizedPrompt {
    std::string raw;
    std::vector<std::string> tokens;

    std::string normalized() const;
    std::size_t size() const { return tokens.size(); }
};

/// One row per perturbation: 1 keeps the token, 0 drops it.
using Mask = std::vector<std::uint8_t>;

struct PerturbationSet {
    std::vector<Mask> masks;
    std::vector<std::string> prompts;
    std::uint64_t seed = 0;
    bool includes_baseline = true;
    /// Row count asked for; `masks.size()` may be smaller when duplicate
    /// resampling gave up.
    std::size_t requested = 0;

    std::size_t size() const { return masks.size(); }
};

struct SamplingOptions {
    bool include_baseline = true;
    bool allow_empty = false;
    int max_retries = 64;
};

TokenizedPrompt tokenize(std::string_view prompt);

/// Number of distinct rows that can exist for `n_tokens` columns.
std::uint64_t mask_capacity(std::size_t n_tokens, bool allow_empty);

/// Draws distinct masks with an independent fair coin per token.
///
/// Row 0 is the all-ones baseline when requested. All-zero rows (unless
/// allowed) and duplicates are resampled up to `max_retries` times each and
/// dropped after that. Throws InfeasibleRequest when `n_perturbations`
/// exceeds the number of distinct admissible rows.
std::vector<Mask> sample_masks(std::size_t n_tokens, std::size_t n_perturbations,
                               std::uint64_t seed, const SamplingOptions& options = {});

std::string apply_mask(std::span<const std::string> tokens, const Mask& mask);

PerturbationSet make_perturbations(const TokenizedPrompt& prompt, std::size_t n_perturbations,
                                   std::uint64_t seed, const SamplingOptions& options = {});

/// Stable digest of the mask matrix, used to prove that runs share a design.
std::string perturbation_hash(const PerturbationSet& set);

}  // namespace smile
