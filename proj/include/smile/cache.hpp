#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "smile/adapter.hpp"

namespace smile {

struct CacheKey {
    std::string model_id;
    std::string image_digest;
    std::string prompt;

    auto operator<=>(const CacheKey&) const = default;
};

/// Embedding cache keyed by (model id, image digest, prompt).
///
/// Entries live in memory and, when a directory is given, in one JSON file per
/// key carrying a SHA-256 checksum of the payload. Entries failing the checksum
/// are deleted and reported as misses. Concurrent readers and writers are
/// allowed; the last write for a key wins.
class EmbeddingCache {
public:
    EmbeddingCache() = default;
    explicit EmbeddingCache(std::filesystem::path directory);

    std::optional<std::vector<double>> get(const CacheKey& key);
    void put(const CacheKey& key, const std::vector<double>& embedding);

    std::filesystem::path entry_path(const CacheKey& key) const;
    std::size_t evictions() const;

private:
    std::optional<std::filesystem::path> directory_;
    std::map<CacheKey, std::vector<double>> memory_;
    mutable std::shared_mutex mutex_;
    std::size_t evictions_ = 0;
};

/// Serves hits from the cache and forwards misses to the wrapped adapter.
class CachingAdapter final : public Adapter {
public:
    CachingAdapter(Adapter& inner, EmbeddingCache& cache) : inner_(inner), cache_(cache) {}

    const Handshake& handshake() const override { return inner_.handshake(); }
    std::vector<EditResponse> query(std::span<const EmbedQuery> batch, const QueryOptions& options) override;

private:
    Adapter& inner_;
    EmbeddingCache& cache_;
};

}  // namespace smile
