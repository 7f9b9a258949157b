#include "smile/cache.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <mutex>
#include <sstream>
#include <system_error>
#include <thread>

#include "smile/error.hpp"
#include "smile/hash.hpp"

namespace smile {

using nlohmann::json;

namespace {

std::string payload_checksum(const CacheKey& key, const std::vector<double>& embedding) {
    return sha256_hex(json{{"model_id", key.model_id},
                           {"image_digest", key.image_digest},
                           {"prompt", key.prompt},
                           {"embedding", embedding}}
                          .dump());
}

}  // namespace

EmbeddingCache::EmbeddingCache(std::filesystem::path directory) : directory_(std::move(directory)) {
    std::error_code ec;
    std::filesystem::create_directories(*directory_, ec);
    if (ec) throw Error(ErrorCode::kIoError, "cannot create cache directory '" + directory_->string() + "'");
}

std::filesystem::path EmbeddingCache::entry_path(const CacheKey& key) const {
    if (!directory_) return {};
    return *directory_ / (sha256_hex(key.model_id + '\0' + key.image_digest + '\0' + key.prompt) + ".json");
}

std::size_t EmbeddingCache::evictions() const {
    std::shared_lock lock(mutex_);
    return evictions_;
}

std::optional<std::vector<double>> EmbeddingCache::get(const CacheKey& key) {
    {
        std::shared_lock lock(mutex_);
        auto it = memory_.find(key);
        if (it != memory_.end()) return it->second;
    }
    if (!directory_) return std::nullopt;

    const auto path = entry_path(key);
    std::ifstream in(path);
    if (!in) return std::nullopt;
    std::ostringstream ss;
    ss << in.rdbuf();
    in.close();

    std::optional<std::vector<double>> value;
    const json j = json::parse(ss.str(), nullptr, false);
    try {
        if (!j.is_discarded() && j.is_object()) {
            CacheKey stored{j.at("model_id").get<std::string>(), j.at("image_digest").get<std::string>(),
                            j.at("prompt").get<std::string>()};
            auto embedding = j.at("embedding").get<std::vector<double>>();
            if (stored == key && j.at("checksum").get<std::string>() == payload_checksum(key, embedding))
                value = std::move(embedding);
        }
    } catch (const json::exception&) {
        value.reset();
    }

    std::unique_lock lock(mutex_);
    if (!value) {
        std::error_code ec;
        std::filesystem::remove(path, ec);
        ++evictions_;
        return std::nullopt;
    }
    memory_[key] = *value;
    return value;
}

void EmbeddingCache::put(const CacheKey& key, const std::vector<double>& embedding) {
    {
        std::unique_lock lock(mutex_);
        memory_[key] = embedding;
    }
    if (!directory_) return;
    const json j{{"model_id", key.model_id},
                 {"image_digest", key.image_digest},
                 {"prompt", key.prompt},
                 {"embedding", embedding},
                 {"checksum", payload_checksum(key, embedding)}};
    const auto path = entry_path(key);
    auto tmp = path;
    tmp += ".tmp" + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
    {
        std::ofstream out(tmp);
        if (!out) throw Error(ErrorCode::kIoError, "cannot write cache entry '" + tmp.string() + "'");
        out << j.dump();
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw Error(ErrorCode::kIoError, "cannot move cache entry into place: " + ec.message());
}

std::vector<EditResponse> CachingAdapter::query(std::span<const EmbedQuery> batch, const QueryOptions& options) {
    std::vector<EditResponse> results(batch.size());
    std::vector<std::size_t> misses;
    std::vector<EmbedQuery> forward;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const CacheKey key{model_id(), batch[i].image.digest, batch[i].prompt};
        if (auto hit = cache_.get(key)) {
            results[i].id = std::to_string(i);
            results[i].model_id = model_id();
            results[i].embedding = std::move(*hit);
        } else {
            misses.push_back(i);
            forward.push_back(batch[i]);
        }
    }
    if (forward.empty()) return results;

    auto fetched = inner_.query(forward, options);
    for (std::size_t k = 0; k < misses.size(); ++k) {
        const std::size_t i = misses[k];
        if (fetched[k].ok()) cache_.put(CacheKey{model_id(), batch[i].image.digest, batch[i].prompt}, *fetched[k].embedding);
        results[i] = std::move(fetched[k]);
    }
    return results;
}

}  // namespace smile
