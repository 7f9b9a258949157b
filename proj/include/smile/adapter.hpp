#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "smile/distance.hpp"
#include "smile/protocol.hpp"

namespace smile {

/// An input image, identified by the SHA-256 of its bytes.
struct ImageRef {
    std::string path;
    std::string digest;
    /// Set for in-memory images; file-backed images are read on demand.
    std::shared_ptr<const std::string> content;

    /// Throws IoError naming the path when the file cannot be read.
    static ImageRef from_file(const std::string& path);
    static ImageRef from_bytes(std::string label, std::string bytes);

    std::string bytes() const;
};

struct EmbedQuery {
    ImageRef image;
    std::string prompt;
};

struct QueryOptions {
    unsigned parallelism = 1;
    /// Extra attempts for requests answered with an error frame.
    int retries = 2;
    int timeout_ms = 300000;
};

/// The black-box boundary: (image, prompt) -> embedding of the edited image.
///
/// `query` returns one response per query, in query order. Requests that still
/// fail after the retries come back with `error` set. Transport failures throw
/// AdapterUnavailable and discard the batch.
class Adapter {
public:
    virtual ~Adapter() = default;

    virtual const Handshake& handshake() const = 0;
    virtual std::vector<EditResponse> query(std::span<const EmbedQuery> batch, const QueryOptions& options) = 0;

    const std::string& model_id() const { return handshake().model_id; }
};

// ---------------------------------------------------------------------------
// Synthetic oracle

struct KeywordEffect {
    std::vector<double> direction;  // unit length after loading
    double magnitude = 1.0;
};

/// Deterministic stand-in for an editing model plus feature extractor:
///   base(image) + sum over keywords present of magnitude * direction
///   + noise_scale * noise(image, prompt)
/// Keywords match whitespace tokens case-insensitively, ignoring leading and
/// trailing punctuation. The noise vector has i.i.d. N(0, 1/dimension) entries.
struct SyntheticOracleSpec {
    std::uint64_t seed = 0;
    std::size_t dimension = 64;
    double noise_scale = 0.0;
    std::string model_id = "synthetic";
    std::map<std::string, KeywordEffect> keywords;

    /// Adds a keyword with a seeded random unit direction.
    void add_keyword(const std::string& word, double magnitude);
};

SyntheticOracleSpec parse_synthetic_spec(std::string_view json_text);
SyntheticOracleSpec load_synthetic_spec(const std::string& path);
std::string synthetic_spec_to_json(const SyntheticOracleSpec& spec);

/// Lowercased with leading/trailing punctuation removed.
std::string keyword_key(std::string_view token);

EmbeddingVector synthetic_embed(const SyntheticOracleSpec& spec, const std::string& image_digest,
                                std::string_view prompt);

class SyntheticAdapter final : public Adapter {
public:
    explicit SyntheticAdapter(SyntheticOracleSpec spec);

    const Handshake& handshake() const override { return handshake_; }
    std::vector<EditResponse> query(std::span<const EmbedQuery> batch, const QueryOptions& options) override;

    const SyntheticOracleSpec& spec() const { return spec_; }

private:
    SyntheticOracleSpec spec_;
    Handshake handshake_;
};

// ---------------------------------------------------------------------------
// Remote transports

/// Speaks the protocol over the standard streams of `/bin/sh -c command`.
class ExecAdapter final : public Adapter {
public:
    explicit ExecAdapter(std::string command, int startup_timeout_ms = 60000);
    ~ExecAdapter() override;
    ExecAdapter(const ExecAdapter&) = delete;
    ExecAdapter& operator=(const ExecAdapter&) = delete;

    const Handshake& handshake() const override { return handshake_; }
    std::vector<EditResponse> query(std::span<const EmbedQuery> batch, const QueryOptions& options) override;

private:
    std::string read_line(int timeout_ms);
    void write_line(const std::string& line);
    void shutdown();

    std::string command_;
    Handshake handshake_;
    int pid_ = -1;
    int to_child_ = -1;
    int from_child_ = -1;
    std::string buffer_;
    bool dead_ = false;
    std::uint64_t batch_counter_ = 0;
    std::mutex mutex_;
};

/// `GET /handshake` once, then one `POST /embed` per request with the image
/// sent as base64.
class HttpAdapter final : public Adapter {
public:
    explicit HttpAdapter(std::string base_url, int timeout_ms = 300000);

    const Handshake& handshake() const override { return handshake_; }
    std::vector<EditResponse> query(std::span<const EmbedQuery> batch, const QueryOptions& options) override;

private:
    std::string base_url_;
    int timeout_ms_;
    Handshake handshake_;
    std::mutex mutex_;
    std::uint64_t batch_counter_ = 0;
};

/// Builds an adapter from `synthetic:<spec-file>`, `exec:<command>` or
/// `http:<url>`.
std::unique_ptr<Adapter> make_adapter(const std::string& selector);

}  // namespace smile
