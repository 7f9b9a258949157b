#include "smile/adapter.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <optional>
#include <cctype>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "smile/error.hpp"
#include "smile/hash.hpp"

namespace smile {

using nlohmann::json;

// ---------------------------------------------------------------------------
// ImageRef

ImageRef ImageRef::from_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::kIoError, "cannot read image '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    ImageRef ref;
    ref.path = path;
    ref.digest = sha256_hex(ss.str());
    return ref;
}

ImageRef ImageRef::from_bytes(std::string label, std::string bytes) {
    ImageRef ref;
    ref.path = std::move(label);
    ref.digest = sha256_hex(bytes);
    ref.content = std::make_shared<const std::string>(std::move(bytes));
    return ref;
}

std::string ImageRef::bytes() const {
    if (content) return *content;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::kIoError, "cannot read image '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---------------------------------------------------------------------------
// Synthetic oracle

namespace {

std::vector<double> unit_vector(std::uint64_t seed, std::size_t dimension) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> v(dimension);
    double n2 = 0.0;
    while (n2 == 0.0) {
        n2 = 0.0;
        for (auto& x : v) {
            x = normal(rng);
            n2 += x * x;
        }
    }
    const double inv = 1.0 / std::sqrt(n2);
    for (auto& x : v) x *= inv;
    return v;
}

std::vector<double> normalized(std::vector<double> v) {
    double n2 = 0.0;
    for (double x : v) n2 += x * x;
    if (!(n2 > 0.0)) throw Error(ErrorCode::kInvalidArgument, "keyword direction must be nonzero");
    // Rescaling a unit vector again moves it by an ulp; keep saved specs exact.
    if (std::fabs(n2 - 1.0) <= 1e-12) return v;
    const double inv = 1.0 / std::sqrt(n2);
    for (auto& x : v) x *= inv;
    return v;
}

}  // namespace

std::string keyword_key(std::string_view token) {
    auto is_punct = [](char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; };
    std::size_t b = 0, e = token.size();
    while (b < e && is_punct(token[b])) ++b;
    while (e > b && is_punct(token[e - 1])) --e;
    std::string out(token.substr(b, e - b));
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

void SyntheticOracleSpec::add_keyword(const std::string& word, double magnitude) {
    const std::string key = keyword_key(word);
    keywords[key] = KeywordEffect{unit_vector(derive_seed(seed, fnv1a64("kw:" + key)), dimension), magnitude};
}

SyntheticOracleSpec parse_synthetic_spec(std::string_view json_text) {
    const json j = json::parse(json_text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::kInvalidArgument, "synthetic spec is not a JSON object");
    SyntheticOracleSpec spec;
    try {
        spec.seed = j.value("seed", std::uint64_t{0});
        spec.dimension = j.value("dimension", std::size_t{64});
        spec.noise_scale = j.value("noise_scale", 0.0);
        spec.model_id = j.value("model_id", std::string("synthetic"));
        if (spec.dimension == 0) throw Error(ErrorCode::kInvalidArgument, "dimension must be positive");
        if (!(spec.noise_scale >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "noise_scale must be nonnegative");
        if (j.contains("keywords")) {
            for (const auto& [word, effect] : j.at("keywords").items()) {
                if (effect.is_number()) {
                    spec.add_keyword(word, effect.get<double>());
                    continue;
                }
                const double magnitude = effect.value("magnitude", 1.0);
                if (effect.contains("direction")) {
                    auto dir = effect.at("direction").get<std::vector<double>>();
                    if (dir.size() != spec.dimension)
                        throw Error(ErrorCode::kInvalidArgument, "direction of '" + word + "' has wrong dimension");
                    spec.keywords[keyword_key(word)] = KeywordEffect{normalized(std::move(dir)), magnitude};
                } else {
                    spec.add_keyword(word, magnitude);
                }
            }
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::kInvalidArgument, std::string("synthetic spec: ") + e.what());
    }
    return spec;
}

SyntheticOracleSpec load_synthetic_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::kIoError, "cannot read synthetic spec '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_synthetic_spec(ss.str());
}

std::string synthetic_spec_to_json(const SyntheticOracleSpec& spec) {
    json kw = json::object();
    for (const auto& [word, effect] : spec.keywords)
        kw[word] = json{{"magnitude", effect.magnitude}, {"direction", effect.direction}};
    return json{{"seed", spec.seed},
                {"dimension", spec.dimension},
                {"noise_scale", spec.noise_scale},
                {"model_id", spec.model_id},
                {"keywords", kw}}
        .dump(2);
}

EmbeddingVector synthetic_embed(const SyntheticOracleSpec& spec, const std::string& image_digest,
                                std::string_view prompt) {
    EmbeddingVector out;
    out.model_id = spec.model_id;
    out.image_id = image_digest;
    out.prompt_hash = sha256_hex(prompt).substr(0, 16);
    out.values = unit_vector(derive_seed(spec.seed, fnv1a64("img:" + image_digest)), spec.dimension);

    std::set<std::string> present;
    std::istringstream words{std::string(prompt)};
    for (std::string w; words >> w;) present.insert(keyword_key(w));
    for (const auto& [word, effect] : spec.keywords) {
        if (!present.count(word)) continue;
        for (std::size_t i = 0; i < spec.dimension; ++i) out.values[i] += effect.magnitude * effect.direction[i];
    }

    if (spec.noise_scale > 0.0) {
        std::mt19937_64 rng(derive_seed(spec.seed, fnv1a64(std::string(prompt), fnv1a64("noise:" + image_digest + "\n"))));
        std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(spec.dimension)));
        for (auto& x : out.values) x += spec.noise_scale * normal(rng);
    }
    return out;
}

SyntheticAdapter::SyntheticAdapter(SyntheticOracleSpec spec) : spec_(std::move(spec)) {
    handshake_.model_id = spec_.model_id;
    handshake_.dimension = spec_.dimension;
}

std::vector<EditResponse> SyntheticAdapter::query(std::span<const EmbedQuery> batch, const QueryOptions&) {
    std::vector<EditResponse> out;
    out.reserve(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        EditResponse r;
        r.id = std::to_string(i);
        r.model_id = spec_.model_id;
        r.embedding = synthetic_embed(spec_, batch[i].image.digest, batch[i].prompt).values;
        out.push_back(std::move(r));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Subprocess transport

ExecAdapter::ExecAdapter(std::string command, int startup_timeout_ms) : command_(std::move(command)) {
    // A dead child must surface as an error, not kill the host.
    ::signal(SIGPIPE, SIG_IGN);

    int in_pipe[2], out_pipe[2];
    if (::pipe(in_pipe) != 0) throw Error(ErrorCode::kAdapterUnavailable, "pipe: " + std::string(std::strerror(errno)));
    if (::pipe(out_pipe) != 0) {
        ::close(in_pipe[0]);
        ::close(in_pipe[1]);
        throw Error(ErrorCode::kAdapterUnavailable, "pipe: " + std::string(std::strerror(errno)));
    }
    pid_ = ::fork();
    if (pid_ < 0) throw Error(ErrorCode::kAdapterUnavailable, "fork: " + std::string(std::strerror(errno)));
    if (pid_ == 0) {
        ::dup2(in_pipe[0], STDIN_FILENO);
        ::dup2(out_pipe[1], STDOUT_FILENO);
        ::close(in_pipe[0]);
        ::close(in_pipe[1]);
        ::close(out_pipe[0]);
        ::close(out_pipe[1]);
        ::execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
        ::_exit(127);
    }
    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    to_child_ = in_pipe[1];
    from_child_ = out_pipe[0];

    try {
        handshake_ = parse_handshake(read_line(startup_timeout_ms));
    } catch (const Error& e) {
        shutdown();
        if (e.code() == ErrorCode::kAdapterUnavailable) throw;
        throw Error(ErrorCode::kAdapterUnavailable, "bad handshake from '" + command_ + "': " + e.what());
    }
}

ExecAdapter::~ExecAdapter() { shutdown(); }

void ExecAdapter::shutdown() {
    if (to_child_ >= 0) ::close(to_child_);
    if (from_child_ >= 0) ::close(from_child_);
    to_child_ = from_child_ = -1;
    if (pid_ > 0) {
        int status = 0;
        for (int i = 0; i < 50; ++i) {
            if (::waitpid(pid_, &status, WNOHANG) != 0) {
                pid_ = -1;
                return;
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(10));
        }
        ::kill(pid_, SIGKILL);
        ::waitpid(pid_, &status, 0);
        pid_ = -1;
    }
}

std::string ExecAdapter::read_line(int timeout_ms) {
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
    for (;;) {
        auto nl = buffer_.find('\n');
        if (nl != std::string::npos) {
            std::string line = buffer_.substr(0, nl);
            buffer_.erase(0, nl + 1);
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            return line;
        }
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0) {
            dead_ = true;
            throw Error(ErrorCode::kAdapterUnavailable, "timed out waiting for '" + command_ + "'");
        }
        pollfd pfd{from_child_, POLLIN, 0};
        const int rc = ::poll(&pfd, 1, static_cast<int>(left.count()));
        if (rc < 0 && errno == EINTR) continue;
        if (rc < 0) {
            dead_ = true;
            throw Error(ErrorCode::kAdapterUnavailable, "poll: " + std::string(std::strerror(errno)));
        }
        if (rc == 0) continue;
        char chunk[65536];
        const ssize_t n = ::read(from_child_, chunk, sizeof chunk);
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) {
            dead_ = true;
            throw Error(ErrorCode::kAdapterUnavailable, "adapter process '" + command_ + "' closed its output");
        }
        buffer_.append(chunk, static_cast<std::size_t>(n));
    }
}

void ExecAdapter::write_line(const std::string& line) {
    std::string data = line + "\n";
    std::size_t off = 0;
    while (off < data.size()) {
        const ssize_t n = ::write(to_child_, data.data() + off, data.size() - off);
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) {
            dead_ = true;
            throw Error(ErrorCode::kAdapterUnavailable, "adapter process '" + command_ + "' is not accepting input");
        }
        off += static_cast<std::size_t>(n);
    }
}

std::vector<EditResponse> ExecAdapter::query(std::span<const EmbedQuery> batch, const QueryOptions& options) {
    std::lock_guard lock(mutex_);
    if (dead_) throw Error(ErrorCode::kAdapterUnavailable, "adapter process '" + command_ + "' is gone");
    const std::string prefix = "b" + std::to_string(batch_counter_++) + ".";

    std::vector<EditResponse> results(batch.size());
    std::vector<int> attempts(batch.size(), 0);
    std::vector<std::size_t> pending(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) pending[i] = i;
    std::reverse(pending.begin(), pending.end());

    std::map<std::string, std::size_t> in_flight;
    const std::size_t window = std::max(1u, options.parallelism);
    while (!pending.empty() || !in_flight.empty()) {
        while (!pending.empty() && in_flight.size() < window) {
            const std::size_t i = pending.back();
            pending.pop_back();
            const std::string id = prefix + std::to_string(i);
            write_line(serialize(EditRequest{id, batch[i].prompt, batch[i].image.path}));
            in_flight[id] = i;
            ++attempts[i];
        }
        EditResponse r = parse_response(read_line(options.timeout_ms));
        auto it = in_flight.find(r.id);
        if (it == in_flight.end()) throw Error(ErrorCode::kProtocolViolation, "response for unknown request id '" + r.id + "'");
        const std::size_t i = it->second;
        in_flight.erase(it);
        if (r.ok() && r.embedding->size() != handshake_.dimension) {
            throw Error(ErrorCode::kProtocolViolation, "embedding of length " + std::to_string(r.embedding->size()) +
                                                           ", handshake promised " + std::to_string(handshake_.dimension));
        }
        r.model_id = handshake_.model_id;
        if (!r.ok() && attempts[i] <= options.retries) {
            pending.push_back(i);
            continue;
        }
        results[i] = std::move(r);
    }
    return results;
}

// ---------------------------------------------------------------------------
// HTTP transport

namespace {

std::string normalize_url(std::string url) {
    if (url.rfind("http://", 0) != 0 && url.rfind("https://", 0) != 0) url = "http://" + url;
    while (!url.empty() && url.back() == '/') url.pop_back();
    return url;
}

httplib::Client make_client(const std::string& url, int timeout_ms) {
    httplib::Client client(url);
    client.set_connection_timeout(std::chrono::milliseconds(std::min(timeout_ms, 10000)));
    client.set_read_timeout(std::chrono::milliseconds(timeout_ms));
    client.set_write_timeout(std::chrono::milliseconds(timeout_ms));
    return client;
}

}  // namespace

HttpAdapter::HttpAdapter(std::string base_url, int timeout_ms)
    : base_url_(normalize_url(std::move(base_url))), timeout_ms_(timeout_ms) {
    auto client = make_client(base_url_, timeout_ms_);
    auto res = client.Get("/handshake");
    if (!res) throw Error(ErrorCode::kAdapterUnavailable, "no response from " + base_url_ + "/handshake");
    if (res->status != 200)
        throw Error(ErrorCode::kAdapterUnavailable, base_url_ + "/handshake returned HTTP " + std::to_string(res->status));
    try {
        handshake_ = parse_handshake(res->body);
    } catch (const Error& e) {
        throw Error(ErrorCode::kAdapterUnavailable, std::string("bad handshake: ") + e.what());
    }
}

std::vector<EditResponse> HttpAdapter::query(std::span<const EmbedQuery> batch, const QueryOptions& options) {
    std::string prefix;
    {
        std::lock_guard lock(mutex_);
        prefix = "h" + std::to_string(batch_counter_++) + ".";
    }
    std::vector<EditResponse> results(batch.size());
    std::vector<std::string> encoded(batch.size());
    std::mutex error_mutex;
    std::optional<Error> failure;

    auto run_one = [&](httplib::Client& client, std::size_t i) {
        if (encoded[i].empty()) encoded[i] = base64_encode(batch[i].image.bytes());
        const std::string id = prefix + std::to_string(i);
        const std::string body = serialize(EditRequest{id, batch[i].prompt, encoded[i]});
        for (int attempt = 0; attempt <= options.retries; ++attempt) {
            auto res = client.Post("/embed", body, "application/json");
            if (!res) throw Error(ErrorCode::kAdapterUnavailable, "no response from " + base_url_ + "/embed");
            if (res->status != 200)
                throw Error(ErrorCode::kProtocolViolation, base_url_ + "/embed returned HTTP " + std::to_string(res->status));
            EditResponse r = parse_response(res->body);
            if (r.id != id) throw Error(ErrorCode::kProtocolViolation, "response id '" + r.id + "' for request '" + id + "'");
            if (r.ok() && r.embedding->size() != handshake_.dimension)
                throw Error(ErrorCode::kProtocolViolation, "embedding length differs from handshake");
            r.model_id = handshake_.model_id;
            results[i] = std::move(r);
            if (results[i].ok()) return;
        }
    };

    const unsigned workers = std::max(1u, std::min<unsigned>(options.parallelism, static_cast<unsigned>(batch.size())));
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        auto client = make_client(base_url_, options.timeout_ms);
        for (std::size_t i = next++; i < batch.size(); i = next++) {
            try {
                run_one(client, i);
            } catch (const Error& e) {
                std::lock_guard lock(error_mutex);
                if (!failure) failure = e;
                next = batch.size();
            }
        }
    };
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::jthread> threads;
        for (unsigned w = 0; w < workers; ++w) threads.emplace_back(worker);
    }
    if (failure) throw *failure;
    return results;
}

// ---------------------------------------------------------------------------

std::unique_ptr<Adapter> make_adapter(const std::string& selector) {
    const auto colon = selector.find(':');
    if (colon == std::string::npos)
        throw Error(ErrorCode::kInvalidArgument, "adapter selector '" + selector + "' lacks a scheme");
    const std::string scheme = selector.substr(0, colon);
    const std::string rest = selector.substr(colon + 1);
    if (scheme == "synthetic") return std::make_unique<SyntheticAdapter>(load_synthetic_spec(rest));
    if (scheme == "exec") return std::make_unique<ExecAdapter>(rest);
    if (scheme == "http" || scheme == "https") {
        return std::make_unique<HttpAdapter>(rest.rfind("//", 0) == 0 ? selector : rest);
    }
    throw Error(ErrorCode::kInvalidArgument, "unknown adapter scheme '" + scheme + "'");
}

}  // namespace smile
