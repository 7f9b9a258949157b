#include <catch2/catch_amalgamated.hpp>

#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <thread>

#include "smile/adapter.hpp"
#include "smile/cache.hpp"
#include "smile/distance.hpp"
#include "smile/error.hpp"
#include "smile/hash.hpp"
#include "smile/protocol.hpp"

using namespace smile;
using Catch::Approx;
namespace fs = std::filesystem;

namespace {

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected smile::Error");
    return ErrorCode::kInvalidArgument;
}

fs::path scratch_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("smile-test-" + name + "-" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

SyntheticOracleSpec snowing_spec(double noise = 0.0) {
    SyntheticOracleSpec spec;
    spec.seed = 11;
    spec.dimension = 32;
    spec.noise_scale = noise;
    spec.model_id = "synthetic-test";
    std::vector<double> dir(32, 0.0);
    dir[3] = 1.0;
    spec.keywords["snowing"] = KeywordEffect{dir, 2.0};
    spec.add_keyword("rainy", 1.5);
    return spec;
}

fs::path write_spec(const fs::path& dir, const SyntheticOracleSpec& spec) {
    const auto path = dir / "spec.json";
    std::ofstream(path) << synthetic_spec_to_json(spec);
    return path;
}

const std::string kImage = std::string(SMILE_DATA_DIR) + "/street.ppm";

// Adapter wrapper that counts forwarded queries.
class CountingAdapter final : public Adapter {
public:
    explicit CountingAdapter(Adapter& inner) : inner_(inner) {}
    const Handshake& handshake() const override { return inner_.handshake(); }
    std::vector<EditResponse> query(std::span<const EmbedQuery> batch, const QueryOptions& options) override {
        calls += batch.size();
        return inner_.query(batch, options);
    }
    std::atomic<std::size_t> calls{0};

private:
    Adapter& inner_;
};

// Background HTTP adapter process.
struct HttpServer {
    pid_t pid = -1;
    int port = 0;
    HttpServer(const fs::path& spec, const fs::path& port_file) {
        pid = ::fork();
        if (pid == 0) {
            ::execl(SMILE_ADAPTER_BIN, SMILE_ADAPTER_BIN, "--spec", spec.c_str(), "--http", "0", "--port-file",
                    port_file.c_str(), static_cast<char*>(nullptr));
            std::_Exit(127);
        }
        for (int i = 0; i < 200 && port == 0; ++i) {
            std::ifstream in(port_file);
            if (!(in >> port)) {
                port = 0;
                std::this_thread::sleep_for(std::chrono::milliseconds(25));
            }
        }
    }
    ~HttpServer() {
        if (pid > 0) {
            ::kill(pid, SIGTERM);
            ::waitpid(pid, nullptr, 0);
        }
    }
};

}  // namespace

// ---------------------------------------------------------------------------
// Frames

TEST_CASE("protocol frames round-trip") {
    const EditRequest req{"b0.1", "make it \"snowing\"\n", "/tmp/x y.png"};
    CHECK(parse_request(serialize(req)) == req);

    EditResponse ok;
    ok.id = "b0.1";
    ok.embedding = std::vector<double>{0.1, -1e-300, 3.141592653589793, 1.0 / 3.0};
    const auto back = parse_response(serialize(ok));
    CHECK(back == ok);
    CHECK(back.ok());

    EditResponse err;
    err.id = "x";
    err.error = "boom";
    CHECK(parse_response(serialize(err)) == err);

    const Handshake h{"model-a", 384};
    CHECK(parse_handshake(serialize(h)) == h);
    CHECK(serialize(req).find('\n') == std::string::npos);
}

TEST_CASE("protocol rejects malformed frames") {
    const char* bad_responses[] = {
        "not json",
        "[]",
        R"({"embedding": [1]})",
        R"({"id": "a"})",
        R"({"id": "a", "embedding": [1], "error": "x"})",
        R"({"id": "a", "embedding": []})",
        R"({"id": "a", "embedding": [1, "2"]})",
        R"({"id": 5, "embedding": [1]})",
    };
    for (const char* line : bad_responses) {
        INFO(line);
        CHECK(code_of([&] { parse_response(line); }) == ErrorCode::kProtocolViolation);
    }
    CHECK(code_of([] { parse_request(R"({"id": "a", "prompt": "p"})"); }) == ErrorCode::kProtocolViolation);
    CHECK(code_of([] { parse_handshake(R"({"model_id": "m", "dimension": 0})"); }) == ErrorCode::kProtocolViolation);
    CHECK(code_of([] { parse_handshake(R"({"model_id": "m", "dimension": 2.5})"); }) == ErrorCode::kProtocolViolation);
    CHECK(code_of([] { parse_handshake(R"({"dimension": 4})"); }) == ErrorCode::kProtocolViolation);
}

// ---------------------------------------------------------------------------
// Synthetic oracle

TEST_CASE("synthetic oracle formula") {
    const auto spec = snowing_spec();
    const auto base = synthetic_embed(spec, "digest-1", "make it");
    REQUIRE(base.size() == 32);
    double norm = 0;
    for (double v : base.values) norm += v * v;
    CHECK(std::sqrt(norm) == Approx(1.0));
    CHECK(synthetic_embed(spec, "digest-1", "").values == base.values);

    const auto snow = synthetic_embed(spec, "digest-1", "make it snowing");
    for (std::size_t j = 0; j < 32; ++j) CHECK(snow.values[j] == Approx(base.values[j] + (j == 3 ? 2.0 : 0.0)));
    CHECK(embedding_distance(snow.values, base.values, 2) == Approx(2.0 / std::sqrt(32.0)).epsilon(1e-12));

    CHECK(synthetic_embed(spec, "digest-1", "SNOWING now").values ==
          synthetic_embed(spec, "digest-1", "snowing now").values);
    CHECK(synthetic_embed(spec, "digest-1", "make it snowing.").values == snow.values);
    CHECK(synthetic_embed(spec, "digest-2", "make it").values != base.values);
    CHECK(synthetic_embed(spec, "digest-1", "snowingly").values == synthetic_embed(spec, "digest-1", "x").values);
    CHECK(snow.model_id == "synthetic-test");
}

TEST_CASE("synthetic oracle noise is seeded per (image, prompt)") {
    const auto spec = snowing_spec(0.1);
    const auto a = synthetic_embed(spec, "d", "make it");
    CHECK(a.values == synthetic_embed(spec, "d", "make it").values);
    CHECK(a.values != synthetic_embed(spec, "d", "make it ").values);
    auto clean = spec;
    clean.noise_scale = 0.0;
    const auto c = synthetic_embed(clean, "d", "make it");
    double nn = 0;
    for (std::size_t j = 0; j < 32; ++j) nn += (a.values[j] - c.values[j]) * (a.values[j] - c.values[j]);
    CHECK(std::sqrt(nn) > 0.02);
    CHECK(std::sqrt(nn) < 0.3);
}

TEST_CASE("synthetic spec JSON") {
    const auto spec = snowing_spec(0.05);
    const auto back = parse_synthetic_spec(synthetic_spec_to_json(spec));
    CHECK(back.seed == spec.seed);
    CHECK(back.dimension == spec.dimension);
    CHECK(back.noise_scale == spec.noise_scale);
    CHECK(back.keywords.at("snowing").direction == spec.keywords.at("snowing").direction);
    CHECK(back.keywords.at("rainy").magnitude == 1.5);

    const auto simple = parse_synthetic_spec(R"({"seed": 3, "dimension": 8, "keywords": {"Rainy": 2}})");
    CHECK(simple.keywords.contains("rainy"));
    const auto scaled = parse_synthetic_spec(R"({"dimension": 2, "keywords": {"a": {"magnitude": 1, "direction": [3, 4]}}})");
    CHECK(scaled.keywords.at("a").direction[0] == Approx(0.6).epsilon(1e-15));
    CHECK(scaled.keywords.at("a").direction[1] == Approx(0.8).epsilon(1e-15));
    CHECK(code_of([] { parse_synthetic_spec("{"); }) == ErrorCode::kInvalidArgument);
    CHECK(code_of([] { parse_synthetic_spec(R"({"dimension": 0})"); }) == ErrorCode::kInvalidArgument);
    CHECK(code_of([] { parse_synthetic_spec(R"({"noise_scale": -1})"); }) == ErrorCode::kInvalidArgument);
    CHECK(code_of([] { parse_synthetic_spec(R"({"dimension": 3, "keywords": {"a": {"direction": [1]}}})"); }) ==
          ErrorCode::kInvalidArgument);
    CHECK(code_of([] { load_synthetic_spec("/nonexistent/spec.json"); }) == ErrorCode::kIoError);
    CHECK(keyword_key("\"Snowing!\"") == "snowing");
    CHECK(keyword_key("person's") == "person's");
}

TEST_CASE("synthetic adapter answers batches in order") {
    SyntheticAdapter adapter(snowing_spec());
    CHECK(adapter.handshake().dimension == 32);
    const auto img = ImageRef::from_file(kImage);
    const std::vector<EmbedQuery> batch{{img, "make it snowing"}, {img, "make it"}, {img, "make it snowing"}};
    const auto out = adapter.query(batch, QueryOptions{});
    REQUIRE(out.size() == 3);
    for (const auto& r : out) {
        REQUIRE(r.ok());
        CHECK(r.embedding->size() == 32);
    }
    CHECK(*out[0].embedding == *out[2].embedding);
    CHECK(*out[0].embedding == synthetic_embed(adapter.spec(), img.digest, "make it snowing").values);
}

TEST_CASE("image references") {
    const auto a = ImageRef::from_file(kImage);
    CHECK(a.digest.size() == 64);
    CHECK(a.digest == sha256_hex(a.bytes()));
    const auto b = ImageRef::from_bytes("mem", a.bytes());
    CHECK(b.digest == a.digest);
    try {
        ImageRef::from_file("/nonexistent/picture.png");
        FAIL("expected IoError");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::kIoError);
        CHECK(std::string(e.what()).find("/nonexistent/picture.png") != std::string::npos);
    }
}

TEST_CASE("hash helpers") {
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(base64_encode("hello") == "aGVsbG8=");
    CHECK(base64_decode("aGVsbG8=") == "hello");
    const std::string bin("\x00\xff\x10\x80zz", 6);
    CHECK(base64_decode(base64_encode(bin)) == bin);
    CHECK(base64_decode("") == "");
    CHECK_THROWS_AS(base64_decode("a!b="), Error);
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(derive_seed(1, 2) == derive_seed(1, 2));
    CHECK(derive_seed(1, 2) != derive_seed(2, 1));
}

// ---------------------------------------------------------------------------
// Subprocess transport

TEST_CASE("exec adapter matches the in-process oracle") {
    const auto dir = scratch_dir("exec");
    const auto spec = snowing_spec(0.02);
    const auto spec_path = write_spec(dir, spec);
    ExecAdapter adapter(std::string(SMILE_ADAPTER_BIN) + " --spec " + spec_path.string());
    CHECK(adapter.model_id() == "synthetic-test");
    CHECK(adapter.handshake().dimension == 32);

    const auto img = ImageRef::from_file(kImage);
    std::vector<EmbedQuery> batch;
    for (const char* p : {"make it snowing", "make it", "snowing", "rainy day", "make it snowing"})
        batch.push_back({img, p});
    for (unsigned par : {1u, 3u, 8u}) {
        QueryOptions opts;
        opts.parallelism = par;
        const auto out = adapter.query(batch, opts);
        REQUIRE(out.size() == batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i) {
            REQUIRE(out[i].ok());
            CHECK(*out[i].embedding == synthetic_embed(spec, img.digest, batch[i].prompt).values);
            CHECK(out[i].model_id == "synthetic-test");
        }
    }
    fs::remove_all(dir);
}

TEST_CASE("exec adapter: error frames are retried then reported") {
    const auto dir = scratch_dir("exec-fail");
    const auto spec_path = write_spec(dir, snowing_spec());
    ExecAdapter adapter(std::string(SMILE_ADAPTER_BIN) + " --spec " + spec_path.string() + " --fail-substring BAD");
    const auto img = ImageRef::from_file(kImage);
    const std::vector<EmbedQuery> batch{{img, "good one"}, {img, "a BAD one"}, {img, "another good"}};
    QueryOptions opts;
    opts.retries = 2;
    const auto out = adapter.query(batch, opts);
    CHECK(out[0].ok());
    CHECK_FALSE(out[1].ok());
    REQUIRE(out[1].error);
    CHECK(out[2].ok());
    // The adapter is still usable afterwards.
    CHECK(adapter.query(std::vector<EmbedQuery>{{img, "fine"}}, opts)[0].ok());
    fs::remove_all(dir);
}

TEST_CASE("exec adapter: a dying process is reported as unavailable") {
    const auto dir = scratch_dir("exec-die");
    const auto spec_path = write_spec(dir, snowing_spec());
    ExecAdapter adapter(std::string(SMILE_ADAPTER_BIN) + " --spec " + spec_path.string() + " --die-after 2");
    const auto img = ImageRef::from_file(kImage);
    std::vector<EmbedQuery> batch;
    for (int i = 0; i < 5; ++i) batch.push_back({img, "prompt " + std::to_string(i)});
    CHECK(code_of([&] { adapter.query(batch, QueryOptions{}); }) == ErrorCode::kAdapterUnavailable);
    CHECK(code_of([&] { adapter.query(batch, QueryOptions{}); }) == ErrorCode::kAdapterUnavailable);
    fs::remove_all(dir);
}

TEST_CASE("exec adapter: broken commands") {
    CHECK(code_of([] { ExecAdapter("/nonexistent/adapter-binary"); }) == ErrorCode::kAdapterUnavailable);
    CHECK(code_of([] { ExecAdapter("echo not-a-handshake"); }) == ErrorCode::kAdapterUnavailable);
}

TEST_CASE("stdio adapter survives malformed lines") {
    const auto dir = scratch_dir("stdio");
    const auto spec_path = write_spec(dir, snowing_spec());
    const std::string req = serialize(EditRequest{"r1", "make it snowing", kImage});
    const std::string cmd = "printf '%s\\n%s\\n%s\\n' 'garbage' '" + req + "' '" +
                            serialize(EditRequest{"r2", "x", "/nonexistent.png"}) + "' | " + SMILE_ADAPTER_BIN +
                            " --spec " + spec_path.string();
    FILE* pipe = ::popen(cmd.c_str(), "r");
    REQUIRE(pipe);
    std::vector<std::string> lines;
    char buf[65536];
    while (std::fgets(buf, sizeof buf, pipe)) lines.emplace_back(buf);
    ::pclose(pipe);
    REQUIRE(lines.size() == 4);
    CHECK(parse_handshake(lines[0]).dimension == 32);
    const auto unknown = parse_response(lines[1]);
    CHECK(unknown.id == "unknown");
    CHECK(unknown.error);
    const auto ok = parse_response(lines[2]);
    CHECK(ok.id == "r1");
    CHECK(ok.ok());
    const auto missing = parse_response(lines[3]);
    CHECK(missing.id == "r2");
    CHECK_FALSE(missing.ok());
    fs::remove_all(dir);
}

TEST_CASE("golden transcript") {
    // Requests and expected frames of a fixed session, byte for byte.
    const fs::path golden = fs::path(SMILE_DATA_DIR) / "golden";
    std::ifstream expected_in(golden / "session.out.ndjson");
    REQUIRE(expected_in);
    std::vector<std::string> expected;
    for (std::string l; std::getline(expected_in, l);) expected.push_back(l);

    const std::string cmd = "cd " + golden.string() + " && " + SMILE_ADAPTER_BIN +
                            " --spec golden_spec.json < session.in.ndjson";
    FILE* pipe = ::popen(cmd.c_str(), "r");
    REQUIRE(pipe);
    std::vector<std::string> got;
    char buf[1 << 16];
    while (std::fgets(buf, sizeof buf, pipe)) {
        std::string s(buf);
        if (!s.empty() && s.back() == '\n') s.pop_back();
        got.push_back(s);
    }
    ::pclose(pipe);
    REQUIRE(got.size() == expected.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
        INFO("line " << i);
        if (i == 0) {
            CHECK(parse_handshake(got[i]) == parse_handshake(expected[i]));
            continue;
        }
        const auto g = parse_response(got[i]), e = parse_response(expected[i]);
        CHECK(g.id == e.id);
        CHECK(g.ok() == e.ok());
        if (e.ok()) CHECK(*g.embedding == *e.embedding);
    }
}

// ---------------------------------------------------------------------------
// HTTP transport

TEST_CASE("http adapter matches the in-process oracle") {
    const auto dir = scratch_dir("http");
    const auto spec = snowing_spec(0.01);
    HttpServer server(write_spec(dir, spec), dir / "port");
    REQUIRE(server.port > 0);
    HttpAdapter adapter("http://127.0.0.1:" + std::to_string(server.port));
    CHECK(adapter.handshake().dimension == 32);
    const auto img = ImageRef::from_file(kImage);
    std::vector<EmbedQuery> batch;
    for (const char* p : {"make it snowing", "rainy", "make it"}) batch.push_back({img, p});
    QueryOptions opts;
    opts.parallelism = 3;
    const auto out = adapter.query(batch, opts);
    REQUIRE(out.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        REQUIRE(out[i].ok());
        CHECK(*out[i].embedding == synthetic_embed(spec, img.digest, batch[i].prompt).values);
    }
    auto via_selector = make_adapter("http://127.0.0.1:" + std::to_string(server.port));
    CHECK(via_selector->model_id() == "synthetic-test");
    fs::remove_all(dir);
}

TEST_CASE("http adapter: unreachable endpoint") {
    CHECK(code_of([] { HttpAdapter("http://127.0.0.1:1", 2000); }) == ErrorCode::kAdapterUnavailable);
}

TEST_CASE("adapter selectors") {
    const auto dir = scratch_dir("selector");
    const auto spec_path = write_spec(dir, snowing_spec());
    CHECK(make_adapter("synthetic:" + spec_path.string())->model_id() == "synthetic-test");
    CHECK(make_adapter("exec:" + std::string(SMILE_ADAPTER_BIN) + " --spec " + spec_path.string())->model_id() ==
          "synthetic-test");
    CHECK(code_of([] { make_adapter("carrier-pigeon:x"); }) == ErrorCode::kInvalidArgument);
    CHECK(code_of([] { make_adapter("synthetic:/nonexistent.json"); }) == ErrorCode::kIoError);
    fs::remove_all(dir);
}

// ---------------------------------------------------------------------------
// Cache

TEST_CASE("cache get/put in memory") {
    EmbeddingCache cache;
    const CacheKey key{"m", "d", "make it snowing"};
    CHECK_FALSE(cache.get(key));
    cache.put(key, {1.0, 2.5});
    REQUIRE(cache.get(key));
    CHECK(*cache.get(key) == std::vector<double>{1.0, 2.5});
    CHECK_FALSE(cache.get(CacheKey{"m", "d", "make it"}));
}

TEST_CASE("cache persists across instances and evicts corrupt entries") {
    const auto dir = scratch_dir("cache");
    const CacheKey key{"m", "digest", "prompt"};
    const std::vector<double> v{0.1, 1.0 / 3.0, -2e-17};
    {
        EmbeddingCache cache(dir);
        cache.put(key, v);
    }
    {
        EmbeddingCache cache(dir);
        REQUIRE(cache.get(key));
        CHECK(*cache.get(key) == v);
    }
    EmbeddingCache cache(dir);
    const auto path = cache.entry_path(key);
    REQUIRE(fs::exists(path));
    std::string text;
    {
        std::ifstream in(path);
        text.assign(std::istreambuf_iterator<char>(in), {});
    }
    const auto pos = text.find("0.1");
    REQUIRE(pos != std::string::npos);
    text[pos + 2] = '2';
    std::ofstream(path) << text;
    CHECK_FALSE(cache.get(key));
    CHECK(cache.evictions() == 1);
    CHECK_FALSE(fs::exists(path));

    std::ofstream(cache.entry_path(key)) << "{ truncated";
    EmbeddingCache again(dir);
    CHECK_FALSE(again.get(key));
    CHECK(again.evictions() == 1);
    fs::remove_all(dir);
}

TEST_CASE("caching adapter serves repeats from the cache") {
    SyntheticAdapter inner(snowing_spec(0.05));
    CountingAdapter counter(inner);
    EmbeddingCache cache;
    CachingAdapter cached(counter, cache);
    const auto img = ImageRef::from_file(kImage);
    const std::vector<EmbedQuery> batch{{img, "a"}, {img, "b"}, {img, "a"}};
    const auto first = cached.query(batch, QueryOptions{});
    const auto direct = inner.query(batch, QueryOptions{});
    for (std::size_t i = 0; i < 3; ++i) CHECK(*first[i].embedding == *direct[i].embedding);
    const auto before = counter.calls.load();
    const auto second = cached.query(batch, QueryOptions{});
    CHECK(counter.calls.load() == before);
    for (std::size_t i = 0; i < 3; ++i) CHECK(*second[i].embedding == *first[i].embedding);
}

TEST_CASE("cache tolerates concurrent writers") {
    const auto dir = scratch_dir("cache-mt");
    EmbeddingCache cache(dir);
    std::atomic<int> wrong{0};
    std::vector<std::jthread> threads;
    for (int t = 0; t < 8; ++t) {
        threads.emplace_back([&cache, &wrong] {
            for (int i = 0; i < 50; ++i) {
                const CacheKey key{"m", "d", "p" + std::to_string(i % 10)};
                cache.put(key, {static_cast<double>(i % 10), 1.0});
                const auto got = cache.get(key);
                if (!got || (*got)[0] != static_cast<double>(i % 10)) ++wrong;
            }
        });
    }
    threads.clear();
    CHECK(wrong == 0);
    EmbeddingCache reread(dir);
    for (int i = 0; i < 10; ++i) {
        const auto got = reread.get(CacheKey{"m", "d", "p" + std::to_string(i)});
        REQUIRE(got);
        CHECK((*got)[0] == i);
    }
    CHECK(reread.evictions() == 0);
    fs::remove_all(dir);
}
