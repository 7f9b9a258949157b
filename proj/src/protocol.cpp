#include "smile/protocol.hpp"

#include <nlohmann/json.hpp>

#include <cmath>

#include "smile/error.hpp"

namespace smile {

using nlohmann::json;

namespace {

json parse_object(std::string_view line) {
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        throw Error(ErrorCode::kProtocolViolation, "frame is not a JSON object: " + std::string(line.substr(0, 120)));
    }
    return j;
}

std::string string_field(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string()) throw Error(ErrorCode::kProtocolViolation, std::string("missing string field '") + key + "'");
    return it->get<std::string>();
}

}  // namespace

std::string serialize(const EditRequest& r) {
    return json{{"id", r.id}, {"prompt", r.prompt}, {"image", r.image}}.dump();
}

std::string serialize(const EditResponse& r) {
    json j{{"id", r.id}};
    if (r.embedding) j["embedding"] = *r.embedding;
    else j["error"] = r.error.value_or("unknown error");
    return j.dump();
}

std::string serialize(const Handshake& h) { return json{{"model_id", h.model_id}, {"dimension", h.dimension}}.dump(); }

EditRequest parse_request(std::string_view line) {
    const json j = parse_object(line);
    return EditRequest{string_field(j, "id"), string_field(j, "prompt"), string_field(j, "image")};
}

EditResponse parse_response(std::string_view line) {
    const json j = parse_object(line);
    EditResponse r;
    r.id = string_field(j, "id");
    const bool has_embedding = j.contains("embedding");
    const bool has_error = j.contains("error");
    if (has_embedding == has_error)
        throw Error(ErrorCode::kProtocolViolation, "response '" + r.id + "' must carry exactly one of embedding/error");
    if (has_error) {
        r.error = string_field(j, "error");
        return r;
    }
    const json& e = j["embedding"];
    if (!e.is_array() || e.empty()) throw Error(ErrorCode::kProtocolViolation, "embedding must be a non-empty array");
    std::vector<double> values;
    values.reserve(e.size());
    for (const auto& v : e) {
        if (!v.is_number()) throw Error(ErrorCode::kProtocolViolation, "embedding entries must be numbers");
        const double x = v.get<double>();
        if (!std::isfinite(x)) throw Error(ErrorCode::kProtocolViolation, "non-finite embedding entry");
        values.push_back(x);
    }
    r.embedding = std::move(values);
    return r;
}

Handshake parse_handshake(std::string_view line) {
    const json j = parse_object(line);
    Handshake h;
    h.model_id = string_field(j, "model_id");
    auto it = j.find("dimension");
    if (it == j.end() || !it->is_number_integer() || it->get<long long>() <= 0)
        throw Error(ErrorCode::kProtocolViolation, "handshake needs a positive integer dimension");
    h.dimension = it->get<std::size_t>();
    return h;
}

}  // namespace smile
