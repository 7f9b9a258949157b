#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace smile {

// Newline-delimited JSON frames shared by the subprocess and HTTP transports.
//
//   request   {"id": "...", "prompt": "...", "image": "<path-or-base64>"}
//   response  {"id": "...", "embedding": [...]}  or  {"id": "...", "error": "..."}
//   handshake {"model_id": "...", "dimension": N}

struct EditRequest {
    std::string id;
    std::string prompt;
    std::string image;

    bool operator==(const EditRequest&) const = default;
};

struct EditResponse {
    std::string id;
    std::optional<std::vector<double>> embedding;
    std::optional<std::string> error;
    /// Filled by the client from the handshake; not part of the frame.
    std::string model_id;

    bool ok() const { return embedding.has_value(); }
    bool operator==(const EditResponse&) const = default;
};

struct Handshake {
    std::string model_id;
    std::size_t dimension = 0;

    bool operator==(const Handshake&) const = default;
};

std::string serialize(const EditRequest& r);
std::string serialize(const EditResponse& r);
std::string serialize(const Handshake& h);

// All parsers throw ProtocolViolation on malformed frames.
EditRequest parse_request(std::string_view line);
EditResponse parse_response(std::string_view line);
Handshake parse_handshake(std::string_view line);

}  // namespace smile
