// Synthetic oracle speaking the adapter protocol over stdio or HTTP.
//
//   smile-synthetic-adapter --spec oracle.json
//   smile-synthetic-adapter --spec oracle.json --http 0 --port-file port.txt

#include <CLI11.hpp>
#include <httplib.h>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "smile/adapter.hpp"
#include "smile/error.hpp"
#include "smile/hash.hpp"
#include "smile/protocol.hpp"

namespace {

struct Behaviour {
    long die_after = -1;
    std::string fail_substring;
};

smile::EditResponse answer(const smile::SyntheticOracleSpec& spec, const smile::EditRequest& req,
                           const std::string& image_bytes, const Behaviour& behaviour) {
    smile::EditResponse r;
    r.id = req.id;
    if (!behaviour.fail_substring.empty() && req.prompt.find(behaviour.fail_substring) != std::string::npos) {
        r.error = "injected failure";
        return r;
    }
    r.embedding = smile::synthetic_embed(spec, smile::sha256_hex(image_bytes), req.prompt).values;
    return r;
}

int serve_stdio(const smile::SyntheticOracleSpec& spec, const Behaviour& behaviour) {
    std::cout << smile::serialize(smile::Handshake{spec.model_id, spec.dimension}) << std::endl;
    long answered = 0;
    for (std::string line; std::getline(std::cin, line);) {
        if (line.empty()) continue;
        smile::EditResponse r;
        try {
            const auto req = smile::parse_request(line);
            std::ifstream in(req.image, std::ios::binary);
            if (!in) {
                r.id = req.id;
                r.error = "cannot read image '" + req.image + "'";
            } else {
                std::ostringstream ss;
                ss << in.rdbuf();
                r = answer(spec, req, ss.str(), behaviour);
            }
        } catch (const smile::Error& e) {
            r.id = "unknown";
            r.error = e.what();
        }
        if (behaviour.die_after >= 0 && answered >= behaviour.die_after) std::_Exit(1);
        std::cout << smile::serialize(r) << std::endl;
        ++answered;
    }
    return 0;
}

int serve_http(const smile::SyntheticOracleSpec& spec, const Behaviour& behaviour, const std::string& host, int port,
               const std::string& port_file) {
    httplib::Server server;
    const std::string handshake = smile::serialize(smile::Handshake{spec.model_id, spec.dimension});
    server.Get("/handshake", [&](const httplib::Request&, httplib::Response& res) {
        res.set_content(handshake, "application/json");
    });
    server.Post("/embed", [&](const httplib::Request& req, httplib::Response& res) {
        smile::EditResponse r;
        try {
            const auto frame = smile::parse_request(req.body);
            r = answer(spec, frame, smile::base64_decode(frame.image), behaviour);
        } catch (const smile::Error& e) {
            r.id = "unknown";
            r.error = e.what();
            res.status = 400;
        }
        res.set_content(smile::serialize(r), "application/json");
    });
    if (port == 0) port = server.bind_to_any_port(host);
    else if (!server.bind_to_port(host, port)) port = -1;
    if (port < 0) {
        std::cerr << "cannot bind " << host << "\n";
        return 1;
    }
    if (!port_file.empty()) {
        const std::string tmp = port_file + ".tmp";
        std::ofstream(tmp) << port << "\n";
        std::rename(tmp.c_str(), port_file.c_str());
    }
    std::cerr << "listening on " << host << ":" << port << "\n";
    return server.listen_after_bind() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Synthetic embedding oracle for the adapter protocol"};
    std::string spec_path;
    int http_port = -1;
    std::string host = "127.0.0.1";
    std::string port_file;
    Behaviour behaviour;
    app.add_option("--spec", spec_path, "Oracle spec (JSON)")->required();
    app.add_option("--http", http_port, "Serve HTTP on this port (0 = any) instead of stdio");
    app.add_option("--host", host, "HTTP bind address");
    app.add_option("--port-file", port_file, "Write the bound HTTP port here");
    app.add_option("--die-after", behaviour.die_after, "Exit abruptly after answering N requests (stdio)");
    app.add_option("--fail-substring", behaviour.fail_substring, "Answer prompts containing this text with an error");
    CLI11_PARSE(app, argc, argv);

    try {
        const auto spec = smile::load_synthetic_spec(spec_path);
        if (http_port >= 0) return serve_http(spec, behaviour, host, http_port, port_file);
        return serve_stdio(spec, behaviour);
    } catch (const smile::Error& e) {
        std::cerr << e.what() << "\n";
        return 1;
    }
}
