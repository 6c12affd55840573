#pragma once

#include "tensegrity/morphogenesis.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

namespace tensegrity {

struct ApiRequest {
    std::string method;
    std::string path;
    std::map<std::string, std::string> query;
    std::string body;
};

struct ApiResponse {
    int status = 200;
    std::string content_type = "application/json";
    std::string body;
};

// Session store and JSON endpoints. Requests on one session are serialized;
// different sessions proceed independently.
class Service {
public:
    explicit Service(EngineOptions opt = {}) : opt_(opt) {}

    ApiResponse handle(const ApiRequest& req);

private:
    struct Entry {
        std::optional<MorphoStep> step;  // empty for an uploaded structure
        Snapshot snapshot;
        StepLog log;
    };
    struct Session {
        std::mutex mu;
        std::vector<Entry> history;
        std::size_t cursor = 0;  // active entries
    };

    std::shared_ptr<Session> find(const std::string& id);
    ApiResponse create(const ApiRequest& req);
    ApiResponse on_session(Session& s, const std::string& action, const ApiRequest& req);

    EngineOptions opt_;
    std::mutex mu_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    unsigned long next_ = 1;
};

struct ServeOptions {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::optional<std::filesystem::path> static_dir;
};

// HTTP binding of a Service. Port 0 picks a free port.
class HttpFrontend {
public:
    HttpFrontend(Service& service, const ServeOptions& opt);
    ~HttpFrontend();

    int port() const;
    bool run();   // blocks until stop()
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// Blocks until the server stops.
int serve(Service& service, const ServeOptions& opt);

}  // namespace tensegrity
