#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "revdict/error.hpp"
#include "revdict/pipeline.hpp"

namespace revdict {

struct QueryRequest {
  std::string definition;
  LanguageTag definition_language;
  LanguageTag target_language;
  std::size_t top_n = 10;
};

// Throws Error with code malformed_json / invalid_request.
inline QueryRequest parse_query_request(const std::string& body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(std::string("request body is not valid JSON: ") + e.what(), "malformed_json");
  }
  if (!j.is_object()) throw Error("request body must be a JSON object", "invalid_request");
  QueryRequest q;
  auto text = [&](const char* key) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string()) {
      throw Error(std::string("\"") + key + "\" must be a string", "invalid_request");
    }
    return it->get<std::string>();
  };
  q.definition = text("definition");
  q.definition_language = text("definition_language");
  q.target_language = text("target_language");
  if (auto it = j.find("top_n"); it != j.end()) {
    if (!it->is_number_integer() || it->get<long long>() < 1) {
      throw Error("\"top_n\" must be an integer >= 1", "invalid_request");
    }
    q.top_n = static_cast<std::size_t>(it->get<long long>());
  }
  return q;
}

inline nlohmann::json error_body(const std::string& code, const std::string& message) {
  return {{"error", {{"code", code}, {"message", message}}}};
}

// Holds the current model snapshot. Readers copy the shared pointer under
// the lock and then work lock-free; a reload swaps the pointer only after the
// new model has fully loaded.
class ModelSlot {
 public:
  explicit ModelSlot(std::shared_ptr<const Model> m) : model_(std::move(m)) {}

  std::shared_ptr<const Model> get() const {
    std::lock_guard lock(mu_);
    return model_;
  }

  void set(std::shared_ptr<const Model> m) {
    std::lock_guard lock(mu_);
    model_ = std::move(m);
  }

 private:
  mutable std::mutex mu_;
  std::shared_ptr<const Model> model_;
};

struct HttpReply {
  int status = 200;
  nlohmann::json body;
};

inline HttpReply handle_reverse(const Model& model, const std::string& body) {
  const auto t0 = std::chrono::steady_clock::now();
  try {
    const auto q = parse_query_request(body);
    const auto ranking = model.query(q.definition, q.definition_language, q.target_language, q.top_n);
    nlohmann::json candidates = nlohmann::json::array();
    for (const auto& item : ranking.items) {
      candidates.push_back({{"surface", item.surface}, {"score", item.score}, {"rank", item.rank}});
    }
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return {200, {{"candidates", candidates}, {"model_id", model.model_id}, {"timing_ms", ms}}};
  } catch (const Error& e) {
    return {400, error_body(e.code(), e.what())};
  }
}

inline HttpReply handle_health(const Model& model) {
  return {200,
          {{"status", "ok"},
           {"model_id", model.model_id},
           {"languages", model.languages()},
           {"mode", to_string(model.mode)},
           {"k", model.index.k()}}};
}

struct ServiceOptions {
  std::string cors_origin;  // empty: no CORS headers
  // Loads the replacement snapshot for /v1/admin/reload; the body's
  // "model_dir" (may be empty) is passed through.
  std::function<std::shared_ptr<const Model>(const std::string&)> loader;
};

class ReverseDictionaryService {
 public:
  ReverseDictionaryService(std::shared_ptr<const Model> model, ServiceOptions opts)
      : slot_(std::move(model)), opts_(std::move(opts)) {
    install_routes();
  }

  httplib::Server& server() { return server_; }
  ModelSlot& slot() { return slot_; }

  bool listen(const std::string& host, int port) { return server_.listen(host, port); }

  // Binds an ephemeral port and returns it (-1 on failure).
  int bind_any(const std::string& host) { return server_.bind_to_any_port(host); }
  bool listen_after_bind() { return server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  void wait_until_ready() const { server_.wait_until_ready(); }

 private:
  void reply(httplib::Response& res, const HttpReply& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  }

  void install_routes() {
    if (!opts_.cors_origin.empty()) {
      server_.set_default_headers({{"Access-Control-Allow-Origin", opts_.cors_origin},
                                   {"Access-Control-Allow-Headers", "Content-Type"},
                                   {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
      server_.Options(R"(/v1/.*)", [](const httplib::Request&, httplib::Response& res) {
        res.status = 204;
      });
    }
    server_.Post("/v1/reverse", [this](const httplib::Request& req, httplib::Response& res) {
      const auto model = slot_.get();
      reply(res, handle_reverse(*model, req.body));
    });
    server_.Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
      const auto model = slot_.get();
      reply(res, handle_health(*model));
    });
    server_.Post("/v1/admin/reload", [this](const httplib::Request& req, httplib::Response& res) {
      if (!opts_.loader) {
        reply(res, {400, error_body("reload_unavailable", "no model loader configured")});
        return;
      }
      std::string dir;
      if (!req.body.empty()) {
        try {
          const auto j = nlohmann::json::parse(req.body);
          if (j.is_object()) dir = j.value("model_dir", std::string());
        } catch (const nlohmann::json::parse_error& e) {
          reply(res, {400, error_body("malformed_json", e.what())});
          return;
        }
      }
      try {
        auto fresh = opts_.loader(dir);
        slot_.set(fresh);
        reply(res, {200, {{"status", "reloaded"}, {"model_id", fresh->model_id}}});
      } catch (const Error& e) {
        reply(res, {400, error_body(e.code(), e.what())});
      } catch (const std::exception& e) {
        reply(res, {500, error_body("reload_failed", e.what())});
      }
    });
    server_.set_exception_handler(
        [this](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
          std::string what = "internal error";
          try {
            if (ep) std::rethrow_exception(ep);
          } catch (const std::exception& e) {
            what = e.what();
          } catch (...) {
          }
          reply(res, {500, error_body("internal", what)});
        });
  }

  ModelSlot slot_;
  ServiceOptions opts_;
  httplib::Server server_;
};

}  // namespace revdict
