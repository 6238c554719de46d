#include "defembed/service.hpp"

#include <atomic>
#include <thread>

#include "defembed/checkpoint.hpp"
#include "defembed/corpus.hpp"
#include "defembed/error.hpp"
#include "httplib.h"
#include "json.hpp"

namespace defembed {

using nlohmann::json;

std::shared_ptr<const Snapshot> load_snapshot(const ServiceConfig& config) {
  if (config.checkpoint.empty()) throw Error("config: checkpoint is required");
  if (config.target_embeddings.empty()) throw Error("config: target_embeddings is required");

  auto snapshot = std::make_shared<Snapshot>();
  auto target = std::make_shared<const EmbeddingStore>(load_embeddings(config.target_embeddings));
  std::shared_ptr<const EmbeddingStore> input;
  if (config.input_embeddings) {
    input = *config.input_embeddings == config.target_embeddings
                ? target
                : std::make_shared<const EmbeddingStore>(load_embeddings(*config.input_embeddings));
  }
  auto encoder = std::make_shared<const Encoder>(load_checkpoint(config.checkpoint, input));
  if (encoder->config().target_dim != target->dim()) {
    throw Error("checkpoint target_dim " + std::to_string(encoder->config().target_dim) +
                " does not match target embeddings dimension " + std::to_string(target->dim()));
  }
  for (const auto& [language, path] : config.bilingual_embeddings) {
    auto store = std::make_shared<const EmbeddingStore>(load_embeddings(path));
    if (store->dim() != target->dim()) {
      throw Error("bilingual store '" + language + "' has dimension " + std::to_string(store->dim()) +
                  ", expected " + std::to_string(target->dim()));
    }
    if (store->language() != language) {
      throw Error("bilingual store " + path.string() + " is tagged '" + store->language() + "', configured as '" +
                  language + "'");
    }
    if (language == target->language()) throw Error("bilingual store '" + language + "' is the source language");
    snapshot->context.bilingual.emplace(language, std::move(store));
  }
  snapshot->checkpoint_hash = checkpoint_hash(*encoder);
  snapshot->context.encoder = std::move(encoder);
  snapshot->context.target = std::move(target);
  return snapshot;
}

namespace {

ApiResponse error_response(int status, std::string_view code, std::string_view message) {
  nlohmann::ordered_json body = {{"error", {{"code", code}, {"message", message}}}};
  return {status, body.dump()};
}

std::size_t positive_count(const json& value, const char* field) {
  if (!value.is_number_integer()) throw Error(std::string(field) + " must be an integer");
  if (value.get<long long>() < 1) throw Error(std::string(field) + " must be at least 1");
  return value.get<std::size_t>();
}

}  // namespace

std::string candidates_json(const RankedCandidates& result) {
  nlohmann::ordered_json candidates = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < result.candidates.size(); ++i) {
    nlohmann::ordered_json c;
    c["rank"] = i + 1;
    c["word"] = result.candidates[i].token;
    c["score"] = result.candidates[i].score;
    candidates.push_back(std::move(c));
  }
  nlohmann::ordered_json body;
  body["candidates"] = std::move(candidates);
  body["skipped_tokens"] = result.skipped_tokens;
  return body.dump();
}

ApiResponse handle_query(const Snapshot& snapshot, const ServiceConfig& config, std::string_view body) {
  Query query;
  try {
    const json request = json::parse(body);
    if (!request.is_object()) throw Error("request body must be a JSON object");
    if (!request.contains("text") || !request["text"].is_string()) throw Error("'text' must be a string");
    query.text = request["text"].get<std::string>();
    if (!request.contains("mode") || !request["mode"].is_string()) throw Error("'mode' must be a string");
    query.mode = parse_query_mode(request["mode"].get<std::string>());
    query.k = request.contains("k") && !request["k"].is_null() ? positive_count(request["k"], "k") : config.default_k;
    if (request.contains("answer_length") && !request["answer_length"].is_null()) {
      query.answer_length = positive_count(request["answer_length"], "answer_length");
    }
    if (request.contains("target_lang") && !request["target_lang"].is_null()) {
      if (!request["target_lang"].is_string()) throw Error("'target_lang' must be a string");
      query.target_language = request["target_lang"].get<std::string>();
    }
    validate(query);
  } catch (const json::exception& e) {
    return error_response(400, "bad_request", std::string("malformed JSON: ") + e.what());
  } catch (const Error& e) {
    return error_response(400, "bad_request", e.what());
  }

  const auto tokens = tokenize(query.text);
  if (tokens.empty()) return error_response(400, "bad_request", "query text has no tokens");
  if (tokens.size() > config.max_request_tokens) {
    return error_response(413, "too_long",
                          "query has " + std::to_string(tokens.size()) + " tokens, limit is " +
                              std::to_string(config.max_request_tokens));
  }
  if (query.mode == QueryMode::bilingual && !snapshot.context.bilingual.count(*query.target_language)) {
    return error_response(404, "unknown_language", "no embedding store for language '" + *query.target_language + "'");
  }
  try {
    return {200, candidates_json(run_query(snapshot.context, query))};
  } catch (const NoKnownTokens& e) {
    return error_response(422, "no_known_tokens", e.what());
  } catch (const Error& e) {
    return error_response(400, "bad_request", e.what());
  } catch (const std::exception& e) {
    return error_response(500, "internal", e.what());
  }
}

ApiResponse handle_health(const Snapshot& snapshot) {
  return {200, nlohmann::ordered_json{{"status", "ok"}, {"model", snapshot.checkpoint_hash}}.dump()};
}

struct QueryService::Http {
  httplib::Server server;
  std::thread thread;
};

QueryService::QueryService(ServiceConfig config) : QueryService(config, load_snapshot(config)) {}

QueryService::QueryService(ServiceConfig config, std::shared_ptr<const Snapshot> snapshot)
    : config_(std::move(config)), snapshot_(std::move(snapshot)) {
  if (!snapshot_) throw Error("service: null snapshot");
}

QueryService::~QueryService() { stop(); }

std::shared_ptr<const Snapshot> QueryService::snapshot() const { return std::atomic_load(&snapshot_); }

ApiResponse QueryService::reload() {
  try {
    auto fresh = load_snapshot(config_);
    const auto hash = fresh->checkpoint_hash;
    std::atomic_store(&snapshot_, std::shared_ptr<const Snapshot>(std::move(fresh)));
    return {200, nlohmann::ordered_json{{"status", "reloaded"}, {"model", hash}}.dump()};
  } catch (const std::exception& e) {
    return error_response(500, "reload_failed", e.what());
  }
}

int QueryService::start() {
  if (http_) throw Error("service already started");
  http_ = std::make_unique<Http>();
  auto& server = http_->server;
  const auto send = [](httplib::Response& res, const ApiResponse& api) {
    res.status = api.status;
    res.set_content(api.body, "application/json");
  };
  server.Post("/api/query", [this, send](const httplib::Request& req, httplib::Response& res) {
    const auto current = snapshot();
    send(res, handle_query(*current, config_, req.body));
  });
  server.Get("/api/health", [this, send](const httplib::Request&, httplib::Response& res) {
    send(res, handle_health(*snapshot()));
  });
  server.Post("/api/admin/reload",
              [this, send](const httplib::Request&, httplib::Response& res) { send(res, reload()); });
  server.set_exception_handler([send](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string message = "unknown error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      message = e.what();
    } catch (...) {
    }
    send(res, error_response(500, "internal", message));
  });

  int port = config_.port;
  if (port == 0) {
    port = server.bind_to_any_port(config_.host);
  } else if (!server.bind_to_port(config_.host, port)) {
    port = -1;
  }
  if (port < 0) {
    http_.reset();
    throw Error("cannot bind " + config_.host + ":" + std::to_string(config_.port));
  }
  http_->thread = std::thread([this] { http_->server.listen_after_bind(); });
  server.wait_until_ready();
  return port;
}

void QueryService::wait() {
  if (http_ && http_->thread.joinable()) http_->thread.join();
}

void QueryService::interrupt() noexcept {
  if (http_) http_->server.stop();
}

void QueryService::stop() {
  if (!http_) return;
  http_->server.stop();
  if (http_->thread.joinable()) http_->thread.join();
  http_.reset();
}

}  // namespace defembed
