#pragma once

// HTTP query service over an immutable model snapshot.
//
//   POST /api/query         {text, mode, k?, answer_length?, target_lang?}
//                           -> {candidates: [{rank, word, score}], skipped_tokens: [...]}
//   GET  /api/health        -> {status: "ok", model: <checkpoint hash>}
//   POST /api/admin/reload  -> re-reads the configured files and swaps the snapshot
//
// Errors are {"error": {"code": ..., "message": ...}} with a 4xx/5xx status.

#include <memory>
#include <string>
#include <string_view>

#include "defembed/config.hpp"
#include "defembed/query_engine.hpp"

namespace defembed {

struct Snapshot {
  QueryContext context;
  std::string checkpoint_hash;
};

/// Loads and cross-validates every file named in the config. Throws on any
/// inconsistency (missing file, dimension mismatch, unknown language tag).
std::shared_ptr<const Snapshot> load_snapshot(const ServiceConfig& config);

struct ApiResponse {
  int status = 200;
  std::string body;  // JSON
};

ApiResponse handle_query(const Snapshot& snapshot, const ServiceConfig& config, std::string_view body);
ApiResponse handle_health(const Snapshot& snapshot);

/// Response body for a successful query; exposed so callers can compare
/// service output against direct library calls.
std::string candidates_json(const RankedCandidates& result);

class QueryService {
 public:
  /// Loads the snapshot; startup validation errors propagate.
  explicit QueryService(ServiceConfig config);
  QueryService(ServiceConfig config, std::shared_ptr<const Snapshot> snapshot);
  ~QueryService();

  QueryService(const QueryService&) = delete;
  QueryService& operator=(const QueryService&) = delete;

  std::shared_ptr<const Snapshot> snapshot() const;
  const ServiceConfig& config() const noexcept { return config_; }

  /// Loads a fresh snapshot from the configured paths and swaps it in. On
  /// failure the current snapshot stays live and a 500 response is returned.
  ApiResponse reload();

  /// Binds (port 0 picks a free port) and serves on a background thread.
  /// Returns the bound port.
  int start();
  /// Blocks until stop() is called.
  void wait();
  /// Stops the listener and joins its thread.
  void stop();
  /// Asks the listener to exit without joining; safe to call from a signal handler.
  void interrupt() noexcept;

 private:
  struct Http;

  ServiceConfig config_;
  std::shared_ptr<const Snapshot> snapshot_;  // accessed through std::atomic_load/store
  std::unique_ptr<Http> http_;
};

}  // namespace defembed
