// Copyright 2026 The digestmap Authors
// SPDX-License-Identifier: Apache-2.0

// HTTP gateway over review batches and the append-only verdict log.
//
//   GET  /api/batches/{iteration}          candidates with review status
//   POST /api/candidates/{id}/verdict      {"verdict": ..., "reviewer": ...}
//   GET  /api/progress[?iteration=N]       counts for a batch (default: latest)
//
// The service never writes batch files; every acknowledged verdict is on
// disk before the response is sent.

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <shared_mutex>
#include <mutex>
#include <string>

#include "digestmap/mining.hpp"

namespace httplib {
class Server;
}

namespace digestmap::triage {

struct TriageConfig {
  std::filesystem::path batch_dir;
  std::filesystem::path verdict_log;
  std::optional<std::filesystem::path> chips_dir;
  std::optional<std::filesystem::path> static_dir;
  /// Link pattern with {x} / {y} placeholders, shown when no chip exists.
  std::string map_url_template;
  /// When non-empty, API calls must carry it in the X-Triage-Token header.
  std::string token;
};

struct Response {
  int status = 200;
  std::string body;  // JSON
};

class TriageService {
 public:
  explicit TriageService(TriageConfig config);

  Response get_batch(int iteration);
  Response post_verdict(const std::string& candidate_id, const std::string& body);
  Response progress(std::optional<int> iteration);

  bool authorized(const std::string& presented_token) const;
  const TriageConfig& config() const { return config_; }

 private:
  /// Reloads the batch directory when any batch file was added, removed
  /// or rewritten since the last scan.
  void rescan_batches();
  std::optional<int> latest_iteration_with(const std::string& candidate_id);

  TriageConfig config_;
  std::shared_mutex batches_mutex_;
  std::map<int, mine::ReviewBatch> batches_;
  /// Per batch file: modification time and size at the last load.
  std::map<int, std::pair<std::filesystem::file_time_type, std::uintmax_t>> stamps_;
  std::mutex log_mutex_;  // single appender
};

/// Installs the API routes (and static mounts) on `server`.
void register_routes(httplib::Server& server, TriageService& service);

/// Blocks serving on host:port until the process is stopped.
int serve(const TriageConfig& config, const std::string& host, int port);

}  // namespace digestmap::triage
