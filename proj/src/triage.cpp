// Copyright 2026 The digestmap Authors
// SPDX-License-Identifier: Apache-2.0

#include "digestmap/triage.hpp"

#include <regex>

#include "httplib.h"

#include "digestmap/error.hpp"
#include "digestmap/jsonio.hpp"

namespace digestmap::triage {

using jsonio::ordered_json;

namespace {

Response error(int status, const std::string& message) {
  ordered_json body;
  body["error"] = message;
  return {status, jsonio::dump(body)};
}

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
  return s;
}

}  // namespace

TriageService::TriageService(TriageConfig config) : config_(std::move(config)) {
  if (!std::filesystem::is_directory(config_.batch_dir)) {
    throw IoError("batch directory does not exist: " + config_.batch_dir.string());
  }
  rescan_batches();
}

void TriageService::rescan_batches() {
  static const std::regex name_re(R"(batch_(\d+)\.jsonl)");
  std::map<int, std::filesystem::path> paths;
  std::map<int, std::pair<std::filesystem::file_time_type, std::uintmax_t>> stamps;
  for (const auto& entry : std::filesystem::directory_iterator(config_.batch_dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (!entry.is_regular_file() || !std::regex_match(name, m, name_re)) continue;
    const int iteration = std::stoi(m[1].str());
    paths.emplace(iteration, entry.path());
    stamps.emplace(iteration, std::make_pair(entry.last_write_time(), entry.file_size()));
  }
  {
    std::shared_lock lock(batches_mutex_);
    if (stamps == stamps_) return;
  }
  std::map<int, mine::ReviewBatch> found;
  for (const auto& [iteration, path] : paths) found.emplace(iteration, mine::read_batch(path, iteration));
  std::unique_lock lock(batches_mutex_);
  batches_ = std::move(found);
  stamps_ = std::move(stamps);
}

bool TriageService::authorized(const std::string& presented_token) const {
  return config_.token.empty() || presented_token == config_.token;
}

std::optional<int> TriageService::latest_iteration_with(const std::string& candidate_id) {
  std::shared_lock lock(batches_mutex_);
  for (auto it = batches_.rbegin(); it != batches_.rend(); ++it) {
    if (it->second.find(candidate_id)) return it->first;
  }
  return std::nullopt;
}

Response TriageService::get_batch(int iteration) {
  rescan_batches();
  const auto log = mine::read_verdict_log(config_.verdict_log);
  const auto latest = mine::latest_verdicts(log, iteration);

  std::shared_lock lock(batches_mutex_);
  const auto found = batches_.find(iteration);
  if (found == batches_.end()) return error(404, "no batch for iteration " + std::to_string(iteration));
  const auto& batch = found->second;
  ordered_json out = ordered_json::array();
  for (const auto& c : batch.candidates) {
    ordered_json v;
    v["candidate_id"] = c.id();
    v["fused_score"] = c.fused_score;
    v["baseline_score"] = c.baseline_score;
    v["location"] = {{"x", c.detection.center().x}, {"y", c.detection.center().y}, {"crs", c.detection.crs}};
    v["tank_count_expected"] = c.tank_mode;
    v["pile_count_expected"] = c.pile_mode;
    v["chip_uri"] = c.chip_uri ? ordered_json(*c.chip_uri) : ordered_json(nullptr);
    if (!config_.map_url_template.empty()) {
      v["map_url"] = replace_all(replace_all(config_.map_url_template, "{x}",
                                             jsonio::format_decimal(c.detection.center().x)),
                                 "{y}", jsonio::format_decimal(c.detection.center().y));
    }
    auto it = latest.find(c.id());
    if (it == latest.end()) {
      v["status"] = "pending";
    } else {
      v["status"] = "reviewed";
      v["verdict"] = std::string(mine::to_string(it->second.verdict));
      v["reviewer"] = it->second.reviewer;
      v["timestamp"] = it->second.timestamp;
    }
    out.push_back(std::move(v));
  }
  return {200, jsonio::dump(out)};
}

Response TriageService::post_verdict(const std::string& candidate_id, const std::string& body) {
  ordered_json req;
  try {
    req = ordered_json::parse(body);
  } catch (const ordered_json::parse_error&) {
    return error(400, "request body is not valid JSON");
  }
  if (!req.is_object() || !req.contains("verdict") || !req["verdict"].is_string()) {
    return error(400, "missing verdict");
  }
  mine::VerdictRecord rec;
  try {
    rec.verdict = mine::parse_verdict(req["verdict"].get<std::string>());
  } catch (const ParseError&) {
    return error(400, "verdict must be one of biodigester, not_biodigester, unclear");
  }
  if (!req.contains("reviewer") || !req["reviewer"].is_string() ||
      req["reviewer"].get<std::string>().empty()) {
    return error(400, "missing reviewer");
  }
  rescan_batches();
  const auto iteration = latest_iteration_with(candidate_id);
  if (!iteration) return error(404, "unknown candidate '" + candidate_id + "'");

  rec.candidate_id = candidate_id;
  rec.reviewer = req["reviewer"].get<std::string>();
  rec.iteration = *iteration;
  {
    std::lock_guard lock(log_mutex_);
    rec.timestamp = mine::utc_now();
    mine::append_verdict(config_.verdict_log, rec);
  }
  return {200, mine::verdict_to_line(rec)};
}

Response TriageService::progress(std::optional<int> iteration) {
  rescan_batches();
  ordered_json out;
  std::shared_lock lock(batches_mutex_);
  if (!iteration) {
    if (batches_.empty()) {
      out["iteration"] = nullptr;
      out["total"] = 0;
      out["reviewed"] = 0;
      out["by_verdict"] = {{"biodigester", 0}, {"not_biodigester", 0}, {"unclear", 0}};
      return {200, jsonio::dump(out)};
    }
    iteration = batches_.rbegin()->first;
  }
  auto it = batches_.find(*iteration);
  if (it == batches_.end()) return error(404, "no batch for iteration " + std::to_string(*iteration));
  const auto log = mine::read_verdict_log(config_.verdict_log);
  const auto latest = mine::latest_verdicts(log, *iteration);
  std::map<mine::VerdictKind, std::size_t> counts;
  std::size_t reviewed = 0;
  for (const auto& c : it->second.candidates) {
    auto v = latest.find(c.id());
    if (v == latest.end()) continue;
    ++reviewed;
    ++counts[v->second.verdict];
  }
  out["iteration"] = *iteration;
  out["total"] = it->second.candidates.size();
  out["reviewed"] = reviewed;
  out["by_verdict"] = {{"biodigester", counts[mine::VerdictKind::biodigester]},
                       {"not_biodigester", counts[mine::VerdictKind::not_biodigester]},
                       {"unclear", counts[mine::VerdictKind::unclear]}};
  return {200, jsonio::dump(out)};
}

void register_routes(httplib::Server& server, TriageService& service) {
  auto send = [](httplib::Response& res, const Response& r) {
    res.status = r.status;
    res.set_content(r.body, "application/json");
  };
  auto guard = [&service, send](const httplib::Request& req, httplib::Response& res) {
    if (service.authorized(req.get_header_value("X-Triage-Token"))) return true;
    send(res, error(401, "missing or wrong X-Triage-Token"));
    return false;
  };
  auto guarded = [guard, send](auto handler) {
    return [guard, send, handler](const httplib::Request& req, httplib::Response& res) {
      if (!guard(req, res)) return;
      try {
        send(res, handler(req));
      } catch (const std::exception& e) {
        send(res, error(500, e.what()));
      }
    };
  };

  server.Get(R"(/api/batches/(\d+))", guarded([&service](const httplib::Request& req) {
               return service.get_batch(std::stoi(req.matches[1].str()));
             }));
  server.Get(R"(/api/batches/([^/]+))", [send](const httplib::Request&, httplib::Response& res) {
    send(res, error(404, "iteration must be a non-negative integer"));
  });
  server.Post(R"(/api/candidates/([^/]+)/verdict)", guarded([&service](const httplib::Request& req) {
                return service.post_verdict(req.matches[1].str(), req.body);
              }));
  server.Get("/api/progress", guarded([&service](const httplib::Request& req) {
               std::optional<int> iteration;
               if (req.has_param("iteration")) {
                 try {
                   iteration = std::stoi(req.get_param_value("iteration"));
                 } catch (const std::exception&) {
                   return error(400, "iteration must be an integer");
                 }
               }
               return service.progress(iteration);
             }));
  if (service.config().chips_dir) server.set_mount_point("/chips", service.config().chips_dir->string());
  if (service.config().static_dir) server.set_mount_point("/", service.config().static_dir->string());
}

int serve(const TriageConfig& config, const std::string& host, int port) {
  TriageService service(config);
  httplib::Server server;
  register_routes(server, service);
  if (!server.listen(host, port)) throw IoError("cannot listen on " + host + ":" + std::to_string(port));
  return 0;
}

}  // namespace digestmap::triage
