#pragma once

// Client for the /api/v1 HTTP API. Error responses are rethrown as the
// matching library exception.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "mrsq/platform/server.hpp"

#include <httplib.h>

namespace mrsq::platform {

class ApiClient {
 public:
  explicit ApiClient(const std::string& base_url, std::string token = {})
      : http_(base_url), token_(std::move(token)) {
    http_.set_connection_timeout(10);
    http_.set_read_timeout(3600);
    http_.set_write_timeout(600);
  }

  void set_token(std::string token) { token_ = std::move(token); }
  const std::string& token() const { return token_; }

  std::string login(const std::string& user, const std::string& password) {
    token_ = check(http_.Post(path("/auth/token"), json{{"username", user}, {"password", password}}.dump(),
                              "application/json"))
                 .at("access_token")
                 .get<std::string>();
    return token_;
  }

  json create_user(const std::string& user, const std::string& password) {
    return post("/users", {{"username", user}, {"password", password}});
  }

  json upload(const std::filesystem::path& file, const std::map<std::string, std::string>& fields = {}) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw NotFoundError("cannot read " + file.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return upload_bytes(file.filename().string(), ss.str(), fields);
  }

  json upload_bytes(const std::string& filename, const std::string& content,
                    const std::map<std::string, std::string>& fields = {}) {
    httplib::MultipartFormDataItems items{{"file", content, filename, "application/octet-stream"}};
    for (const auto& [k, v] : fields) items.push_back({k, v, "", ""});
    return check(http_.Post(path("/datasets"), headers(), items)).at("datasets").at(0);
  }

  json list_datasets() { return get("/datasets"); }
  json get_dataset(const std::string& id) { return get("/datasets/" + id); }
  json delete_dataset(const std::string& id) { return check(http_.Delete(path("/datasets/" + id), headers())); }
  json basis() { return get("/basis").at("basis"); }
  json quota() { return get("/quota"); }

  json submit_job(const std::vector<std::string>& ids, const std::string& method, bool preprocess,
                  const std::string& basis = "auto") {
    return post("/jobs", {{"dataset_ids", ids}, {"method", method}, {"preprocess", preprocess}, {"basis", basis}});
  }

  json job(const std::string& id) { return get("/jobs/" + id); }

  /// Polls until the job is done or failed.
  json wait_job(const std::string& id, std::chrono::milliseconds poll = std::chrono::milliseconds(200),
                std::chrono::seconds timeout = std::chrono::hours(1)) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
      json j = job(id);
      const auto s = j.at("state").get<std::string>();
      if (s == "done" || s == "failed") return j;
      if (std::chrono::steady_clock::now() > deadline) throw Error("timed out waiting for job " + id);
      std::this_thread::sleep_for(poll);
    }
  }

  json results(const std::string& id, std::size_t page = 1, std::size_t page_size = 10) {
    return get(fmt::format("/jobs/{}/results?page={}&page_size={}", id, page, page_size));
  }

  std::string export_job(const std::string& id, const std::string& format = "csv") {
    return raw(fmt::format("/jobs/{}/export?format={}", id, format));
  }

  json statistics(const std::vector<std::string>& a, const std::vector<std::string>& b,
                  const std::vector<std::string>& indicators, const std::string& center = "mean") {
    json body = {{"group_a", a}, {"group_b", b}, {"levene_center", center}};
    if (!indicators.empty()) body["indicators"] = indicators;
    return post("/analysis/statistics", body);
  }

  json consistency(const std::vector<std::string>& ids, bool allow_non_healthy = false,
                   const std::vector<std::string>& indicators = {}) {
    return post("/analysis/consistency",
                {{"dataset_ids", ids}, {"allow_non_healthy", allow_non_healthy}, {"indicators", indicators}});
  }

  json report(const std::string& id) { return get("/reports/" + id); }

  std::string export_report(const std::string& id, const std::string& format = "csv") {
    return raw(fmt::format("/reports/{}/export?format={}", id, format));
  }

 private:
  static std::string path(const std::string& p) { return std::string(kApiPrefix) + p; }

  httplib::Headers headers() const {
    if (token_.empty()) return {};
    return {{"Authorization", "Bearer " + token_}};
  }

  /// Throws the exception matching an error body.
  [[noreturn]] static void raise(int status, const std::string& body) {
    std::string msg = "HTTP " + std::to_string(status);
    try {
      const json j = json::parse(body);
      msg = j.value("message", msg);
    } catch (const json::exception&) {
    }
    switch (status) {
      case 400: throw ArgumentError(msg);
      case 401: throw AuthError(msg);
      case 403: throw ForbiddenError(msg);
      case 404: throw NotFoundError(msg);
      case 409: throw ConflictError(msg);
      case 413: throw QuotaError(msg);
      case 422: throw SelectionError(msg);
      default: throw Error(msg);
    }
  }

  static const httplib::Response& ok(const httplib::Result& r) {
    if (!r) throw Error("request failed: " + httplib::to_string(r.error()));
    if (r->status >= 300) raise(r->status, r->body);
    return *r;
  }

  static json check(const httplib::Result& r) { return json::parse(ok(r).body); }

  json get(const std::string& p) { return check(http_.Get(path(p), headers())); }
  std::string raw(const std::string& p) { return ok(http_.Get(path(p), headers())).body; }
  json post(const std::string& p, const json& body) {
    return check(http_.Post(path(p), headers(), body.dump(), "application/json"));
  }

  httplib::Client http_;
  std::string token_;
};

}  // namespace mrsq::platform
