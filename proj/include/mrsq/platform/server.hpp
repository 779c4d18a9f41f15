#pragma once

// HTTP/1.1 JSON API under /api/v1.

#include <thread>

// before httplib: <resolv.h> defines a _res macro that breaks Eigen
#include "mrsq/platform/service.hpp"

#include <httplib.h>

namespace mrsq::platform {

inline constexpr const char* kApiPrefix = "/api/v1";

struct HttpError {
  int status;
  std::string code;
};

/// Status and machine-readable code for an exception.
inline HttpError classify(const std::exception& e) {
  if (dynamic_cast<const AuthError*>(&e)) return {401, "unauthorized"};
  if (dynamic_cast<const ForbiddenError*>(&e)) return {403, "forbidden"};
  if (dynamic_cast<const NotFoundError*>(&e)) return {404, "not_found"};
  if (dynamic_cast<const ConflictError*>(&e)) return {409, "conflict"};
  if (dynamic_cast<const QuotaError*>(&e)) return {413, "quota_exceeded"};
  if (dynamic_cast<const ParseError*>(&e)) return {400, "parse_error"};
  if (dynamic_cast<const ArgumentError*>(&e) || dynamic_cast<const ConfigError*>(&e) ||
      dynamic_cast<const json::exception*>(&e))
    return {400, "invalid_argument"};
  if (dynamic_cast<const SelectionError*>(&e)) return {422, "selection_error"};
  if (dynamic_cast<const DegenerateError*>(&e) || dynamic_cast<const RankDeficientError*>(&e))
    return {422, "degenerate_input"};
  return {500, "internal_error"};
}

inline json error_body(const std::string& code, const std::string& message, json details = json::object()) {
  return {{"code", code}, {"message", message}, {"details", std::move(details)}};
}

struct ServerConfig {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::size_t max_upload_bytes = 64u << 20;
};

class Server {
 public:
  Server(Service& svc, ServerConfig cfg = {}) : svc_(svc), cfg_(std::move(cfg)) { routes(); }
  ~Server() { stop(); }

  /// Binds the socket and returns the port.
  int bind() {
    if (cfg_.port == 0) {
      port_ = http_.bind_to_any_port(cfg_.host);
    } else {
      port_ = http_.bind_to_port(cfg_.host, cfg_.port) ? cfg_.port : -1;
    }
    if (port_ < 0) throw Error(fmt::format("cannot bind {}:{}", cfg_.host, cfg_.port));
    return port_;
  }

  /// Serves until stop(); binds first if needed.
  void run() {
    if (port_ < 0) bind();
    http_.listen_after_bind();
  }

  /// Serves on a background thread; returns the port.
  int start() {
    const int p = bind();
    thread_ = std::thread([this] { http_.listen_after_bind(); });
    http_.wait_until_ready();
    return p;
  }

  void stop() {
    http_.stop();
    if (thread_.joinable()) thread_.join();
  }

  int port() const { return port_; }

 private:
  using Req = httplib::Request;
  using Res = httplib::Response;

  static void send(Res& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  std::string user_of(const Req& req) const {
    const auto h = req.get_header_value("Authorization");
    constexpr std::string_view bearer = "Bearer ";
    if (h.size() <= bearer.size() || h.compare(0, bearer.size(), bearer) != 0)
      throw AuthError("missing bearer token");
    return svc_.authenticate(h.substr(bearer.size()));
  }

  static json body_json(const Req& req) {
    if (req.body.empty()) return json::object();
    try {
      return json::parse(req.body);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("request body is not valid JSON: ") + e.what());
    }
  }

  static std::size_t query_size(const Req& req, const char* key, std::size_t fallback) {
    if (!req.has_param(key)) return fallback;
    const std::string v = req.get_param_value(key);
    std::size_t out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size())
      throw ArgumentError(std::string(key) + " must be a positive integer");
    return out;
  }

  template <class F>
  void on(const std::string& method, const std::string& path, F handler) {
    auto wrapped = [handler](const Req& req, Res& res) {
      try {
        handler(req, res);
      } catch (const std::exception& e) {
        const auto [status, code] = classify(e);
        json details = json::object();
        if (const auto* pe = dynamic_cast<const ParseError*>(&e); pe && pe->line()) details["line"] = pe->line();
        send(res, status, error_body(code, e.what(), details));
      }
    };
    const std::string full = kApiPrefix + path;
    if (method == "GET") http_.Get(full, wrapped);
    else if (method == "POST") http_.Post(full, wrapped);
    else if (method == "PUT") http_.Put(full, wrapped);
    else if (method == "DELETE") http_.Delete(full, wrapped);
  }

  void routes() {
    http_.set_payload_max_length(cfg_.max_upload_bytes);
    http_.set_error_handler([](const Req& req, Res& res) {
      if (res.status == 404 && res.body.empty())
        send(res, 404, error_body("not_found", "no route for " + req.method + " " + req.path));
      else if (res.status == 413)
        send(res, 413, error_body("payload_too_large", "request body exceeds the upload limit"));
    });

    on("POST", "/users", [this](const Req& req, Res& res) {
      const json b = body_json(req);
      const auto id = svc_.create_user(b.at("username").get<std::string>(), b.at("password").get<std::string>());
      send(res, 201, {{"id", id}, {"username", b["username"]}});
    });

    on("POST", "/auth/token", [this](const Req& req, Res& res) {
      std::string user, pass;
      if (req.is_multipart_form_data() || req.has_param("username")) {
        user = req.has_file("username") ? req.get_file_value("username").content : req.get_param_value("username");
        pass = req.has_file("password") ? req.get_file_value("password").content : req.get_param_value("password");
      } else {
        const json b = body_json(req);
        user = b.value("username", "");
        pass = b.value("password", "");
      }
      const auto token = svc_.login(user, pass);
      send(res, 200, {{"access_token", token}, {"token_type", "bearer"}});
    });

    on("GET", "/quota", [this](const Req& req, Res& res) { send(res, 200, svc_.quota(user_of(req))); });

    on("POST", "/datasets", [this](const Req& req, Res& res) {
      const auto owner = user_of(req);
      if (!req.is_multipart_form_data()) throw ArgumentError("upload must be multipart/form-data");
      std::map<std::string, std::string> fields;
      std::vector<Upload> uploads;
      for (const auto& [name, part] : req.files) {
        if (name == "file") uploads.push_back({part.filename, part.content, {}});
        else fields[name] = part.content;
      }
      if (uploads.empty()) throw ArgumentError("multipart field 'file' is required");
      json out = json::array();
      for (auto& u : uploads) {
        u.fields = fields;
        out.push_back(svc_.upload(owner, u));
      }
      send(res, 201, {{"datasets", out}});
    });

    on("GET", "/datasets", [this](const Req& req, Res& res) {
      const auto owner = user_of(req);
      send(res, 200, {{"datasets", svc_.list_datasets(owner)}, {"quota", svc_.quota(owner)}});
    });

    on("GET", "/datasets/:id", [this](const Req& req, Res& res) {
      send(res, 200, svc_.get_dataset(user_of(req), req.path_params.at("id")));
    });

    on("DELETE", "/datasets/:id", [this](const Req& req, Res& res) {
      const auto id = req.path_params.at("id");
      svc_.delete_dataset(user_of(req), id);
      send(res, 200, {{"deleted", id}});
    });

    on("GET", "/basis", [this](const Req& req, Res& res) {
      user_of(req);
      send(res, 200, {{"basis", svc_.list_basis()}});
    });

    on("POST", "/jobs", [this](const Req& req, Res& res) {
      const auto owner = user_of(req);
      const json b = body_json(req);
      if (!b.contains("dataset_ids") || !b["dataset_ids"].is_array())
        throw ArgumentError("dataset_ids must be a list");
      const auto id = svc_.submit_job(owner, b["dataset_ids"].get<std::vector<std::string>>(),
                                      parse_method(b.value("method", "lcm")), b.value("preprocess", false),
                                      b.value("basis", "auto"));
      send(res, 202, svc_.get_job(owner, id));
    });

    on("GET", "/jobs/:id", [this](const Req& req, Res& res) {
      send(res, 200, svc_.get_job(user_of(req), req.path_params.at("id")));
    });

    on("GET", "/jobs/:id/results", [this](const Req& req, Res& res) {
      send(res, 200, svc_.get_results(user_of(req), req.path_params.at("id"), query_size(req, "page", 1),
                                      query_size(req, "page_size", 10)));
    });

    on("GET", "/jobs/:id/export", [this](const Req& req, Res& res) {
      const std::string f = req.has_param("format") ? req.get_param_value("format") : "csv";
      if (f != "csv" && f != "json") throw ArgumentError("format must be csv or json");
      const bool csv = f == "csv";
      res.status = 200;
      res.set_content(svc_.export_job(user_of(req), req.path_params.at("id"),
                                      csv ? io::ExportFormat::csv : io::ExportFormat::json),
                      csv ? "text/csv" : "application/json");
    });

    on("POST", "/analysis/statistics", [this](const Req& req, Res& res) {
      const auto owner = user_of(req);
      const json b = body_json(req);
      std::vector<std::string> inds;
      if (b.contains("indicators")) inds = b["indicators"].get<std::vector<std::string>>();
      else
        for (const auto& i : stats::default_indicators(b.value("preset", "glioma"))) inds.push_back(i.name);
      const std::string center = b.value("levene_center", "mean");
      if (center != "mean" && center != "median") throw ArgumentError("levene_center must be mean or median");
      send(res, 201,
           svc_.run_statistics(owner, b.at("group_a").get<std::vector<std::string>>(),
                               b.at("group_b").get<std::vector<std::string>>(), inds,
                               center == "mean" ? stats::LeveneCenter::mean : stats::LeveneCenter::median));
    });

    on("POST", "/analysis/consistency", [this](const Req& req, Res& res) {
      const auto owner = user_of(req);
      const json b = body_json(req);
      send(res, 201,
           svc_.run_consistency(owner, b.at("dataset_ids").get<std::vector<std::string>>(),
                                b.value("allow_non_healthy", false),
                                b.value("indicators", std::vector<std::string>{})));
    });

    on("GET", "/reports/:id", [this](const Req& req, Res& res) {
      send(res, 200, svc_.get_report(user_of(req), req.path_params.at("id")));
    });

    on("GET", "/reports/:id/export", [this](const Req& req, Res& res) {
      const std::string f = req.has_param("format") ? req.get_param_value("format") : "csv";
      const auto body = svc_.export_report(user_of(req), req.path_params.at("id"), f);
      res.status = 200;
      res.set_content(body, f == "csv" ? "text/csv" : f == "json" ? "application/json" : "text/plain");
    });
  }

  Service& svc_;
  ServerConfig cfg_;
  httplib::Server http_;
  std::thread thread_;
  int port_ = -1;
};

}  // namespace mrsq::platform
