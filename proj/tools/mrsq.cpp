// mrsq: server and command-line client for the /api/v1 API.

#include <CLI11.hpp>

#include <csignal>
#include <cstdlib>
#include <iostream>

#include "mrsq/platform/client.hpp"
#include "mrsq/synthetic.hpp"

namespace fs = std::filesystem;
using mrsq::json;
using namespace mrsq::platform;

namespace {

struct Settings {
  std::string server = "http://127.0.0.1:8080";
  std::string token;
  std::optional<std::uint64_t> quota;
  fs::path config;
};

fs::path default_config() {
  if (const char* p = std::getenv("MRSQ_CONFIG"); p && *p) return p;
  if (const char* h = std::getenv("HOME"); h && *h) return fs::path(h) / ".mrsq.json";
  return ".mrsq.json";
}

json read_config(const fs::path& p) {
  if (!fs::exists(p)) return json::object();
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return json::parse(ss.str());
  } catch (const json::parse_error& e) {
    throw mrsq::ConfigError("config file " + p.string() + " is not valid JSON: " + e.what());
  }
}

void write_config(const fs::path& p, const json& j) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::trunc);
  out << j.dump(2) << "\n";
  fs::permissions(p, fs::perms::owner_read | fs::perms::owner_write, fs::perm_options::replace);
}

std::uint64_t parse_bytes(const std::string& s) {
  std::size_t pos = 0;
  const double v = std::stod(s, &pos);
  std::string unit = s.substr(pos);
  std::transform(unit.begin(), unit.end(), unit.begin(), ::toupper);
  double mult = 1;
  if (unit == "K" || unit == "KB" || unit == "KIB") mult = 1024.0;
  else if (unit == "M" || unit == "MB" || unit == "MIB") mult = 1024.0 * 1024;
  else if (unit == "G" || unit == "GB" || unit == "GIB") mult = 1024.0 * 1024 * 1024;
  else if (!unit.empty() && unit != "B") throw mrsq::ArgumentError("unknown size unit '" + unit + "'");
  if (!(v >= 0)) throw mrsq::ArgumentError("quota must be non-negative");
  return static_cast<std::uint64_t>(v * mult);
}

/// Precedence: command line, then environment, then config file, then default.
Settings resolve(const std::string& cli_server, const std::string& cli_token, const std::string& cli_quota,
                 const std::string& cli_config) {
  Settings s;
  s.config = cli_config.empty() ? default_config() : fs::path(cli_config);
  const json file = read_config(s.config);
  auto pick = [](const std::string& cli, const char* env, const json& file, const char* key, std::string fallback) {
    if (!cli.empty()) return cli;
    if (const char* e = std::getenv(env); e && *e) return std::string(e);
    if (file.contains(key) && file[key].is_string()) return file[key].get<std::string>();
    return fallback;
  };
  s.server = pick(cli_server, "MRSQ_SERVER", file, "server", s.server);
  s.token = pick(cli_token, "MRSQ_TOKEN", file, "token", "");
  if (const auto q = pick(cli_quota, "MRSQ_QUOTA", file, "quota", ""); !q.empty()) s.quota = parse_bytes(q);
  return s;
}

void print(const json& j) { std::cout << j.dump(2) << "\n"; }

std::atomic<Server*> g_server{nullptr};

void on_signal(int) {
  if (auto* s = g_server.load()) s->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MRS quantification platform: server and client"};
  app.require_subcommand(1);
  std::string opt_server, opt_token, opt_quota, opt_config;
  app.add_option("--server", opt_server, "API base URL (env MRSQ_SERVER)");
  app.add_option("--token", opt_token, "bearer token (env MRSQ_TOKEN)");
  app.add_option("--quota", opt_quota, "default per-user quota for serve, e.g. 1G (env MRSQ_QUOTA)");
  app.add_option("--config", opt_config, "config file (env MRSQ_CONFIG, default ~/.mrsq.json)");

  // serve
  auto* serve = app.add_subcommand("serve", "run the HTTP API server");
  std::string data_dir = "mrsq-data", host = "127.0.0.1";
  int port = 8080;
  std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
  bool no_demo = false;
  serve->add_option("--data-dir", data_dir, "store directory")->capture_default_str();
  serve->add_option("--host", host)->capture_default_str();
  serve->add_option("--port", port)->capture_default_str();
  serve->add_option("--workers", workers, "quantification worker threads")->capture_default_str();
  serve->add_flag("--no-demo", no_demo, "do not create the demo/demo account");

  auto* reg = app.add_subcommand("register", "create an account");
  std::string user, password;
  reg->add_option("--user", user)->required();
  reg->add_option("--password", password)->required()->envname("MRSQ_PASSWORD");

  auto* login = app.add_subcommand("login", "obtain a token and save it in the config file");
  login->add_option("--user", user)->required();
  login->add_option("--password", password)->required()->envname("MRSQ_PASSWORD");

  auto* upload = app.add_subcommand("upload", "upload .RAW or native spectra; prints dataset ids");
  std::vector<std::string> files, field_args;
  std::string group;
  upload->add_option("files", files)->required()->check(CLI::ExistingFile);
  upload->add_option("--group", group, "healthy, patient or unlabeled");
  upload->add_option("--field", field_args, "extra form field key=value (acquisition overrides)");

  auto* list = app.add_subcommand("list", "list datasets and quota");
  auto* del = app.add_subcommand("delete", "delete datasets with all derived data");
  std::vector<std::string> ids;
  del->add_option("ids", ids)->required();

  auto* basis = app.add_subcommand("basis", "list basis sets");

  auto* quantify = app.add_subcommand("quantify", "submit a quantification job; prints the job id");
  std::string method = "lcm", basis_choice = "auto";
  bool denoise = false, wait = false;
  quantify->add_option("ids", ids)->required();
  quantify->add_option("--method", method)->check(CLI::IsMember({"lcm", "staged", "both"}))->capture_default_str();
  quantify->add_flag("--denoise", denoise, "denoise before quantification");
  quantify->add_option("--basis", basis_choice, "basis id or auto")->capture_default_str();
  quantify->add_flag("--wait", wait, "block until the job finishes and print it");

  auto* job = app.add_subcommand("job", "show job status");
  std::string id;
  bool job_wait = false;
  job->add_option("id", id)->required();
  job->add_flag("--wait", job_wait);

  auto* results = app.add_subcommand("results", "page through job results");
  std::size_t page = 1, page_size = 10;
  bool summary = false;
  results->add_option("id", id)->required();
  results->add_option("--page", page)->capture_default_str();
  results->add_option("--page-size", page_size)->capture_default_str();
  results->add_flag("--summary", summary, "omit spectra arrays");

  auto* stats_cmd = app.add_subcommand("stats", "two-group statistics report");
  std::vector<std::string> group_a, group_b, indicators;
  std::string center = "mean";
  bool text = false;
  stats_cmd->add_option("--group-a", group_a)->required()->delimiter(',');
  stats_cmd->add_option("--group-b", group_b)->required()->delimiter(',');
  stats_cmd->add_option("--indicator", indicators, "e.g. NAA/Cr; repeatable")->delimiter(',');
  stats_cmd->add_option("--levene-center", center)->check(CLI::IsMember({"mean", "median"}));
  stats_cmd->add_flag("--text", text, "print the summary table instead of JSON");

  auto* cons = app.add_subcommand("consistency", "LCM versus staged consistency report");
  bool allow_non_healthy = false;
  cons->add_option("ids", ids)->required();
  cons->add_flag("--allow-non-healthy", allow_non_healthy);
  cons->add_option("--indicator", indicators, "extra indicators")->delimiter(',');

  auto* exp = app.add_subcommand("export", "download a report or job export");
  std::string report_id, job_id, format = "csv", output;
  auto* r_opt = exp->add_option("--report", report_id);
  auto* j_opt = exp->add_option("--job", job_id);
  r_opt->excludes(j_opt);
  exp->add_option("--format", format)->capture_default_str();
  exp->add_option("-o,--output", output, "write to a file instead of stdout");

  auto* sim = app.add_subcommand("simulate", "write synthetic .RAW subject spectra (offline)");
  std::string out_dir = ".", prefix = "subject";
  int count = 5;
  std::uint64_t seed = 1;
  double snr = 30.0, cv = 0.08;
  std::vector<std::string> scale_args;
  sim->add_option("--out", out_dir)->capture_default_str();
  sim->add_option("--count", count)->capture_default_str()->check(CLI::PositiveNumber);
  sim->add_option("--group", group, "healthy or patient")->default_str("healthy");
  sim->add_option("--prefix", prefix)->capture_default_str();
  sim->add_option("--seed", seed)->capture_default_str();
  sim->add_option("--snr", snr, "raw SNR")->capture_default_str();
  sim->add_option("--cv", cv, "between-subject variation")->capture_default_str();
  sim->add_option("--scale", scale_args, "metabolite factor, e.g. NAA=0.7; repeatable");

  CLI11_PARSE(app, argc, argv);

  if (sim->parsed()) {
    try {
      std::map<std::string, double> scale;
      for (const auto& a : scale_args) {
        const auto eq = a.find('=');
        if (eq == std::string::npos) throw mrsq::ArgumentError("--scale expects NAME=factor, got '" + a + "'");
        scale[a.substr(0, eq)] = std::stod(a.substr(eq + 1));
      }
      fs::create_directories(out_dir);
      std::mt19937_64 rng(seed);
      const mrsq::AcquisitionParams acq;
      for (int i = 1; i <= count; ++i) {
        const auto s = mrsq::synthetic::subject_spectrum(acq, scale, cv, snr, rng);
        const std::map<std::string, std::string> header = {
            {"HZPPPM", fmt::format("{}", acq.transmitter_freq)},
            {"DELTAT", fmt::format("{:.9g}", acq.dwell_time())},
            {"ECHOT", fmt::format("{}", acq.echo_time)},
            {"BZERO", fmt::format("{}", acq.field_strength)},
            {"SEQ", acq.sequence},
            {"GROUP", group.empty() ? "healthy" : group},
            {"PATNAM", fmt::format("{} {}", prefix, i)}};
        const fs::path file = fs::path(out_dir) / fmt::format("{}_{:02d}.RAW", prefix, i);
        std::ofstream(file, std::ios::binary) << mrsq::io::write_raw(s, fmt::format("{}_{:02d}", prefix, i), header);
        std::cout << file.string() << "\n";
      }
      return 0;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 2;
    }
  }

  try {
    const Settings st = resolve(opt_server, opt_token, opt_quota, opt_config);

    if (serve->parsed()) {
      ServiceConfig sc;
      sc.data_dir = data_dir;
      sc.workers = workers;
      sc.seed_demo = !no_demo;
      if (st.quota) sc.default_quota = *st.quota;
      Service svc(sc);
      Server server(svc, {host, port});
      const int p = server.bind();
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cout << "listening on http://" << host << ":" << p << std::endl;
      server.run();
      g_server = nullptr;
      return 0;
    }

    ApiClient api(st.server, st.token);

    if (reg->parsed()) {
      print(api.create_user(user, password));
    } else if (login->parsed()) {
      const auto token = api.login(user, password);
      json cfg = read_config(st.config);
      cfg["server"] = st.server;
      cfg["token"] = token;
      write_config(st.config, cfg);
      std::cout << "logged in as " << user << "; token saved to " << st.config.string() << "\n";
    } else if (upload->parsed()) {
      std::map<std::string, std::string> fields;
      if (!group.empty()) fields["group"] = group;
      for (const auto& f : field_args) {
        const auto eq = f.find('=');
        if (eq == std::string::npos) throw mrsq::ArgumentError("--field expects key=value, got '" + f + "'");
        fields[f.substr(0, eq)] = f.substr(eq + 1);
      }
      for (const auto& f : files) std::cout << api.upload(f, fields).at("id").get<std::string>() << "\n";
    } else if (list->parsed()) {
      print(api.list_datasets());
    } else if (del->parsed()) {
      for (const auto& d : ids) api.delete_dataset(d);
      std::cout << "deleted " << ids.size() << " dataset(s)\n";
    } else if (basis->parsed()) {
      print(api.basis());
    } else if (quantify->parsed()) {
      const json j = api.submit_job(ids, method, denoise, basis_choice);
      const auto jid = j.at("id").get<std::string>();
      if (!wait) {
        std::cout << jid << "\n";
      } else {
        const json done = api.wait_job(jid);
        print(done);
        if (done.at("state") == "failed") return 3;
      }
    } else if (job->parsed()) {
      print(job_wait ? api.wait_job(id) : api.job(id));
    } else if (results->parsed()) {
      json r = api.results(id, page, page_size);
      if (summary)
        for (auto& item : r["items"])
          for (const char* k : {"ppm", "input", "fitted", "residual", "baseline", "per_metabolite_fit",
                                "input_before_denoise"})
            item.erase(k);
      print(r);
    } else if (stats_cmd->parsed()) {
      const json r = api.statistics(group_a, group_b, indicators, center);
      if (text) std::cout << "report " << r.at("id").get<std::string>() << "\n"
                          << r.at("exports").at("text").get<std::string>();
      else print(r);
    } else if (cons->parsed()) {
      print(api.consistency(ids, allow_non_healthy, indicators));
    } else if (exp->parsed()) {
      if (report_id.empty() && job_id.empty()) throw mrsq::ArgumentError("export needs --report or --job");
      const std::string body = report_id.empty() ? api.export_job(job_id, format) : api.export_report(report_id, format);
      if (output.empty()) {
        std::cout << body;
      } else {
        std::ofstream(output, std::ios::binary) << body;
        std::cerr << "wrote " << output << "\n";
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
