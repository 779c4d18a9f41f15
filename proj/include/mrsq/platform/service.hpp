#pragma once

// Service operations behind the HTTP API: authentication, datasets, batch
// jobs on a worker pool, paginated results, and the group and consistency
// analyses. Every operation takes the calling user's id and enforces ownership.

#include <fmt/format.h>

#include <condition_variable>
#include <deque>
#include <functional>
#include <set>
#include <thread>

#include "mrsq/consistency/consistency.hpp"
#include "mrsq/io/export.hpp"
#include "mrsq/lcm/fit.hpp"
#include "mrsq/platform/catalog.hpp"
#include "mrsq/platform/ingest.hpp"
#include "mrsq/platform/store.hpp"
#include "mrsq/preprocess/denoise.hpp"
#include "mrsq/staged/staged.hpp"
#include "mrsq/stats/indicators.hpp"

namespace mrsq::platform {

using Quantifier = std::function<QuantResult(const Spectrum&, const BasisSet&)>;
using Denoiser = std::function<Spectrum(const Spectrum&)>;

struct ServiceConfig {
  fs::path data_dir = "mrsq-data";
  std::size_t workers = std::max(1u, std::thread::hardware_concurrency());  // 0 leaves jobs queued
  std::uint64_t default_quota = kDefaultQuotaBytes;
  bool seed_demo = true;
  std::string demo_user = "demo";
  std::string demo_password = "demo";
  double token_ttl_seconds = 24 * 3600.0;
  crypto::HashCost hash_cost = crypto::HashCost::interactive;
  lcm::FitConfig lcm;
  staged::StagedConfig staged;
  preprocess::DenoiseConfig denoise;
  // replace the numerical pipelines (tests)
  Quantifier lcm_override, staged_override;
  Denoiser denoise_override;
};

inline constexpr std::size_t kMaxPageSize = 100;

class Service {
 public:
  explicit Service(ServiceConfig cfg) : cfg_(std::move(cfg)), store_(cfg_.data_dir) {
    catalog_.add_builtin();
    catalog_.load_dir(cfg_.data_dir / "basis");
    if (cfg_.seed_demo && !store_.user_by_name(cfg_.demo_user))
      create_user(cfg_.demo_user, cfg_.demo_password);
    const auto ranges_file = cfg_.data_dir / "reference_ranges.json";
    if (fs::exists(ranges_file)) {
      std::ifstream in(ranges_file);
      ranges_ = consistency::parse_reference_ranges(io::parse_json_doc(
          std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>())));
    }
    // requeue work interrupted by a previous shutdown
    for (const auto& job : store_.unfinished_jobs())
      for (const auto& item : job.items) {
        if (item.state == ItemState::running)
          store_.transition_item(job.id, item.dataset_id, ItemState::running, ItemState::pending);
        if (item.state != ItemState::done && item.state != ItemState::failed)
          queue_.push_back({job.id, item.dataset_id});
      }
    for (std::size_t i = 0; i < cfg_.workers; ++i)
      workers_.emplace_back([this](std::stop_token st) { work(st); });
  }

  ~Service() {
    {
      std::lock_guard lock(queue_mu_);
      stopping_ = true;
    }
    queue_cv_.notify_all();
    for (auto& w : workers_) w.request_stop();
    workers_.clear();
  }

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  Store& store() { return store_; }
  const BasisCatalog& catalog() const { return catalog_; }

  // --- users -------------------------------------------------------------------

  std::string create_user(const std::string& name, const std::string& password,
                          std::optional<std::uint64_t> limit = std::nullopt) {
    if (name.empty() || password.empty()) throw ArgumentError("user name and password are required");
    if (store_.user_by_name(name)) throw ConflictError("user name '" + name + "' is taken");
    User u{crypto::random_hex(), name, crypto::hash_password(password, cfg_.hash_cost),
           limit.value_or(cfg_.default_quota)};
    store_.put_user(u);
    return u.id;
  }

  /// Issues an opaque bearer token; only its hash is stored.
  std::string login(const std::string& name, const std::string& password) {
    const auto u = store_.user_by_name(name);
    if (!u || !crypto::verify_password(u->password_hash, password))
      throw AuthError("invalid user name or password");
    const std::string token = crypto::random_hex(32);
    store_.put_token({crypto::sha256_hex(token), u->id, now_seconds() + cfg_.token_ttl_seconds});
    return token;
  }

  std::string authenticate(const std::string& token) const {
    if (token.empty()) throw AuthError("missing bearer token");
    const auto t = store_.token(crypto::sha256_hex(token));
    if (!t) throw AuthError("unknown token");
    if (t->expires < now_seconds()) throw AuthError("token expired");
    return t->user_id;
  }

  void set_quota(const std::string& user_id, std::uint64_t limit) { store_.set_limit(user_id, limit); }

  json quota(const std::string& user_id) const {
    const auto u = store_.user(user_id);
    if (!u) throw NotFoundError("user not found");
    return {{"user", u->name}, {"used_bytes", store_.used_bytes(user_id)}, {"limit_bytes", u->limit_bytes}};
  }

  // --- datasets ----------------------------------------------------------------

  json upload(const std::string& owner, const Upload& up) {
    Ingested in = ingest(up);
    DatasetRecord rec;
    rec.id = in.spectrum.meta.opaque_id;
    rec.owner = owner;
    // client file names often carry subject names
    rec.filename = rec.id + (in.format == "raw" ? ".RAW" : ".json");
    rec.format = in.format;
    rec.meta = in.spectrum.meta;
    rec.acq = in.spectrum.acq;
    rec.created = now_seconds();
    rec.original_blob = store_.put_blob(in.original);
    rec.spectrum_blob = store_.put_blob(in.canonical);
    rec.size_bytes = in.original.size() + (rec.spectrum_blob == rec.original_blob ? 0 : in.canonical.size());
    return dataset_json(store_.add_dataset(std::move(rec)));
  }

  json list_datasets(const std::string& owner) const {
    json out = json::array();
    for (const auto& d : store_.datasets_of(owner)) out.push_back(dataset_json(d));
    return out;
  }

  json get_dataset(const std::string& owner, const std::string& id) const {
    return dataset_json(owned_dataset(owner, id));
  }

  void delete_dataset(const std::string& owner, const std::string& id) {
    owned_dataset(owner, id);
    store_.remove_dataset(id);
  }

  json list_basis() const { return catalog_.list(); }

  // --- jobs --------------------------------------------------------------------

  std::string submit_job(const std::string& owner, const std::vector<std::string>& dataset_ids,
                         JobMethod method, bool preprocess, const std::string& basis = "auto") {
    if (dataset_ids.empty()) throw ArgumentError("job needs at least one dataset");
    if (const auto u = store_.user(owner); u && store_.used_bytes(owner) > u->limit_bytes)
      throw QuotaError("account suspended: storage use exceeds quota");
    std::set<std::string> seen;
    Job job;
    job.id = crypto::random_hex();
    job.owner = owner;
    job.method = method;
    job.preprocess = preprocess;
    job.basis = basis.empty() ? "auto" : basis;
    job.created = now_seconds();
    for (const auto& id : dataset_ids) {
      if (!seen.insert(id).second) throw ArgumentError("dataset " + id + " listed twice");
      const auto d = owned_dataset(owner, id);
      catalog_.resolve(d.acq, job.basis);
      job.items.push_back({id, ItemState::pending, {}});
    }
    store_.put_job(job);
    {
      std::lock_guard lock(queue_mu_);
      for (const auto& id : dataset_ids) queue_.push_back({job.id, id});
    }
    queue_cv_.notify_all();
    return job.id;
  }

  json get_job(const std::string& owner, const std::string& id) const { return job_json(owned_job(owner, id)); }

  /// Blocks until the job is done or failed, or the timeout passes.
  Job wait_job(const std::string& owner, const std::string& id,
               std::chrono::milliseconds timeout = std::chrono::hours(1)) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    std::unique_lock lock(done_mu_);
    for (;;) {
      Job j = owned_job(owner, id);
      if (j.state == JobState::done || j.state == JobState::failed) return j;
      if (done_cv_.wait_until(lock, deadline) == std::cv_status::timeout) {
        j = owned_job(owner, id);
        if (j.state == JobState::done || j.state == JobState::failed) return j;
        throw Error("timed out waiting for job " + id);
      }
    }
  }

  /// One-based pages in dataset upload order. Out-of-range pages are empty.
  json get_results(const std::string& owner, const std::string& job_id, std::size_t page,
                   std::size_t page_size) const {
    owned_job(owner, job_id);
    if (page < 1) throw ArgumentError("page starts at 1");
    if (page_size < 1 || page_size > kMaxPageSize)
      throw ArgumentError(fmt::format("page_size must be in [1, {}]", kMaxPageSize));
    const auto results = store_.results_of_job(job_id);
    json items = json::array();
    const std::size_t first = (page - 1) * page_size;
    for (std::size_t i = first; i < results.size() && i < first + page_size; ++i)
      items.push_back(json::parse(store_.get_blob(results[i].blob)));
    return {{"job_id", job_id}, {"total", results.size()}, {"page", page}, {"page_size", page_size},
            {"items", items}};
  }

  std::string export_job(const std::string& owner, const std::string& job_id, io::ExportFormat fmt) const {
    owned_job(owner, job_id);
    std::vector<QuantResult> rs;
    for (const auto& r : store_.results_of_job(job_id)) rs.push_back(load_result(r));
    return io::export_results(rs, fmt);
  }

  // --- analyses ----------------------------------------------------------------

  json run_statistics(const std::string& owner, const std::vector<std::string>& group_a,
                      const std::vector<std::string>& group_b, const std::vector<std::string>& indicators,
                      stats::LeveneCenter center = stats::LeveneCenter::mean) {
    if (group_a.empty() || group_b.empty()) throw ArgumentError("both groups need datasets");
    if (indicators.empty()) throw ArgumentError("no indicators requested");
    std::vector<stats::Indicator> inds;
    for (const auto& s : indicators) inds.push_back(stats::parse_indicator(s));
    const std::set<std::string> a_set(group_a.begin(), group_a.end());
    for (const auto& id : group_b)
      if (a_set.count(id)) throw ArgumentError("dataset " + id + " is in both groups");
    std::vector<std::string> all = group_a;
    all.insert(all.end(), group_b.begin(), group_b.end());
    for (const auto& id : all) owned_dataset(owner, id);

    std::vector<std::string> warnings;
    ensure_results(owner, all, {QuantMethod::lcm}, warnings);
    auto collect = [&](const std::vector<std::string>& ids) {
      std::vector<QuantResult> out;
      for (const auto& id : ids)
        if (auto r = store_.latest_result(id, QuantMethod::lcm)) out.push_back(load_result(*r));
      return out;
    };
    const auto ra = collect(group_a), rb = collect(group_b);

    json items = json::array();
    std::vector<stats::TestReport> reports;
    std::vector<std::string> significant;
    std::string boxes = "indicator,group,min,q1,median,q3,max,outliers\n";
    for (const auto& ind : inds) {
      const auto va = stats::compute_indicator(ra, ind);
      const auto vb = stats::compute_indicator(rb, ind);
      warnings.insert(warnings.end(), va.warnings.begin(), va.warnings.end());
      warnings.insert(warnings.end(), vb.warnings.begin(), vb.warnings.end());
      auto rep = stats::select_and_test(va.values, vb.values, center);
      rep.indicator = ind.name;
      const auto ba = stats::boxplot_stats(va.values), bb = stats::boxplot_stats(vb.values);
      for (const auto& [label, b] : {std::pair{"a", ba}, std::pair{"b", bb}}) {
        std::string outl;
        for (double o : b.outliers) outl += (outl.empty() ? "" : ";") + io::fmt_number(o);
        boxes += fmt::format("{},{},{},{},{},{},{},{}\n", io::csv_field(ind.name), label, io::fmt_number(b.min),
                             io::fmt_number(b.q1), io::fmt_number(b.median), io::fmt_number(b.q3),
                             io::fmt_number(b.max), outl);
      }
      auto values = [](const stats::IndicatorValues& v) {
        json out = json::array();
        for (std::size_t i = 0; i < v.values.size(); ++i)
          out.push_back({{"dataset_id", v.subjects[i]}, {"value", v.values[i]}});
        return out;
      };
      if (rep.significant) significant.push_back(ind.name);
      items.push_back({{"indicator", ind.name},
                       {"test", stats::to_json(rep)},
                       {"boxplot_a", stats::to_json(ba)},
                       {"boxplot_b", stats::to_json(bb)},
                       {"values_a", values(va)},
                       {"values_b", values(vb)}});
      reports.push_back(rep);
    }
    json report = {{"kind", "statistics"},
                   {"indicators", items},
                   {"significant", significant},
                   {"warnings", warnings},
                   {"exports",
                    {{"csv", stats::reports_csv(reports) + "\n" + boxes},
                     {"text", stats::summary_table(reports, "group A", "group B")}}}};
    return save_report(owner, "statistics", std::move(report), all);
  }

  json run_consistency(const std::string& owner, const std::vector<std::string>& ids,
                       bool allow_non_healthy = false,
                       std::vector<std::string> indicators = {}) {
    if (ids.empty()) throw ArgumentError("no datasets given");
    consistency::ConsistencyOptions opt;
    opt.ranges = ranges_;
    opt.allow_non_healthy = allow_non_healthy;
    for (const auto& id : ids) opt.labels[id] = owned_dataset(owner, id).meta.group;
    if (!allow_non_healthy)
      for (const auto& [id, g] : opt.labels)
        if (g != GroupLabel::healthy)
          throw SelectionError("consistency analysis is limited to healthy subjects: " + id);
    if (ids.size() < 3) throw ArgumentError("bland_altman needs at least 3 pairs");
    auto inds = consistency::default_consistency_indicators();
    for (const auto& s : indicators) {
      auto extra = stats::parse_indicator(s);
      if (std::none_of(inds.begin(), inds.end(), [&](const auto& i) { return i.name == extra.name; }))
        inds.push_back(std::move(extra));
    }

    std::vector<std::string> warnings;
    ensure_results(owner, ids, {QuantMethod::lcm, QuantMethod::staged}, warnings);
    std::vector<QuantResult> ra, rb;
    std::vector<std::string> used;
    for (const auto& id : ids) {
      const auto a = store_.latest_result(id, QuantMethod::lcm);
      const auto b = store_.latest_result(id, QuantMethod::staged);
      if (!a || !b) continue;
      ra.push_back(load_result(*a));
      rb.push_back(load_result(*b));
      used.push_back(id);
    }
    const auto rep = consistency::consistency_report(ra, rb, inds, opt);
    warnings.insert(warnings.end(), rep.warnings.begin(), rep.warnings.end());
    json report = {{"kind", "consistency"},
                   {"method_a", "lcm"},
                   {"method_b", "staged"},
                   {"indicators", consistency::to_json(rep)},
                   {"warnings", warnings},
                   {"exports", {{"csv", consistency::to_csv(rep)}}}};
    return save_report(owner, "consistency", std::move(report), used);
  }

  json get_report(const std::string& owner, const std::string& id) const {
    return json::parse(store_.get_blob(owned_report(owner, id).blob));
  }

  /// csv, json, or text (statistics only).
  std::string export_report(const std::string& owner, const std::string& id, const std::string& format) const {
    const json r = get_report(owner, id);
    if (format == "json") return r.dump(2) + "\n";
    if (r.contains("exports") && r["exports"].contains(format)) return r["exports"][format].get<std::string>();
    throw ArgumentError("unsupported export format '" + format + "' for this report");
  }

 private:
  struct WorkItem {
    std::string job_id, dataset_id;
  };

  DatasetRecord owned_dataset(const std::string& owner, const std::string& id) const {
    const auto d = store_.dataset(id);
    if (!d) throw NotFoundError("dataset " + id + " not found");
    if (d->owner != owner) throw ForbiddenError("dataset " + id + " belongs to another user");
    return *d;
  }

  Job owned_job(const std::string& owner, const std::string& id) const {
    const auto j = store_.job(id);
    if (!j) throw NotFoundError("job " + id + " not found");
    if (j->owner != owner) throw ForbiddenError("job " + id + " belongs to another user");
    return *j;
  }

  ReportRecord owned_report(const std::string& owner, const std::string& id) const {
    const auto r = store_.report(id);
    if (!r) throw NotFoundError("report " + id + " not found");
    if (r->owner != owner) throw ForbiddenError("report " + id + " belongs to another user");
    return *r;
  }

  QuantResult load_result(const ResultRecord& r) const {
    return result_from_json(json::parse(store_.get_blob(r.blob)));
  }

  json save_report(const std::string& owner, const std::string& kind, json report,
                   const std::vector<std::string>& dataset_ids) {
    ReportRecord rec;
    rec.id = crypto::random_hex();
    rec.owner = owner;
    rec.kind = kind;
    rec.dataset_ids = dataset_ids;
    rec.created = now_seconds();
    json out = {{"id", rec.id}};
    out.update(report);
    rec.blob = store_.put_blob(out.dump());
    store_.add_report(rec);
    return out;
  }

  /// Quantifies datasets missing a result for any of `methods` and waits.
  void ensure_results(const std::string& owner, const std::vector<std::string>& ids,
                      const std::vector<QuantMethod>& methods, std::vector<std::string>& warnings) {
    std::vector<std::string> jobs;
    for (auto m : methods) {
      std::vector<std::string> missing;
      for (const auto& id : ids)
        if (!store_.latest_result(id, m)) missing.push_back(id);
      if (!missing.empty())
        jobs.push_back(submit_job(owner, missing, m == QuantMethod::lcm ? JobMethod::lcm : JobMethod::staged, false));
    }
    for (const auto& id : jobs) {
      const Job j = wait_job(owner, id);
      for (const auto& it : j.items)
        if (it.state == ItemState::failed)
          warnings.push_back(fmt::format("dataset {} could not be quantified: {}", it.dataset_id, it.error));
    }
  }

  void work(std::stop_token st) {
    for (;;) {
      WorkItem item;
      {
        std::unique_lock lock(queue_mu_);
        queue_cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
        if (stopping_) return;
        item = std::move(queue_.front());
        queue_.pop_front();
      }
      if (st.stop_requested()) return;
      process(item);
      { std::lock_guard lock(done_mu_); }
      done_cv_.notify_all();
    }
  }

  QuantResult quantify(QuantMethod m, const Spectrum& s, const BasisSet& basis) const {
    if (m == QuantMethod::lcm)
      return cfg_.lcm_override ? cfg_.lcm_override(s, basis) : lcm::fit(s, basis, cfg_.lcm);
    return cfg_.staged_override ? cfg_.staged_override(s, basis)
                                : staged::quantify_staged(s, basis, {}, cfg_.staged);
  }

  /// One (job, dataset) unit. Methods that already have a result are skipped,
  /// so a rerun after a crash does not duplicate results.
  void process(const WorkItem& w) {
    if (!store_.transition_item(w.job_id, w.dataset_id, ItemState::pending, ItemState::running)) return;
    try {
      const auto job = store_.job(w.job_id);
      const auto d = store_.dataset(w.dataset_id);
      if (!job || !d) return;  // removed by a cascade
      Spectrum s = io::read_stored_spectrum(store_.get_blob(d->spectrum_blob));
      RealVec before;
      if (job->preprocess) {
        Spectrum den = cfg_.denoise_override ? cfg_.denoise_override(s) : preprocess::denoise(s, cfg_.denoise);
        const std::string blob = store_.put_blob(io::write_native_spectrum(den));
        if (!store_.set_denoised(d->id, blob)) return;
        for (const auto& z : dft(s.fid)) before.push_back(z.real());
        s = std::move(den);
      }
      const BasisSet basis = catalog_.resolve(s.acq, job->basis);
      for (auto m : methods_of(job->method)) {
        const auto existing = store_.results_of_job(w.job_id);
        if (std::any_of(existing.begin(), existing.end(),
                        [&](const auto& r) { return r.dataset_id == w.dataset_id && r.method == m; }))
          continue;
        QuantResult r = quantify(m, s, basis);
        r.dataset_id = d->id;
        if (job->preprocess) {
          r.denoised = true;
          r.input_before_denoise = before;
        }
        ResultRecord rec;
        rec.id = crypto::random_hex();
        rec.job_id = w.job_id;
        rec.dataset_id = d->id;
        rec.method = m;
        rec.blob = store_.put_blob(result_to_json(r).dump());
        store_.add_result(rec);
      }
      store_.transition_item(w.job_id, w.dataset_id, ItemState::running, ItemState::done);
    } catch (const std::exception& e) {
      store_.transition_item(w.job_id, w.dataset_id, ItemState::running, ItemState::failed, e.what());
    }
  }

  ServiceConfig cfg_;
  Store store_;
  BasisCatalog catalog_;
  consistency::ReferenceRanges ranges_;
  std::mutex queue_mu_;
  std::condition_variable queue_cv_;
  std::deque<WorkItem> queue_;
  bool stopping_ = false;
  std::mutex done_mu_;
  std::condition_variable done_cv_;
  std::vector<std::jthread> workers_;
};

}  // namespace mrsq::platform
