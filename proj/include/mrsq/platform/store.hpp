#pragma once

// File-backed store: content-addressed blobs under blobs/ and an append-only
// JSON-lines metadata journal. State is rebuilt by replaying the journal.

#include <fmt/format.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>

#include "mrsq/platform/crypto.hpp"
#include "mrsq/platform/records.hpp"

namespace mrsq::platform {

namespace fs = std::filesystem;

class Store {
 public:
  explicit Store(fs::path root) : root_(std::move(root)) {
    fs::create_directories(root_ / "blobs");
    replay();
    collect_orphans();
    journal_.open(root_ / "journal.jsonl", std::ios::app | std::ios::binary);
    if (!journal_) throw Error("cannot open journal in " + root_.string());
  }

  Store(const Store&) = delete;
  Store& operator=(const Store&) = delete;

  const fs::path& root() const { return root_; }

  // --- blobs -------------------------------------------------------------------

  /// Writes the blob and pins it against collection until a record that
  /// references it is committed or release() is called.
  std::string put_blob(std::string_view bytes) {
    const std::string hash = crypto::sha256_hex(bytes);
    const fs::path p = blob_path(hash);
    {
      std::lock_guard lock(mu_);
      pinned_.insert(hash);
    }
    std::lock_guard lock(blob_mu_);
    if (!fs::exists(p)) {
      const fs::path tmp = p.string() + ".tmp";
      {
        std::ofstream out(tmp, std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw Error("cannot write blob " + hash);
      }
      fs::rename(tmp, p);
    }
    return hash;
  }

  std::string get_blob(const std::string& hash) const {
    std::ifstream in(blob_path(hash), std::ios::binary);
    if (!in) throw NotFoundError("blob " + hash + " not found");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  /// Unpins a blob that will not be committed, deleting it when unreferenced.
  void release(const std::string& hash) {
    std::lock_guard lock(mu_);
    unpin({hash});
    drop_unreferenced({hash});
  }

  /// Hashes of every blob file on disk.
  std::vector<std::string> blob_hashes() const {
    std::vector<std::string> out;
    for (const auto& e : fs::directory_iterator(root_ / "blobs"))
      if (e.is_regular_file() && e.path().extension().empty()) out.push_back(e.path().filename().string());
    std::sort(out.begin(), out.end());
    return out;
  }

  // --- users and tokens --------------------------------------------------------

  void put_user(const User& u) {
    std::lock_guard lock(mu_);
    for (const auto& [id, other] : users_)
      if (other.name == u.name && id != u.id) throw ConflictError("user name '" + u.name + "' is taken");
    commit({{"op", "user"}, {"user", u}});
  }

  std::optional<User> user(const std::string& id) const {
    std::lock_guard lock(mu_);
    if (auto it = users_.find(id); it != users_.end()) return it->second;
    return std::nullopt;
  }

  std::optional<User> user_by_name(const std::string& name) const {
    std::lock_guard lock(mu_);
    for (const auto& [id, u] : users_)
      if (u.name == name) return u;
    return std::nullopt;
  }

  std::size_t user_count() const {
    std::lock_guard lock(mu_);
    return users_.size();
  }

  void set_limit(const std::string& user_id, std::uint64_t limit) {
    std::lock_guard lock(mu_);
    if (!users_.count(user_id)) throw NotFoundError("user " + user_id + " not found");
    commit({{"op", "limit"}, {"user", user_id}, {"limit", limit}});
  }

  std::uint64_t used_bytes(const std::string& user_id) const {
    std::lock_guard lock(mu_);
    auto it = used_.find(user_id);
    return it == used_.end() ? 0 : it->second;
  }

  void put_token(const TokenRecord& t) {
    std::lock_guard lock(mu_);
    commit({{"op", "token"}, {"token", t}});
  }

  std::optional<TokenRecord> token(const std::string& token_hash) const {
    std::lock_guard lock(mu_);
    if (auto it = tokens_.find(token_hash); it != tokens_.end()) return it->second;
    return std::nullopt;
  }

  // --- datasets ----------------------------------------------------------------

  /// Adds the record if it fits the owner's quota; assigns the upload sequence.
  DatasetRecord add_dataset(DatasetRecord rec) {
    std::lock_guard lock(mu_);
    unpin({rec.original_blob, rec.spectrum_blob});
    const auto u = users_.find(rec.owner);
    if (u == users_.end()) {
      drop_unreferenced({rec.original_blob, rec.spectrum_blob});
      throw NotFoundError("user " + rec.owner + " not found");
    }
    const std::uint64_t used = used_[rec.owner];
    if (used + rec.size_bytes > u->second.limit_bytes) {
      drop_unreferenced({rec.original_blob, rec.spectrum_blob});
      throw QuotaError(fmt::format("upload of {} bytes exceeds quota ({} of {} bytes used)",
                                   rec.size_bytes, used, u->second.limit_bytes));
    }
    rec.seq = ++seq_;
    commit({{"op", "dataset"}, {"dataset", rec}});
    return rec;
  }

  std::optional<DatasetRecord> dataset(const std::string& id) const {
    std::lock_guard lock(mu_);
    if (auto it = datasets_.find(id); it != datasets_.end()) return it->second;
    return std::nullopt;
  }

  std::vector<DatasetRecord> datasets_of(const std::string& owner) const {
    std::lock_guard lock(mu_);
    std::vector<DatasetRecord> out;
    for (const auto& [id, d] : datasets_)
      if (d.owner == owner) out.push_back(d);
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.seq < b.seq; });
    return out;
  }

  std::vector<DatasetRecord> all_datasets() const {
    std::lock_guard lock(mu_);
    std::vector<DatasetRecord> out;
    for (const auto& [id, d] : datasets_) out.push_back(d);
    return out;
  }

  /// False when the dataset no longer exists.
  bool set_denoised(const std::string& id, const std::string& blob) {
    std::lock_guard lock(mu_);
    unpin({blob});
    if (!datasets_.count(id)) {
      drop_unreferenced({blob});
      return false;
    }
    commit({{"op", "denoised"}, {"id", id}, {"blob", blob}});
    return true;
  }

  /// Removes the dataset with its derived blobs, results, reports and job items.
  void remove_dataset(const std::string& id) {
    std::lock_guard lock(mu_);
    if (!datasets_.count(id)) throw NotFoundError("dataset " + id + " not found");
    const auto before = referenced_blobs();
    commit({{"op", "dataset_delete"}, {"id", id}});
    const auto after = referenced_blobs();
    std::vector<std::string> gone;
    std::set_difference(before.begin(), before.end(), after.begin(), after.end(), std::back_inserter(gone));
    for (const auto& h : gone) fs::remove(blob_path(h));
    compact();
  }

  // --- jobs --------------------------------------------------------------------

  void put_job(const Job& j) {
    std::lock_guard lock(mu_);
    commit({{"op", "job"}, {"job", j}});
  }

  std::optional<Job> job(const std::string& id) const {
    std::lock_guard lock(mu_);
    if (auto it = jobs_.find(id); it != jobs_.end()) return it->second;
    return std::nullopt;
  }

  std::vector<Job> unfinished_jobs() const {
    std::lock_guard lock(mu_);
    std::vector<Job> out;
    for (const auto& [id, j] : jobs_)
      if (j.state == JobState::queued || j.state == JobState::running) out.push_back(j);
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.created < b.created; });
    return out;
  }

  /// Compare-and-set on one item; the job state follows its items.
  bool transition_item(const std::string& job_id, const std::string& dataset_id, ItemState from,
                       ItemState to, const std::string& error = {}) {
    std::lock_guard lock(mu_);
    auto it = jobs_.find(job_id);
    if (it == jobs_.end()) return false;
    Job j = it->second;
    bool hit = false;
    for (auto& item : j.items)
      if (item.dataset_id == dataset_id && item.state == from) {
        item.state = to;
        item.error = error;
        hit = true;
      }
    if (!hit) return false;
    settle(j);
    commit({{"op", "job"}, {"job", j}});
    return true;
  }

  // --- results -----------------------------------------------------------------

  /// False when (job, dataset, method) already has a result or the dataset is gone.
  bool add_result(ResultRecord r) {
    std::lock_guard lock(mu_);
    unpin({r.blob});
    const bool duplicate = std::any_of(results_.begin(), results_.end(), [&](const auto& kv) {
      const auto& o = kv.second;
      return o.job_id == r.job_id && o.dataset_id == r.dataset_id && o.method == r.method;
    });
    if (duplicate || !datasets_.count(r.dataset_id) || !jobs_.count(r.job_id)) {
      drop_unreferenced({r.blob});
      return false;
    }
    r.seq = ++seq_;
    commit({{"op", "result"}, {"result", r}});
    return true;
  }

  /// Upload order of the dataset, then lcm before staged.
  std::vector<ResultRecord> results_of_job(const std::string& job_id) const {
    std::lock_guard lock(mu_);
    std::vector<ResultRecord> out;
    for (const auto& [id, r] : results_)
      if (r.job_id == job_id) out.push_back(r);
    auto key = [&](const ResultRecord& r) {
      return std::pair(datasets_.at(r.dataset_id).seq, static_cast<int>(r.method));
    };
    std::sort(out.begin(), out.end(), [&](const auto& a, const auto& b) { return key(a) < key(b); });
    return out;
  }

  std::optional<ResultRecord> latest_result(const std::string& dataset_id, QuantMethod m) const {
    std::lock_guard lock(mu_);
    std::optional<ResultRecord> best;
    for (const auto& [id, r] : results_)
      if (r.dataset_id == dataset_id && r.method == m && (!best || r.seq > best->seq)) best = r;
    return best;
  }

  std::size_t result_count() const {
    std::lock_guard lock(mu_);
    return results_.size();
  }

  // --- reports -----------------------------------------------------------------

  void add_report(const ReportRecord& r) {
    std::lock_guard lock(mu_);
    unpin({r.blob});
    for (const auto& id : r.dataset_ids)
      if (!datasets_.count(id)) {
        drop_unreferenced({r.blob});
        throw NotFoundError("dataset " + id + " not found");
      }
    commit({{"op", "report"}, {"report", r}});
  }

  std::optional<ReportRecord> report(const std::string& id) const {
    std::lock_guard lock(mu_);
    if (auto it = reports_.find(id); it != reports_.end()) return it->second;
    return std::nullopt;
  }

 private:
  fs::path blob_path(const std::string& hash) const {
    if (hash.size() != 64 || hash.find_first_not_of("0123456789abcdef") != std::string::npos)
      throw ArgumentError("malformed blob hash");
    return root_ / "blobs" / hash;
  }

  static void settle(Job& j) {
    bool all_terminal = true, any_done = false, any_started = false;
    for (const auto& it : j.items) {
      all_terminal &= it.state == ItemState::done || it.state == ItemState::failed;
      any_done |= it.state == ItemState::done;
      any_started |= it.state != ItemState::pending;
    }
    if (all_terminal && !j.items.empty()) {
      j.state = any_done ? JobState::done : JobState::failed;
      if (j.finished == 0.0) j.finished = now_seconds();
    } else if (any_started) {
      j.state = JobState::running;
    }
  }

  void commit(const json& entry) {
    apply(entry);
    if (journal_.is_open()) {
      journal_ << entry.dump() << '\n';
      journal_.flush();
      if (!journal_) throw Error("journal write failed");
    }
  }

  void apply(const json& e) {
    const std::string op = e.at("op").get<std::string>();
    if (op == "user") {
      auto u = e.at("user").get<User>();
      users_[u.id] = u;
    } else if (op == "limit") {
      users_.at(e.at("user").get<std::string>()).limit_bytes = e.at("limit").get<std::uint64_t>();
    } else if (op == "token") {
      auto t = e.at("token").get<TokenRecord>();
      tokens_[t.token_hash] = t;
    } else if (op == "dataset") {
      auto d = e.at("dataset").get<DatasetRecord>();
      used_[d.owner] += d.size_bytes;
      seq_ = std::max(seq_, d.seq);
      datasets_[d.id] = d;
    } else if (op == "denoised") {
      if (auto it = datasets_.find(e.at("id").get<std::string>()); it != datasets_.end())
        it->second.denoised_blob = e.at("blob").get<std::string>();
    } else if (op == "dataset_delete") {
      cascade_delete(e.at("id").get<std::string>());
    } else if (op == "job") {
      auto j = e.at("job").get<Job>();
      jobs_[j.id] = j;
    } else if (op == "result") {
      auto r = e.at("result").get<ResultRecord>();
      seq_ = std::max(seq_, r.seq);
      results_[r.id] = r;
    } else if (op == "report") {
      auto r = e.at("report").get<ReportRecord>();
      reports_[r.id] = r;
    } else {
      throw ParseError("unknown journal entry '" + op + "'");
    }
  }

  void cascade_delete(const std::string& id) {
    auto it = datasets_.find(id);
    if (it == datasets_.end()) return;
    used_[it->second.owner] -= it->second.size_bytes;
    datasets_.erase(it);
    std::erase_if(results_, [&](const auto& kv) { return kv.second.dataset_id == id; });
    std::erase_if(reports_, [&](const auto& kv) {
      const auto& ids = kv.second.dataset_ids;
      return std::find(ids.begin(), ids.end(), id) != ids.end();
    });
    for (auto jt = jobs_.begin(); jt != jobs_.end();) {
      auto& items = jt->second.items;
      std::erase_if(items, [&](const JobItem& item) { return item.dataset_id == id; });
      if (items.empty()) {
        jt = jobs_.erase(jt);
      } else {
        settle(jt->second);
        ++jt;
      }
    }
  }

  std::set<std::string> referenced_blobs() const {
    std::set<std::string> out;
    for (const auto& [id, d] : datasets_)
      for (const auto* h : {&d.original_blob, &d.spectrum_blob, &d.denoised_blob})
        if (!h->empty()) out.insert(*h);
    for (const auto& [id, r] : results_) out.insert(r.blob);
    for (const auto& [id, r] : reports_) out.insert(r.blob);
    out.insert(pinned_.begin(), pinned_.end());
    return out;
  }

  void unpin(std::initializer_list<std::string> hashes) {
    for (const auto& h : hashes)
      if (auto it = pinned_.find(h); it != pinned_.end()) pinned_.erase(it);
  }

  void drop_unreferenced(std::initializer_list<std::string> hashes) {
    const auto refs = referenced_blobs();
    for (const auto& h : hashes)
      if (!h.empty() && !refs.count(h)) fs::remove(blob_path(h));
  }

  /// Rewrites the journal as a snapshot of the current state, so deleted
  /// records leave no trace in it.
  void compact() {
    const fs::path path = root_ / "journal.jsonl", tmp = root_ / "journal.jsonl.tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      auto put = [&](const json& e) { out << e.dump() << '\n'; };
      const double now = now_seconds();
      for (const auto& [id, u] : users_) put({{"op", "user"}, {"user", u}});
      for (const auto& [h, t] : tokens_)
        if (t.expires > now) put({{"op", "token"}, {"token", t}});
      std::vector<const DatasetRecord*> ds;
      for (const auto& [id, d] : datasets_) ds.push_back(&d);
      std::sort(ds.begin(), ds.end(), [](auto* a, auto* b) { return a->seq < b->seq; });
      for (const auto* d : ds) put({{"op", "dataset"}, {"dataset", *d}});
      for (const auto& [id, j] : jobs_) put({{"op", "job"}, {"job", j}});
      for (const auto& [id, r] : results_) put({{"op", "result"}, {"result", r}});
      for (const auto& [id, r] : reports_) put({{"op", "report"}, {"report", r}});
      out.flush();
      if (!out) throw Error("journal compaction failed");
    }
    journal_.close();
    fs::rename(tmp, path);
    journal_.open(path, std::ios::app | std::ios::binary);
    if (!journal_) throw Error("cannot reopen journal in " + root_.string());
  }

  void replay() {
    std::ifstream in(root_ / "journal.jsonl", std::ios::binary);
    if (!in) return;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      json e;
      try {
        e = json::parse(line);
      } catch (const json::parse_error&) {
        if (in.peek() == EOF) break;  // torn final write
        throw ParseError("corrupt journal entry", line_no);
      }
      apply(e);
    }
  }

  /// Removes blobs left behind by writes that never reached the journal.
  void collect_orphans() {
    const auto refs = referenced_blobs();
    for (const auto& e : fs::directory_iterator(root_ / "blobs")) {
      const auto name = e.path().filename().string();
      if (e.path().extension() == ".tmp" || !refs.count(name)) fs::remove(e.path());
    }
  }

  fs::path root_;
  std::ofstream journal_;
  mutable std::mutex mu_;
  std::mutex blob_mu_;
  std::uint64_t seq_ = 0;
  std::multiset<std::string> pinned_;
  std::map<std::string, User> users_;
  std::map<std::string, TokenRecord> tokens_;
  std::map<std::string, std::uint64_t> used_;
  std::map<std::string, DatasetRecord> datasets_;
  std::map<std::string, Job> jobs_;
  std::map<std::string, ResultRecord> results_;
  std::map<std::string, ReportRecord> reports_;
};

}  // namespace mrsq::platform
