#pragma once

// Metadata records kept by the store, with their journal encoding.

#include <chrono>
#include <cstdint>
#include <string>
#include <vector>

#include "mrsq/io/json.hpp"
#include "mrsq/signal/types.hpp"

// Field-list (de)serializers for any nlohmann json flavour.
#define MRSQ_JSON_RECORD(Type, ...)                                                         \
  template <class J>                                                                        \
  void to_json(J& nlohmann_json_j, const Type& nlohmann_json_t) {                           \
    NLOHMANN_JSON_EXPAND(NLOHMANN_JSON_PASTE(NLOHMANN_JSON_TO, __VA_ARGS__))                \
  }                                                                                         \
  template <class J>                                                                        \
  void from_json(const J& nlohmann_json_j, Type& nlohmann_json_t) {                         \
    NLOHMANN_JSON_EXPAND(NLOHMANN_JSON_PASTE(NLOHMANN_JSON_FROM, __VA_ARGS__))              \
  }

namespace mrsq::platform {

inline constexpr std::uint64_t kDefaultQuotaBytes = 1ull << 30;

inline double now_seconds() {
  using namespace std::chrono;
  return duration<double>(system_clock::now().time_since_epoch()).count();
}

enum class JobMethod { lcm, staged, both };
enum class JobState { queued, running, done, failed };
enum class ItemState { pending, running, done, failed };

NLOHMANN_JSON_SERIALIZE_ENUM(JobMethod, {{JobMethod::lcm, "lcm"},
                                         {JobMethod::staged, "staged"},
                                         {JobMethod::both, "both"}})
NLOHMANN_JSON_SERIALIZE_ENUM(JobState, {{JobState::queued, "queued"},
                                        {JobState::running, "running"},
                                        {JobState::done, "done"},
                                        {JobState::failed, "failed"}})
NLOHMANN_JSON_SERIALIZE_ENUM(ItemState, {{ItemState::pending, "pending"},
                                         {ItemState::running, "running"},
                                         {ItemState::done, "done"},
                                         {ItemState::failed, "failed"}})

inline JobMethod parse_method(std::string_view s) {
  if (s == "lcm") return JobMethod::lcm;
  if (s == "staged") return JobMethod::staged;
  if (s == "both") return JobMethod::both;
  throw ArgumentError("method must be lcm, staged or both, got '" + std::string(s) + "'");
}

inline std::vector<QuantMethod> methods_of(JobMethod m) {
  switch (m) {
    case JobMethod::lcm: return {QuantMethod::lcm};
    case JobMethod::staged: return {QuantMethod::staged};
    case JobMethod::both: return {QuantMethod::lcm, QuantMethod::staged};
  }
  return {};
}

struct User {
  std::string id;
  std::string name;
  std::string password_hash;
  std::uint64_t limit_bytes = kDefaultQuotaBytes;
};

struct TokenRecord {
  std::string token_hash;
  std::string user_id;
  double expires = 0.0;
};

struct DatasetRecord {
  std::string id;  // equals meta.opaque_id
  std::string owner;
  std::string filename;
  std::string format;         // "raw" or "native"
  std::string original_blob;  // sanitized upload
  std::string spectrum_blob;  // canonical native document
  std::string denoised_blob;  // empty until a job denoises it
  std::uint64_t size_bytes = 0;
  std::uint64_t seq = 0;      // upload order
  double created = 0.0;
  SubjectMeta meta;
  AcquisitionParams acq;
};

struct JobItem {
  std::string dataset_id;
  ItemState state = ItemState::pending;
  std::string error;
};

struct Job {
  std::string id;
  std::string owner;
  std::vector<JobItem> items;
  JobMethod method = JobMethod::lcm;
  bool preprocess = false;
  std::string basis = "auto";
  JobState state = JobState::queued;
  double created = 0.0;
  double finished = 0.0;

  const JobItem* item(std::string_view dataset) const {
    for (const auto& it : items)
      if (it.dataset_id == dataset) return &it;
    return nullptr;
  }
};

struct ResultRecord {
  std::string id;
  std::string job_id;
  std::string dataset_id;
  QuantMethod method = QuantMethod::lcm;
  std::string blob;
  std::uint64_t seq = 0;
};

struct ReportRecord {
  std::string id;
  std::string owner;
  std::string kind;  // "statistics" or "consistency"
  std::string blob;
  std::vector<std::string> dataset_ids;
  double created = 0.0;
};

MRSQ_JSON_RECORD(User, id, name, password_hash, limit_bytes)
MRSQ_JSON_RECORD(TokenRecord, token_hash, user_id, expires)
MRSQ_JSON_RECORD(DatasetRecord, id, owner, filename, format, original_blob,
                                   spectrum_blob, denoised_blob, size_bytes, seq, created, meta, acq)
MRSQ_JSON_RECORD(JobItem, dataset_id, state, error)
MRSQ_JSON_RECORD(Job, id, owner, items, method, preprocess, basis, state, created,
                                   finished)
MRSQ_JSON_RECORD(ResultRecord, id, job_id, dataset_id, method, blob, seq)
MRSQ_JSON_RECORD(ReportRecord, id, owner, kind, blob, dataset_ids, created)

/// Public view of a dataset (no blob hashes).
inline json dataset_json(const DatasetRecord& d) {
  return {{"id", d.id},         {"filename", d.filename}, {"format", d.format},
          {"size_bytes", d.size_bytes}, {"created", d.created}, {"meta", d.meta},
          {"acq", d.acq}};
}

inline json job_json(const Job& j) {
  json items = json::array();
  for (const auto& it : j.items) {
    json e = {{"dataset_id", it.dataset_id}, {"state", it.state}};
    if (!it.error.empty()) e["error"] = it.error;
    items.push_back(e);
  }
  json out = {{"id", j.id},           {"method", j.method},   {"preprocess", j.preprocess},
              {"basis", j.basis},     {"state", j.state},     {"items", items},
              {"created", j.created}};
  if (j.finished > 0.0) out["finished"] = j.finished;
  return out;
}

}  // namespace mrsq::platform
