#include <gtest/gtest.h>

#include "platform_fixtures.hpp"

using namespace fixtures;

namespace {

std::vector<std::string> ids_of(const json& arr) {
  std::vector<std::string> out;
  for (const auto& d : arr) out.push_back(d.at("id").get<std::string>());
  return out;
}

std::size_t count_state(const Job& j, ItemState s) {
  return static_cast<std::size_t>(
      std::count_if(j.items.begin(), j.items.end(), [&](const auto& it) { return it.state == s; }));
}

}  // namespace

// --- crypto and store ----------------------------------------------------------

TEST(Crypto, PasswordHashVerifiesAndIsSalted) {
  const auto a = crypto::hash_password("s3cret", crypto::HashCost::minimal);
  const auto b = crypto::hash_password("s3cret", crypto::HashCost::minimal);
  EXPECT_NE(a, b);
  EXPECT_EQ(a.find("s3cret"), std::string::npos);
  EXPECT_TRUE(crypto::verify_password(a, "s3cret"));
  EXPECT_FALSE(crypto::verify_password(a, "s3cret!"));
  EXPECT_EQ(crypto::sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Store, ReplayRestoresState) {
  TempDir dir;
  std::string blob;
  {
    Store st(dir.path);
    st.put_user({"u1", "alice", "h", 1000});
    blob = st.put_blob("payload");
    DatasetRecord d;
    d.id = "d1";
    d.owner = "u1";
    d.original_blob = d.spectrum_blob = blob;
    d.size_bytes = 7;
    st.add_dataset(d);
    st.put_job({"j1", "u1", {{"d1", ItemState::pending, ""}}});
    ASSERT_TRUE(st.transition_item("j1", "d1", ItemState::pending, ItemState::running));
    st.set_limit("u1", 2000);
  }
  Store st(dir.path);
  ASSERT_TRUE(st.user_by_name("alice"));
  EXPECT_EQ(st.user("u1")->limit_bytes, 2000u);
  EXPECT_EQ(st.used_bytes("u1"), 7u);
  EXPECT_EQ(st.get_blob(blob), "payload");
  EXPECT_EQ(st.job("j1")->state, JobState::running);
  EXPECT_EQ(st.dataset("d1")->seq, 1u);
}

TEST(Store, TornFinalJournalLineIsIgnoredButCorruptionIsNot) {
  TempDir dir;
  { Store(dir.path).put_user({"u1", "alice", "h", 10}); }
  { std::ofstream(dir.path / "journal.jsonl", std::ios::app) << R"({"op":"user","us)"; }
  EXPECT_TRUE(Store(dir.path).user("u1"));

  TempDir bad;
  {
    std::ofstream out(bad.path / "journal.jsonl");
    out << "{broken\n" << json{{"op", "user"}, {"user", User{"u", "n", "h", 1}}}.dump() << "\n";
  }
  EXPECT_THROW(Store{bad.path}, ParseError);
}

TEST(Store, UncommittedBlobsAreCollectedAtOpen) {
  TempDir dir;
  std::string h;
  {
    Store st(dir.path);
    h = st.put_blob("never committed");
  }
  Store st(dir.path);
  EXPECT_TRUE(st.blob_hashes().empty());
  EXPECT_THROW(st.get_blob(h), NotFoundError);
}

TEST(Store, DuplicateResultIsRejected) {
  TempDir dir;
  Store st(dir.path);
  st.put_user({"u1", "a", "h", 100});
  DatasetRecord d;
  d.id = "d1";
  d.owner = "u1";
  d.original_blob = d.spectrum_blob = st.put_blob("x");
  st.add_dataset(d);
  st.put_job({"j1", "u1", {{"d1", ItemState::pending, ""}}});
  ResultRecord r{"r1", "j1", "d1", QuantMethod::lcm, st.put_blob("res"), 0};
  EXPECT_TRUE(st.add_result(r));
  r.id = "r2";
  r.blob = st.put_blob("res2");
  EXPECT_FALSE(st.add_result(r));
  EXPECT_EQ(st.result_count(), 1u);
}

// --- users and auth ------------------------------------------------------------

TEST(Auth, LoginIssuesTokensAndRejectsBadCredentials) {
  TempDir dir;
  auto cfg = fast_config(dir.path, 0);
  cfg.seed_demo = true;
  Service svc(cfg);
  const auto token = svc.login("demo", "demo");
  EXPECT_EQ(svc.authenticate(token), svc.store().user_by_name("demo")->id);
  EXPECT_THROW(svc.login("demo", "wrong"), AuthError);
  EXPECT_THROW(svc.login("nobody", "demo"), AuthError);
  EXPECT_THROW(svc.authenticate("deadbeef"), AuthError);
  EXPECT_THROW(svc.authenticate(""), AuthError);
  EXPECT_THROW(svc.create_user("demo", "x"), ConflictError);
  EXPECT_THROW(svc.create_user("", "x"), ArgumentError);
  EXPECT_EQ(files_mentioning(dir.path, token), 0u);
}

TEST(Auth, ExpiredTokenIsRejected) {
  TempDir dir;
  auto cfg = fast_config(dir.path, 0);
  cfg.token_ttl_seconds = -1.0;
  Service svc(cfg);
  svc.create_user("bob", "pw");
  EXPECT_THROW(svc.authenticate(svc.login("bob", "pw")), AuthError);
}

TEST(Auth, DemoAccountSeededOnceAndPasswordNotStored) {
  TempDir dir;
  auto cfg = fast_config(dir.path, 0);
  cfg.seed_demo = true;
  cfg.demo_password = "demo-pass-xyz";
  { Service svc(cfg); }
  Service svc(cfg);
  EXPECT_EQ(svc.store().user_count(), 1u);
  EXPECT_EQ(files_mentioning(dir.path, "demo-pass-xyz"), 0u);
}

// --- uploads and anonymization -------------------------------------------------

TEST(Upload, RawIsAnonymizedAtRest) {
  TempDir dir;
  Service svc(fast_config(dir.path, 0));
  const auto u = svc.create_user("alice", "pw");
  std::mt19937_64 rng(1);
  Upload up = raw_upload(rng, "healthy");
  up.fields["age"] = "41";
  up.fields["patient_id"] = "MRN-77123";
  const json d = svc.upload(u, up);
  EXPECT_EQ(d["meta"]["group_label"], "healthy");
  EXPECT_EQ(d["meta"]["age"], 41.0);
  EXPECT_EQ(d["format"], "raw");
  EXPECT_EQ(d["acq"]["num_points"], 512);
  for (const char* phi : {"Jane", "Roe", "PATNAM", "MRN-77123", "scan'"})
    EXPECT_EQ(files_mentioning(dir.path, phi), 0u) << phi;
  // the sanitized original still parses to the same samples
  const auto rec = *svc.store().dataset(d["id"].get<std::string>());
  const auto again = io::parse_raw(svc.store().get_blob(rec.original_blob));
  const auto canon = io::read_stored_spectrum(svc.store().get_blob(rec.spectrum_blob));
  ASSERT_EQ(again.fid.size(), canon.fid.size());
  EXPECT_EQ(again.acq.spectral_width, canon.acq.spectral_width);
  EXPECT_EQ(again.acq.transmitter_freq, canon.acq.transmitter_freq);
}

TEST(Upload, NativeRoundTripAndErrors) {
  TempDir dir;
  Service svc(fast_config(dir.path, 0));
  const auto u = svc.create_user("alice", "pw");
  std::mt19937_64 rng(2);
  Spectrum s = synthetic::subject_spectrum(small_acq(), {}, 0.05, 30.0, rng);
  s.meta.group = GroupLabel::patient;
  const json d = svc.upload(u, {"x.json", io::write_native_spectrum(s), {}});
  EXPECT_EQ(d["format"], "native");
  EXPECT_EQ(d["meta"]["group_label"], "patient");
  EXPECT_THROW(svc.upload(u, {"x.RAW", "", {}}), ArgumentError);
  EXPECT_THROW(svc.upload(u, {"x.RAW", " $NMID\n ID='a'\n 1 2 3\n", {}}), ParseError);
  EXPECT_THROW(svc.upload(u, {"x.json", "{not json", {}}), ParseError);
  Upload bad = raw_upload(rng, "healthy");
  bad.fields["spectral_width"] = "wide";
  EXPECT_THROW(svc.upload(u, bad), ArgumentError);
}

TEST(Upload, FormFieldsOverrideAcquisition) {
  TempDir dir;
  Service svc(fast_config(dir.path, 0));
  const auto u = svc.create_user("alice", "pw");
  std::mt19937_64 rng(3);
  Upload up = raw_upload(rng, "healthy");
  up.fields["echo_time"] = "144";
  up.fields["group"] = "patient";
  const json d = svc.upload(u, up);
  EXPECT_EQ(d["acq"]["echo_time"], 144.0);
  EXPECT_EQ(d["meta"]["group_label"], "patient");
}

// --- quota ---------------------------------------------------------------------

TEST(Quota, RandomUploadDeleteSequencesKeepAccountingExact) {
  TempDir dir;
  auto cfg = fast_config(dir.path, 0);
  cfg.default_quota = 120'000;
  std::mt19937_64 rng(11);
  std::vector<std::string> users;
  std::map<std::string, std::vector<std::string>> owned;
  {
    Service svc(cfg);
    for (const char* n : {"a", "b", "c"}) users.push_back(svc.create_user(n, "pw"));
    std::size_t rejected = 0;
    for (int step = 0; step < 80; ++step) {
      const auto& u = users[rng() % users.size()];
      auto& mine = owned[u];
      if (mine.empty() || rng() % 3 != 0) {
        const std::size_t n = std::size_t{128} << (rng() % 3);
        const auto used = svc.store().used_bytes(u);
        try {
          const json d = svc.upload(u, raw_upload(rng, "healthy", 1.0, n));
          mine.push_back(d["id"]);
          EXPECT_EQ(svc.store().used_bytes(u), used + d["size_bytes"].get<std::uint64_t>());
        } catch (const QuotaError&) {
          ++rejected;
          EXPECT_EQ(svc.store().used_bytes(u), used);
        }
      } else {
        const auto k = rng() % mine.size();
        svc.delete_dataset(u, mine[k]);
        mine.erase(mine.begin() + static_cast<long>(k));
      }
      for (const auto& v : users) {
        std::uint64_t sum = 0;
        for (const auto& d : svc.store().datasets_of(v)) sum += d.size_bytes;
        ASSERT_EQ(sum, svc.store().used_bytes(v));
        ASSERT_LE(sum, cfg.default_quota);
        ASSERT_EQ(svc.store().datasets_of(v).size(), owned[v].size());
      }
    }
    EXPECT_GT(rejected, 0u);
  }
  Service svc(cfg);
  for (const auto& v : users) {
    std::uint64_t sum = 0;
    for (const auto& d : svc.store().datasets_of(v)) sum += d.size_bytes;
    EXPECT_EQ(sum, svc.store().used_bytes(v));
  }
  // every blob on disk is referenced by a live record
  std::set<std::string> live;
  for (const auto& d : svc.store().all_datasets()) live.insert({d.original_blob, d.spectrum_blob});
  for (const auto& h : svc.store().blob_hashes()) EXPECT_TRUE(live.count(h));
}

TEST(Quota, OverQuotaAccountIsSuspendedFromJobs) {
  TempDir dir;
  Service svc(fast_config(dir.path, 0));
  const auto u = svc.create_user("alice", "pw");
  std::mt19937_64 rng(4);
  const auto ids = upload_group(svc, u, rng, 2, "healthy");
  svc.set_quota(u, 10);
  EXPECT_THROW(svc.submit_job(u, ids, JobMethod::lcm, false), QuotaError);
  EXPECT_THROW(svc.upload(u, raw_upload(rng, "healthy")), QuotaError);
  EXPECT_EQ(svc.quota(u)["limit_bytes"], 10u);
}

// --- jobs ----------------------------------------------------------------------

TEST(Jobs, SubmissionCreatesPendingItems) {
  TempDir dir;
  Service svc(fast_config(dir.path, 0));
  const auto u = svc.create_user("alice", "pw");
  std::mt19937_64 rng(5);
  const auto ids = upload_group(svc, u, rng, 5, "healthy");
  const json j = svc.get_job(u, svc.submit_job(u, ids, JobMethod::lcm, true));
  EXPECT_EQ(j["state"], "queued");
  ASSERT_EQ(j["items"].size(), 5u);
  for (const auto& it : j["items"]) EXPECT_EQ(it["state"], "pending");
  EXPECT_EQ(j["preprocess"], true);
}

TEST(Jobs, ValidationErrors) {
  TempDir dir;
  Service svc(fast_config(dir.path, 0));
  const auto u = svc.create_user("alice", "pw");
  const auto v = svc.create_user("bob", "pw");
  std::mt19937_64 rng(6);
  const auto ids = upload_group(svc, u, rng, 2, "healthy");
  EXPECT_THROW(svc.submit_job(u, {}, JobMethod::lcm, false), ArgumentError);
  EXPECT_THROW(svc.submit_job(u, {"nope"}, JobMethod::lcm, false), NotFoundError);
  EXPECT_THROW(svc.submit_job(v, ids, JobMethod::lcm, false), ForbiddenError);
  EXPECT_THROW(svc.submit_job(u, ids, JobMethod::lcm, false, "no-such-basis"), SelectionError);
  EXPECT_THROW(svc.submit_job(u, {ids[0], ids[0]}, JobMethod::lcm, false), ArgumentError);
  EXPECT_THROW(parse_method("fast"), ArgumentError);
  EXPECT_NO_THROW(svc.submit_job(u, ids, JobMethod::lcm, false, "sim-3T-PRESS-TE35"));
}

TEST(Jobs, BothMethodsOnFifteenDatasetsGiveThirtyResults) {
  TempDir dir;
  Service svc(fast_config(dir.path, 2));
  const auto u = svc.create_user("alice", "pw");
  std::mt19937_64 rng(7);
  const auto ids = upload_group(svc, u, rng, 15, "healthy");
  const auto jid = svc.submit_job(u, ids, JobMethod::both, true);
  const Job j = svc.wait_job(u, jid);
  EXPECT_EQ(j.state, JobState::done);
  EXPECT_GT(j.finished, 0.0);
  EXPECT_EQ(count_state(j, ItemState::done), 15u);
  const json page = svc.get_results(u, jid, 1, 100);
  EXPECT_EQ(page["total"], 30u);
  for (const auto& r : page["items"]) {
    EXPECT_EQ(r["denoised"], true);
    EXPECT_EQ(r["input_before_denoise"].size(), 512u);
  }
  for (const auto& id : ids) {
    EXPECT_TRUE(svc.store().dataset(id)->denoised_blob.size() == 64);
    EXPECT_TRUE(svc.store().latest_result(id, QuantMethod::lcm));
    EXPECT_TRUE(svc.store().latest_result(id, QuantMethod::staged));
  }
}

TEST(Jobs, FailedItemsAreRecordedAndJobStateFollows) {
  TempDir dir;
  auto cfg = fast_config(dir.path, 1);
  cfg.lcm_override = [](const Spectrum& s, const BasisSet& b) {
    if (s.meta.group == GroupLabel::patient) throw DegenerateError("cannot fit");
    return linear_quant(QuantMethod::lcm, s, b);
  };
  Service svc(cfg);
  const auto u = svc.create_user("alice", "pw");
  std::mt19937_64 rng(8);
  const auto good = upload_group(svc, u, rng, 2, "healthy");
  const auto bad = upload_group(svc, u, rng, 2, "patient");
  std::vector<std::string> mixed = good;
  mixed.push_back(bad[0]);
  const Job j = svc.wait_job(u, svc.submit_job(u, mixed, JobMethod::lcm, false));
  EXPECT_EQ(j.state, JobState::done);
  EXPECT_EQ(count_state(j, ItemState::failed), 1u);
  EXPECT_NE(j.item(bad[0])->error.find("cannot fit"), std::string::npos);
  const Job f = svc.wait_job(u, svc.submit_job(u, bad, JobMethod::lcm, false));
  EXPECT_EQ(f.state, JobState::failed);
}

TEST(Jobs, RestartResumesInterruptedItemsWithoutDuplicates) {
  TempDir dir;
  std::string u, jid;
  std::vector<std::string> ids;
  {
    Service svc(fast_config(dir.path, 0));
    u = svc.create_user("alice", "pw");
    std::mt19937_64 rng(9);
    ids = upload_group(svc, u, rng, 4, "healthy");
    jid = svc.submit_job(u, ids, JobMethod::both, false);
    // a crash after the lcm result of the first item was committed
    auto& st = svc.store();
    ASSERT_TRUE(st.transition_item(jid, ids[0], ItemState::pending, ItemState::running));
    const auto s = io::read_stored_spectrum(st.get_blob(st.dataset(ids[0])->spectrum_blob));
    QuantResult r = linear_quant(QuantMethod::lcm, s, svc.catalog().resolve(s.acq, "auto"));
    r.dataset_id = ids[0];
    ASSERT_TRUE(st.add_result({"pre", jid, ids[0], QuantMethod::lcm, st.put_blob(result_to_json(r).dump()), 0}));
    EXPECT_EQ(st.job(jid)->state, JobState::running);
  }
  Service svc(fast_config(dir.path, 2));
  const Job j = svc.wait_job(u, jid);
  EXPECT_EQ(j.state, JobState::done);
  const auto results = svc.store().results_of_job(jid);
  EXPECT_EQ(results.size(), 8u);
  std::set<std::pair<std::string, int>> keys;
  for (const auto& r : results) keys.insert({r.dataset_id, static_cast<int>(r.method)});
  EXPECT_EQ(keys.size(), 8u);
  EXPECT_EQ(results.front().id, "pre");
}

TEST(Jobs, ResultsSurviveRestart) {
  TempDir dir;
  std::string u, jid;
  json first;
  {
    Service svc(fast_config(dir.path, 1));
    u = svc.create_user("alice", "pw");
    std::mt19937_64 rng(10);
    const auto ids = upload_group(svc, u, rng, 3, "healthy");
    jid = svc.submit_job(u, ids, JobMethod::lcm, false);
    svc.wait_job(u, jid);
    first = svc.get_results(u, jid, 1, 10);
  }
  Service svc(fast_config(dir.path, 1));
  EXPECT_EQ(svc.get_results(u, jid, 1, 10).dump(), first.dump());
}

// --- pagination ----------------------------------------------------------------

class Pagination : public ::testing::Test {
 protected:
  void SetUp() override {
    svc = std::make_unique<Service>(fast_config(dir.path, 2));
    u = svc->create_user("alice", "pw");
    std::mt19937_64 rng(12);
    ids = upload_group(*svc, u, rng, 5, "healthy");
    // submitted in reverse to show ordering follows upload order
    jid = svc->submit_job(u, {ids.rbegin(), ids.rend()}, JobMethod::lcm, false);
    svc->wait_job(u, jid);
  }
  TempDir dir;
  std::unique_ptr<Service> svc;
  std::string u, jid;
  std::vector<std::string> ids;
};

TEST_F(Pagination, PageThreeOfSizeOneIsTheThirdDataset) {
  const json p = svc->get_results(u, jid, 3, 1);
  EXPECT_EQ(p["total"], 5u);
  ASSERT_EQ(p["items"].size(), 1u);
  EXPECT_EQ(p["items"][0]["dataset_id"], ids[2]);
}

TEST_F(Pagination, OutOfRangePageIsEmptyWithTotal) {
  const json p = svc->get_results(u, jid, 99, 10);
  EXPECT_EQ(p["total"], 5u);
  EXPECT_TRUE(p["items"].empty());
  EXPECT_THROW(svc->get_results(u, jid, 0, 10), ArgumentError);
  EXPECT_THROW(svc->get_results(u, jid, 1, 0), ArgumentError);
  EXPECT_THROW(svc->get_results(u, jid, 1, kMaxPageSize + 1), ArgumentError);
}

TEST_F(Pagination, RefetchIsByteIdentical) {
  EXPECT_EQ(svc->get_results(u, jid, 1, 5).dump(), svc->get_results(u, jid, 1, 5).dump());
  EXPECT_EQ(svc->export_job(u, jid, io::ExportFormat::csv), svc->export_job(u, jid, io::ExportFormat::csv));
}

TEST_F(Pagination, PagesOfAnySizeConcatenateToTheFullList) {
  const json all = svc->get_results(u, jid, 1, 100)["items"];
  for (std::size_t size = 1; size <= 6; ++size) {
    json joined = json::array();
    for (std::size_t page = 1;; ++page) {
      const json p = svc->get_results(u, jid, page, size);
      if (p["items"].empty()) break;
      for (const auto& it : p["items"]) joined.push_back(it);
    }
    EXPECT_EQ(joined.dump(), all.dump()) << size;
  }
}

TEST_F(Pagination, ResultItemsCarryPlottingArrays) {
  for (const auto& r : svc->get_results(u, jid, 1, 5)["items"]) {
    for (const char* k : {"ppm", "input", "fitted", "baseline", "residual"}) EXPECT_EQ(r[k].size(), 512u) << k;
    for (std::size_t k = 0; k < 512; ++k)
      EXPECT_DOUBLE_EQ(r["residual"][k].get<double>(), r["input"][k].get<double>() - r["fitted"][k].get<double>());
    EXPECT_FALSE(r.contains("input_before_denoise"));
    EXPECT_GT(r["ppm"][0].get<double>(), r["ppm"][511].get<double>());
  }
}

// --- deletion cascade ----------------------------------------------------------

TEST(Deletion, UploadThenDeleteThenNotFound) {
  TempDir dir;
  Service svc(fast_config(dir.path, 0));
  const auto u = svc.create_user("alice", "pw");
  std::mt19937_64 rng(13);
  const auto id = upload_group(svc, u, rng, 1, "healthy")[0];
  svc.delete_dataset(u, id);
  EXPECT_THROW(svc.get_dataset(u, id), NotFoundError);
  EXPECT_THROW(svc.delete_dataset(u, id), NotFoundError);
  EXPECT_EQ(svc.store().used_bytes(u), 0u);
  EXPECT_TRUE(svc.store().blob_hashes().empty());
}

TEST(Deletion, RandomDeletesLeaveNoTraceOfTheDataset) {
  TempDir dir;
  Service svc(fast_config(dir.path, 2));
  const auto u = svc.create_user("alice", "pw");
  std::mt19937_64 rng(14);
  auto healthy = upload_group(svc, u, rng, 6, "healthy");
  auto patients = upload_group(svc, u, rng, 4, "patient", 0.7);
  std::vector<std::string> all = healthy;
  all.insert(all.end(), patients.begin(), patients.end());
  const auto jid = svc.submit_job(u, all, JobMethod::both, true);
  svc.wait_job(u, jid);
  const json rep = svc.run_statistics(u, healthy, patients, {"NAA/Cr"});
  const auto rep_id = rep["id"].get<std::string>();
  const auto solo = svc.submit_job(u, {patients[0]}, JobMethod::lcm, false);
  svc.wait_job(u, solo);

  std::shuffle(all.begin(), all.end(), rng);
  for (std::size_t k = 0; k < 4; ++k) {
    const auto id = all[k];
    const auto before = svc.store().result_count();
    svc.delete_dataset(u, id);
    EXPECT_EQ(files_mentioning(dir.path, id), 0u) << id;
    EXPECT_LT(svc.store().result_count(), before);
    EXPECT_THROW(svc.get_dataset(u, id), NotFoundError);
    for (const auto& r : svc.store().results_of_job(jid)) EXPECT_NE(r.dataset_id, id);
    EXPECT_EQ(svc.store().job(jid)->item(id), nullptr);
  }
  // the report referenced every dataset and went with the first delete
  EXPECT_THROW(svc.get_report(u, rep_id), NotFoundError);
  // the single-dataset job disappears with its dataset
  if (std::find(all.begin(), all.begin() + 4, patients[0]) != all.begin() + 4)
    EXPECT_FALSE(svc.store().job(solo));
  EXPECT_EQ(svc.get_results(u, jid, 1, 100)["total"], 2u * (10 - 4));
  // survivors still load after a restart
  const auto remaining = svc.list_datasets(u);
  EXPECT_EQ(remaining.size(), 6u);
}

TEST(Deletion, CascadePersistsAcrossRestart) {
  TempDir dir;
  std::string u, jid, gone;
  {
    Service svc(fast_config(dir.path, 1));
    u = svc.create_user("alice", "pw");
    std::mt19937_64 rng(15);
    const auto ids = upload_group(svc, u, rng, 3, "healthy");
    jid = svc.submit_job(u, ids, JobMethod::lcm, true);
    svc.wait_job(u, jid);
    gone = ids[1];
    svc.delete_dataset(u, gone);
  }
  Service svc(fast_config(dir.path, 1));
  EXPECT_THROW(svc.get_dataset(u, gone), NotFoundError);
  EXPECT_EQ(svc.get_results(u, jid, 1, 10)["total"], 2u);
  EXPECT_EQ(files_mentioning(dir.path, gone), 0u);
}

// --- authorization -------------------------------------------------------------

TEST(Authorization, NoOperationReachesAnotherUsersResources) {
  TempDir dir;
  Service svc(fast_config(dir.path, 2));
  std::mt19937_64 rng(16);
  std::vector<std::string> users;
  for (const char* n : {"a", "b", "c"}) users.push_back(svc.create_user(n, "pw"));
  struct Owned {
    std::vector<std::string> datasets, jobs, reports;
  };
  std::map<std::string, Owned> own;
  for (int i = 0; i < 12; ++i) {
    const auto& u = users[rng() % users.size()];
    own[u].datasets.push_back(upload_group(svc, u, rng, 1, "healthy")[0]);
  }
  for (const auto& u : users) {
    auto& o = own[u];
    if (o.datasets.empty()) continue;
    const auto j = svc.submit_job(u, o.datasets, JobMethod::both, false);
    svc.wait_job(u, j);
    o.jobs.push_back(j);
    if (o.datasets.size() >= 6) {
      const auto half = o.datasets.size() / 2;
      std::vector<std::string> a(o.datasets.begin(), o.datasets.begin() + static_cast<long>(half)),
          b(o.datasets.begin() + static_cast<long>(half), o.datasets.end());
      o.reports.push_back(svc.run_statistics(u, a, b, {"NAA/Cr"})["id"]);
    }
    if (o.datasets.size() >= 3) o.reports.push_back(svc.run_consistency(u, o.datasets)["id"]);
  }
  for (const auto& caller : users) {
    const auto listed = ids_of(svc.list_datasets(caller));
    EXPECT_EQ(std::set<std::string>(listed.begin(), listed.end()),
              std::set<std::string>(own[caller].datasets.begin(), own[caller].datasets.end()));
    for (const auto& owner : users) {
      if (owner == caller) continue;
      const auto& o = own[owner];
      for (const auto& d : o.datasets) {
        EXPECT_THROW(svc.get_dataset(caller, d), ForbiddenError);
        EXPECT_THROW(svc.delete_dataset(caller, d), ForbiddenError);
        EXPECT_THROW(svc.submit_job(caller, {d}, JobMethod::lcm, false), ForbiddenError);
        EXPECT_THROW(svc.run_consistency(caller, {d, d, d}), ForbiddenError);
      }
      for (const auto& j : o.jobs) {
        EXPECT_THROW(svc.get_job(caller, j), ForbiddenError);
        EXPECT_THROW(svc.get_results(caller, j, 1, 10), ForbiddenError);
        EXPECT_THROW(svc.export_job(caller, j, io::ExportFormat::csv), ForbiddenError);
        EXPECT_THROW(svc.wait_job(caller, j), ForbiddenError);
      }
      for (const auto& r : o.reports) {
        EXPECT_THROW(svc.get_report(caller, r), ForbiddenError);
        EXPECT_THROW(svc.export_report(caller, r, "csv"), ForbiddenError);
      }
    }
  }
  // owners still see everything they own
  for (const auto& u : users)
    for (const auto& r : own[u].reports) EXPECT_NO_THROW(svc.get_report(u, r));
}

// --- analyses ------------------------------------------------------------------

class Analyses : public ::testing::Test {
 protected:
  void SetUp() override {
    svc = std::make_unique<Service>(fast_config(dir.path, 2));
    u = svc->create_user("alice", "pw");
  }
  TempDir dir;
  std::unique_ptr<Service> svc;
  std::string u;
  std::mt19937_64 rng{17};
};

TEST_F(Analyses, StatisticsTwelveVersusFourteen) {
  const auto healthy = upload_group(*svc, u, rng, 12, "healthy");
  const auto mci = upload_group(*svc, u, rng, 14, "patient", 0.7);
  const json r = svc->run_statistics(u, healthy, mci, {"NAA/Cr", "Glx/Cr"});
  EXPECT_EQ(r["kind"], "statistics");
  ASSERT_EQ(r["indicators"].size(), 2u);
  int boxes = 0;
  for (const auto& item : r["indicators"]) {
    EXPECT_TRUE(item["test"].contains("p_value"));
    boxes += item.contains("boxplot_a") + item.contains("boxplot_b");
    EXPECT_EQ(item["values_a"].size(), 12u);
    EXPECT_EQ(item["values_b"].size(), 14u);
  }
  EXPECT_EQ(boxes, 4);
  const auto& naa = r["indicators"][0]["test"];
  EXPECT_EQ(naa["indicator"], "NAA/Cr");
  EXPECT_LT(naa["p_value"].get<double>(), 0.05);
  EXPECT_EQ(naa["significant"], true);
  EXPECT_NE(std::find(r["significant"].begin(), r["significant"].end(), "NAA/Cr"), r["significant"].end());
  // the analysis submitted its own lcm job
  for (const auto& id : healthy) EXPECT_TRUE(svc->store().latest_result(id, QuantMethod::lcm));
  const auto csv = svc->export_report(u, r["id"], "csv");
  EXPECT_EQ(csv.rfind("indicator,mean_a,sd_a,n_a", 0), 0u);
  EXPECT_NE(csv.find("NAA/Cr,a,"), std::string::npos);
  EXPECT_NE(svc->export_report(u, r["id"], "text").find("NAA/Cr"), std::string::npos);
  EXPECT_EQ(json::parse(svc->export_report(u, r["id"], "json"))["id"], r["id"]);
  EXPECT_THROW(svc->export_report(u, r["id"], "pdf"), ArgumentError);
}

TEST_F(Analyses, StatisticsSchemaWithThreePerGroup) {
  const auto a = upload_group(*svc, u, rng, 3, "healthy");
  const auto b = upload_group(*svc, u, rng, 3, "patient");
  const json r = svc->run_statistics(u, a, b, {"tCho/tCr"});
  const auto used = r["indicators"][0]["test"]["test_used"].get<std::string>();
  EXPECT_TRUE(used == "student_t" || used == "welch_t" || used == "mann_whitney") << used;
  EXPECT_EQ(r["indicators"][0]["test"]["group_a"]["n"], 3);
}

TEST_F(Analyses, StatisticsInputErrors) {
  const auto a = upload_group(*svc, u, rng, 3, "healthy");
  const auto b = upload_group(*svc, u, rng, 3, "patient");
  EXPECT_THROW(svc->run_statistics(u, a, {a[0], b[0], b[1]}, {"NAA/Cr"}), ArgumentError);
  EXPECT_THROW(svc->run_statistics(u, a, {}, {"NAA/Cr"}), ArgumentError);
  EXPECT_THROW(svc->run_statistics(u, a, b, {}), ArgumentError);
  EXPECT_THROW(svc->run_statistics(u, a, b, {"NAA/"}), ArgumentError);
  EXPECT_THROW(svc->run_statistics(u, a, b, {"Foo/Cr"}), SelectionError);
}

TEST_F(Analyses, UnquantifiableDatasetsBecomeWarnings) {
  TempDir other;
  auto cfg = fast_config(other.path, 1);
  cfg.lcm_override = [](const Spectrum& s, const BasisSet& b) {
    if (s.meta.age && *s.meta.age > 90) throw DegenerateError("fit diverged");
    return linear_quant(QuantMethod::lcm, s, b);
  };
  Service s2(cfg);
  const auto v = s2.create_user("bob", "pw");
  auto a = upload_group(s2, v, rng, 4, "healthy");
  Upload odd = raw_upload(rng, "healthy");
  odd.fields["age"] = "95";
  const auto bad = s2.upload(v, odd)["id"].get<std::string>();
  a.push_back(bad);
  const auto b = upload_group(s2, v, rng, 4, "patient", 0.7);
  const json r = s2.run_statistics(v, a, b, {"NAA/Cr"});
  bool named = false;
  for (const auto& w : r["warnings"]) named |= w.get<std::string>().find(bad) != std::string::npos;
  EXPECT_TRUE(named);
  EXPECT_EQ(r["indicators"][0]["test"]["group_a"]["n"], 4);
}

TEST_F(Analyses, ConsistencyFifteenHealthy) {
  const auto ids = upload_group(*svc, u, rng, 15, "healthy");
  const json r = svc->run_consistency(u, ids);
  EXPECT_EQ(r["kind"], "consistency");
  ASSERT_EQ(r["indicators"].size(), 5u);
  for (const auto& ic : r["indicators"]) {
    const auto& ba = ic["bland_altman"];
    EXPECT_EQ(ba["n"], 15);
    EXPECT_EQ(ba["points"].size(), 15u);
    EXPECT_NEAR(ba["loa_high"].get<double>() - ba["mean_diff"].get<double>(),
                1.96 * ba["sd_diff"].get<double>(), 1e-12);
  }
  for (const auto& id : ids) EXPECT_TRUE(svc->store().latest_result(id, QuantMethod::staged));
  const auto csv = svc->export_report(u, r["id"], "csv");
  EXPECT_EQ(csv.rfind("indicator,n,mean_diff", 0), 0u);
}

TEST_F(Analyses, ConsistencyGateAndSize) {
  auto ids = upload_group(*svc, u, rng, 4, "healthy");
  const auto pat = upload_group(*svc, u, rng, 1, "patient")[0];
  auto with_patient = ids;
  with_patient.push_back(pat);
  EXPECT_THROW(svc->run_consistency(u, with_patient), SelectionError);
  EXPECT_NO_THROW(svc->run_consistency(u, with_patient, true));
  EXPECT_THROW(svc->run_consistency(u, {ids[0], ids[1]}), ArgumentError);
  EXPECT_THROW(svc->run_consistency(u, {}), ArgumentError);
}

TEST(Analyses2, ReferenceRangesFromDataDir) {
  TempDir dir;
  std::ofstream(dir.path / "reference_ranges.json")
      << R"({"tNAA/tCr": {"low": 0.5, "mean": 1.5, "high": 3.0}})";
  Service svc(fast_config(dir.path, 2));
  const auto u = svc.create_user("alice", "pw");
  std::mt19937_64 rng(18);
  const auto ids = upload_group(svc, u, rng, 5, "healthy");
  const json r = svc.run_consistency(u, ids);
  const auto& first = r["indicators"][0];
  EXPECT_EQ(first["indicator"], "tNAA/tCr");
  ASSERT_TRUE(first.contains("range_a"));
  EXPECT_EQ(first["range_a"]["low"], 0.5);
  EXPECT_FALSE(r["indicators"][1].contains("range_a"));
}

// --- HTTP API ------------------------------------------------------------------

class Http : public ::testing::Test {
 protected:
  void SetUp() override {
    auto cfg = fast_config(dir.path, 2);
    cfg.seed_demo = true;
    svc = std::make_unique<Service>(cfg);
    server = std::make_unique<Server>(*svc, ServerConfig{"127.0.0.1", 0});
    port = server->start();
    base = fmt::format("http://127.0.0.1:{}", port);
  }
  void TearDown() override { server->stop(); }

  ApiClient logged_in(const std::string& user = "demo", const std::string& pw = "demo") {
    ApiClient c(base);
    c.login(user, pw);
    return c;
  }

  TempDir dir;
  std::unique_ptr<Service> svc;
  std::unique_ptr<Server> server;
  int port = 0;
  std::string base;
  std::mt19937_64 rng{19};
};

TEST_F(Http, ErrorBodiesHaveCodeMessageDetails) {
  httplib::Client raw(base);
  auto r = raw.Get("/api/v1/datasets");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 401);
  json b = json::parse(r->body);
  EXPECT_EQ(b["code"], "unauthorized");
  EXPECT_TRUE(b.contains("message"));
  EXPECT_TRUE(b["details"].is_object());

  r = raw.Get("/api/v1/datasets", {{"Authorization", "Bearer nonsense"}});
  EXPECT_EQ(r->status, 401);
  r = raw.Post("/api/v1/auth/token", R"({"username":"demo","password":"nope"})", "application/json");
  EXPECT_EQ(r->status, 401);
  r = raw.Get("/api/v1/unknown");
  EXPECT_EQ(r->status, 404);
  EXPECT_EQ(json::parse(r->body)["code"], "not_found");

  const auto token = logged_in().token();
  const httplib::Headers h{{"Authorization", "Bearer " + token}};
  r = raw.Post("/api/v1/jobs", h, "{oops", "application/json");
  EXPECT_EQ(r->status, 400);
  EXPECT_EQ(json::parse(r->body)["code"], "parse_error");
  r = raw.Post("/api/v1/jobs", h, R"({"dataset_ids": []})", "application/json");
  EXPECT_EQ(r->status, 400);
  r = raw.Post("/api/v1/jobs", h, R"({"dataset_ids": "x"})", "application/json");
  EXPECT_EQ(r->status, 400);
  r = raw.Get("/api/v1/jobs/abc", h);
  EXPECT_EQ(r->status, 404);
  r = raw.Get("/api/v1/jobs/abc/results?page=x", h);
  EXPECT_EQ(r->status, 400);
  EXPECT_EQ(json::parse(r->body)["code"], "invalid_argument");
  r = raw.Post("/api/v1/datasets", h, "not multipart", "text/plain");
  EXPECT_EQ(r->status, 400);
  httplib::MultipartFormDataItems bad_raw{{"file", " $NMID\n ID='a'\n 1 2 3\n", "x.RAW", "text/plain"}};
  r = raw.Post("/api/v1/datasets", h, bad_raw);
  EXPECT_EQ(r->status, 400);
  EXPECT_EQ(json::parse(r->body)["code"], "parse_error");
}

TEST_F(Http, UploadListQuantifyPageDelete) {
  auto c = logged_in();
  std::vector<std::string> ids;
  for (int i = 0; i < 5; ++i) {
    const json d = c.upload_bytes("subj.RAW", subject_raw(rng, "healthy"));
    EXPECT_EQ(d["meta"]["group_label"], "healthy");
    ids.push_back(d["id"]);
  }
  const json listed = c.list_datasets();
  EXPECT_EQ(ids_of(listed["datasets"]), ids);
  EXPECT_GT(listed["quota"]["used_bytes"].get<std::uint64_t>(), 0u);
  EXPECT_EQ(listed["quota"]["limit_bytes"], kDefaultQuotaBytes);

  const json basis = c.basis();
  EXPECT_GE(basis.size(), 4u);
  EXPECT_EQ(basis[0]["metabolites"].size(), 17u);

  const json job = c.submit_job(ids, "lcm", true);
  EXPECT_EQ(job["items"].size(), 5u);
  const json done = c.wait_job(job["id"], std::chrono::milliseconds(20));
  EXPECT_EQ(done["state"], "done");
  const json p3 = c.results(job["id"], 3, 1);
  EXPECT_EQ(p3["total"], 5u);
  EXPECT_EQ(p3["items"][0]["dataset_id"], ids[2]);
  EXPECT_TRUE(c.results(job["id"], 99, 1)["items"].empty());
  EXPECT_EQ(c.results(job["id"], 1, 5).dump(), c.results(job["id"], 1, 5).dump());
  EXPECT_EQ(c.export_job(job["id"]).rfind("dataset_id", 0), 0u);
  EXPECT_THROW(c.results(job["id"], 0, 1), ArgumentError);

  c.delete_dataset(ids[0]);
  EXPECT_THROW(c.delete_dataset(ids[0]), NotFoundError);
  EXPECT_THROW(c.get_dataset(ids[0]), NotFoundError);
  EXPECT_EQ(c.results(job["id"], 1, 10)["total"], 4u);
}

TEST_F(Http, ForeignResourcesAreForbidden) {
  auto demo = logged_in();
  ApiClient other(base);
  other.create_user("eve", "pw");
  other.login("eve", "pw");
  const auto id = demo.upload_bytes("a.RAW", subject_raw(rng, "healthy"))["id"].get<std::string>();
  const auto jid = demo.submit_job({id}, "lcm", false)["id"].get<std::string>();
  demo.wait_job(jid, std::chrono::milliseconds(20));
  EXPECT_THROW(other.get_dataset(id), ForbiddenError);
  EXPECT_THROW(other.delete_dataset(id), ForbiddenError);
  EXPECT_THROW(other.job(jid), ForbiddenError);
  EXPECT_THROW(other.results(jid), ForbiddenError);
  EXPECT_THROW(other.submit_job({id}, "lcm", false), ForbiddenError);
  EXPECT_TRUE(other.list_datasets()["datasets"].empty());
  EXPECT_THROW(other.create_user("eve", "x"), ConflictError);
}

TEST_F(Http, QuotaAndSelectionStatusCodes) {
  auto c = logged_in();
  const auto me = svc->authenticate(c.token());
  svc->set_quota(me, 1000);
  EXPECT_THROW(c.upload_bytes("a.RAW", subject_raw(rng, "healthy")), QuotaError);
  svc->set_quota(me, kDefaultQuotaBytes);
  const auto id = c.upload_bytes("a.RAW", subject_raw(rng, "healthy"))["id"].get<std::string>();
  EXPECT_THROW(c.submit_job({id}, "lcm", false, "no-such-basis"), SelectionError);
  EXPECT_THROW(c.submit_job({id}, "turbo", false), ArgumentError);
}

TEST_F(Http, AnalysesAndReportExport) {
  auto c = logged_in();
  std::vector<std::string> a, b;
  for (int i = 0; i < 5; ++i) a.push_back(c.upload_bytes("h.RAW", subject_raw(rng, "healthy"))["id"]);
  for (int i = 0; i < 3; ++i) b.push_back(c.upload_bytes("p.RAW", subject_raw(rng, "patient", 0.7))["id"]);
  const json st = c.statistics(a, b, {"NAA/Cr", "Glx/Cr"});
  EXPECT_EQ(st["indicators"].size(), 2u);
  EXPECT_EQ(c.report(st["id"]).dump(), st.dump());
  const auto csv = c.export_report(st["id"], "csv");
  EXPECT_EQ(csv.rfind("indicator,mean_a", 0), 0u);
  EXPECT_THROW(c.statistics(a, {a[0]}, {"NAA/Cr"}), ArgumentError);

  const json cons = c.consistency(a);
  EXPECT_EQ(cons["indicators"].size(), 5u);
  EXPECT_EQ(c.export_report(cons["id"], "csv").rfind("indicator,n,mean_diff", 0), 0u);
  EXPECT_THROW(c.consistency(b), SelectionError);
  EXPECT_THROW(c.consistency({a[0], a[1]}), ArgumentError);

  // default glioma indicators when none are named
  const json def = c.statistics(a, b, {});
  EXPECT_EQ(def["indicators"].size(), stats::default_indicators("glioma").size());
}

TEST_F(Http, FormLoginAndMultipartFields) {
  httplib::Client raw(base);
  httplib::Params form{{"username", "demo"}, {"password", "demo"}};
  auto r = raw.Post("/api/v1/auth/token", form);
  ASSERT_EQ(r->status, 200);
  ApiClient c(base, json::parse(r->body)["access_token"].get<std::string>());
  const json d = c.upload_bytes("s.RAW", subject_raw(rng, "healthy"), {{"group", "patient"}, {"age", "63"}});
  EXPECT_EQ(d["meta"]["group_label"], "patient");
  EXPECT_EQ(d["meta"]["age"], 63.0);
  EXPECT_EQ(c.quota()["user"], "demo");
}

// --- real pipelines ------------------------------------------------------------

TEST(RealPipelines, DenoisedBothMethodsFillEveryPlottingArray) {
  TempDir dir;
  ServiceConfig cfg;
  cfg.data_dir = dir.path;
  cfg.workers = 1;
  cfg.seed_demo = false;
  cfg.hash_cost = crypto::HashCost::minimal;
  Service svc(cfg);
  const auto u = svc.create_user("alice", "pw");
  std::mt19937_64 rng(20);
  const auto ids = upload_group(svc, u, rng, 2, "healthy");
  const auto jid = svc.submit_job(u, ids, JobMethod::both, true);
  const Job j = svc.wait_job(u, jid);
  ASSERT_EQ(j.state, JobState::done) << job_json(j).dump();
  const json page = svc.get_results(u, jid, 1, 10);
  ASSERT_EQ(page["total"], 4u);
  for (const auto& r : page["items"]) {
    for (const char* k : {"ppm", "input", "fitted", "baseline", "residual", "input_before_denoise"})
      EXPECT_EQ(r[k].size(), 512u) << k;
    EXPECT_EQ(r["per_metabolite_fit"].size(), 17u);
    EXPECT_EQ(r["denoised"], true);
  }
  EXPECT_EQ(page["items"][0]["method"], "lcm");
  EXPECT_EQ(page["items"][1]["method"], "staged");
}
