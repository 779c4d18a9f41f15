#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "mrsq/io/anonymize.hpp"
#include "mrsq/io/export.hpp"
#include "mrsq/io/native.hpp"
#include "mrsq/io/raw.hpp"
#include "mrsq/io/select.hpp"
#include "mrsq/synthetic.hpp"
#include "oracles.hpp"

using namespace mrsq;
using namespace mrsq::io;

namespace {

const char* kHeader = " $NMID\n ID='test', FMTDAT='(2E15.6)'\n VOLUME=1.0, TRAMP=1.0\n $END\n";

bool same_6sf(double a, double b) { return std::abs(a - b) <= 5e-6 * std::abs(b) + 1e-300; }

}  // namespace

TEST(Raw, ParsesPairs) {
  const auto s = parse_raw(std::string(kHeader) + "1 0\n0 1\n");
  ASSERT_EQ(s.fid.size(), 2u);
  EXPECT_EQ(s.fid[0], Complex(1, 0));
  EXPECT_EQ(s.fid[1], Complex(0, 1));
  EXPECT_EQ(s.acq.num_points, 2u);
}

TEST(Raw, HeaderFieldsAndFortranExponent) {
  const auto rf = parse_raw_file(" $NMID ID='a, b', VOLUME=2.0 $END\n 1.0D+00 -2.5d-01\n");
  EXPECT_EQ(rf.header.at("ID"), "a, b");
  EXPECT_EQ(rf.header.at("VOLUME"), "2.0");
  EXPECT_EQ(rf.points[0], Complex(1.0, -0.25));
}

TEST(Raw, SidecarAndHeaderAcquisition) {
  AcquisitionParams side;
  side.transmitter_freq = 123.2;
  side.spectral_width = 4000;
  auto s = parse_raw(std::string(kHeader) + "1 0 0 1\n", side);
  EXPECT_DOUBLE_EQ(s.acq.transmitter_freq, 123.2);
  EXPECT_DOUBLE_EQ(s.acq.spectral_width, 4000);
  s = parse_raw(" $NMID\n HZPPPM=127.7, DELTAT=5.0E-04\n $END\n1 0 0 1\n", side);
  EXPECT_DOUBLE_EQ(s.acq.transmitter_freq, 127.7);
  EXPECT_NEAR(s.acq.spectral_width, 2000.0, 1e-9);
}

TEST(Raw, FullLengthFile) {
  std::string text = kHeader;
  for (int i = 0; i < 2048; ++i) text += " 1.00000E+00 -1.00000E+00\n";
  EXPECT_EQ(parse_raw(text).acq.num_points, 2048u);
}

TEST(Raw, MissingEndReportsLine) {
  try {
    parse_raw("\n $NMID\n ID='x'\n 1 0\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(Raw, OddTokenCount) {
  EXPECT_THROW(parse_raw(std::string(kHeader) + "1 0 2\n"), ParseError);
}

TEST(Raw, NonNumericToken) {
  try {
    parse_raw(std::string(kHeader) + "1 0\n2 abc\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 6u);
  }
}

TEST(Raw, WriteFormat) {
  Spectrum s;
  s.fid = {{1.0, -2.0}, {3.25e-7, 0.0}};
  s.acq.num_points = 2;
  const auto text = write_raw(s, "abc");
  std::istringstream is(text);
  std::string line;
  std::vector<std::string> data;
  bool after = false;
  while (std::getline(is, line)) {
    if (after) data.push_back(line);
    if (line.find("$END") != std::string::npos) after = true;
  }
  ASSERT_EQ(data.size(), 2u);
  for (const auto& d : data) {
    EXPECT_EQ(d.size(), 30u);
    std::istringstream ls(d);
    double a, b;
    EXPECT_TRUE(ls >> a >> b);
  }
  EXPECT_NE(text.find("FMTDAT='(2E15.6)'"), std::string::npos);
  EXPECT_NE(text.find(" 1.00000E+00"), std::string::npos);
}

TEST(Raw, WriteRejectsEmptyAndNonFinite) {
  Spectrum s;
  EXPECT_THROW(write_raw(s, "x"), SerializationError);
  s.fid = {{std::nan(""), 0.0}};
  EXPECT_THROW(write_raw(s, "x"), SerializationError);
}

TEST(Raw, RoundTripSixSignificantFigures) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> expo(-8, 8);
    Spectrum s;
    s.fid = oracle::random_complex(64, seed);
    for (auto& z : s.fid) z *= std::pow(10.0, expo(rng));
    s.acq.num_points = 64;
    const auto back = parse_raw(write_raw(s, "rt"));
    ASSERT_EQ(back.fid.size(), 64u);
    for (std::size_t i = 0; i < 64; ++i) {
      EXPECT_TRUE(same_6sf(back.fid[i].real(), s.fid[i].real()));
      EXPECT_TRUE(same_6sf(back.fid[i].imag(), s.fid[i].imag()));
    }
    // A second pass reproduces the text exactly.
    EXPECT_EQ(write_raw(back, "rt"), write_raw(parse_raw(write_raw(back, "rt")), "rt"));
  }
}

namespace {

std::string basis_doc(std::vector<std::pair<std::string, std::size_t>> entries,
                      bool with_tags = true) {
  json j;
  if (with_tags) j["acq_tags"] = {{"field_strength", 3.0}, {"sequence", "PRESS"}, {"echo_time", 35}};
  j["entries"] = json::array();
  for (auto& [n, len] : entries)
    j["entries"].push_back({{"name", n}, {"data", std::vector<double>(2 * len, 0.5)}});
  return j.dump();
}

}  // namespace

TEST(Basis, ParsesEntries) {
  const auto b = parse_basis(basis_doc({{"NAA", 16}, {"Cr", 16}}));
  EXPECT_EQ(b.names(), (std::vector<std::string>{"NAA", "Cr"}));
  EXPECT_EQ(b.length(), 16u);
  EXPECT_EQ(b.tags.sequence, "PRESS");
}

TEST(Basis, Rejections) {
  EXPECT_THROW(parse_basis(basis_doc({{"NAA", 16}, {"NAA", 16}})), ParseError);
  EXPECT_THROW(parse_basis(basis_doc({{"NAA", 16}, {"Cr", 15}})), ParseError);
  EXPECT_THROW(parse_basis(basis_doc({{"NAA", 16}}, false)), ParseError);
  EXPECT_THROW(parse_basis("{not json"), ParseError);
}

TEST(Basis, WriteParseRoundTrip) {
  AcquisitionParams a;
  a.num_points = 64;
  const auto b = synthetic::make_basis({"NAA", "Cr", "Ins"}, a, "sim");
  const auto back = parse_basis(write_basis(b));
  EXPECT_EQ(back.names(), b.names());
  EXPECT_EQ(back.entries[2].m, b.entries[2].m);
  EXPECT_EQ(back.name, "sim");
}

namespace {

BasisSet tagged(std::string name, double b0, std::string seq, double te) {
  BasisSet b;
  b.name = std::move(name);
  b.tags = {b0, std::move(seq), te};
  b.entries = {{"NAA", ComplexVec(4)}};
  return b;
}

AcquisitionParams query(double b0, std::string seq, double te) {
  AcquisitionParams a;
  a.field_strength = b0;
  a.sequence = std::move(seq);
  a.echo_time = te;
  return a;
}

}  // namespace

TEST(SelectBasis, UniqueMatch) {
  std::vector<BasisSet> cat{tagged("te35", 3, "PRESS", 35), tagged("te30", 3, "PRESS", 30)};
  EXPECT_EQ(select_basis(cat, query(3, "PRESS", 35)).name, "te35");
  EXPECT_EQ(select_basis(cat, query(3.05, "PRESS", 30)).name, "te30");
}

TEST(SelectBasis, AmbiguousAndMissing) {
  std::vector<BasisSet> cat{tagged("te35", 3, "PRESS", 35), tagged("te30", 3, "PRESS", 30)};
  EXPECT_THROW(select_basis(cat, query(3, "PRESS", 33)), SelectionError);
  EXPECT_THROW(select_basis(cat, query(1.5, "PRESS", 35)), SelectionError);
  EXPECT_THROW(select_basis(cat, query(3, "STEAM", 35)), SelectionError);
  EXPECT_EQ(select_basis(cat, query(3, "PRESS", 33), std::string("te30")).name, "te30");
  EXPECT_THROW(select_basis(std::vector<BasisSet>{}, query(3, "PRESS", 35)), SelectionError);
}

TEST(SelectBasis, PermutationInvariant) {
  std::vector<BasisSet> cat{tagged("a", 3, "PRESS", 35), tagged("b", 3, "PRESS", 20),
                            tagged("c", 7, "PRESS", 35), tagged("d", 3, "STEAM", 35)};
  std::mt19937 rng(1);
  for (int i = 0; i < 20; ++i) {
    std::shuffle(cat.begin(), cat.end(), rng);
    EXPECT_EQ(select_basis(cat, query(3, "PRESS", 35)).name, "a");
  }
}

TEST(Anonymize, Whitelist) {
  const auto m = anonymize({{"name", "X"}, {"age", "40"}, {"sex", "F"}});
  EXPECT_EQ(m.age, 40.0);
  EXPECT_EQ(m.sex, Sex::female);
  EXPECT_EQ(m.opaque_id.size(), 32u);
  const auto e = anonymize({});
  EXPECT_FALSE(e.age);
  EXPECT_FALSE(e.sex);
  EXPECT_EQ(e.group, GroupLabel::unlabeled);
}

TEST(Anonymize, FreshIds) {
  const std::map<std::string, std::string> in{{"age", "40"}};
  EXPECT_NE(anonymize(in).opaque_id, anonymize(in).opaque_id);
}

TEST(Anonymize, NoKeyOutsideWhitelistProperty) {
  std::mt19937_64 rng(99);
  const std::vector<std::string> keys{"name", "Name", "birth_date", "patient_id", "age",
                                      "sex",  "group", "address",   "notes",      "GENDER"};
  std::uniform_int_distribution<std::size_t> pick(0, keys.size() - 1);
  for (int trial = 0; trial < 200; ++trial) {
    std::map<std::string, std::string> raw;
    for (int k = 0; k < 6; ++k) raw[keys[pick(rng)]] = "Jane Doe " + std::to_string(rng() % 90);
    const json j = anonymize(raw);
    for (const auto& [k, v] : j.items()) {
      EXPECT_TRUE(k == "opaque_id" || k == "age" || k == "sex" || k == "group_label") << k;
      EXPECT_EQ(v.dump().find("Jane"), std::string::npos);
    }
  }
}

namespace {

QuantResult fake_result(std::string id, std::size_t n_met, double scale) {
  QuantResult r;
  r.dataset_id = std::move(id);
  const auto names = synthetic::default_metabolites();
  for (std::size_t i = 0; i < n_met; ++i) {
    r.metabolites.push_back(names[i]);
    r.conc.push_back(scale * (1.0 + static_cast<double>(i)) / 3.0);
    r.sd_percent.push_back(4.0 + static_cast<double>(i));
  }
  r.ratio_to_tCr = ratios_to_tcr(r.metabolites, r.conc);
  return r;
}

std::vector<std::string> split(const std::string& s, char d) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == d) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

TEST(Export, RowsPerMetabolite) {
  std::vector<QuantResult> rs{fake_result("d1", 17, 1.0)};
  const auto csv = export_results(rs, ExportFormat::csv);
  auto lines = split(csv, '\n');
  ASSERT_EQ(lines.back(), "");
  lines.pop_back();
  EXPECT_EQ(lines.size(), 18u);
  EXPECT_EQ(lines[0], "dataset_id,metabolite,concentration,ratio_to_tCr,sd_percent,method");
  EXPECT_EQ(csv.find('\r'), std::string::npos);
}

TEST(Export, DeterministicAndOrdered) {
  std::vector<QuantResult> rs{fake_result("b", 3, 1.0), fake_result("a", 3, 2.0)};
  EXPECT_EQ(export_results(rs, ExportFormat::csv), export_results(rs, ExportFormat::csv));
  EXPECT_EQ(export_results(rs, ExportFormat::json), export_results(rs, ExportFormat::json));
  const auto lines = split(export_results(rs, ExportFormat::csv), '\n');
  EXPECT_EQ(split(lines[1], ',')[0], "b");
  EXPECT_EQ(split(lines[4], ',')[0], "a");
  EXPECT_EQ(split(lines[2], ',')[1], "Asp");
}

TEST(Export, CsvRoundTripSixSignificantFigures) {
  std::vector<QuantResult> rs{fake_result("x", 17, 3.14159265), fake_result("y", 17, 1e-3)};
  const auto lines = split(export_results(rs, ExportFormat::csv), '\n');
  std::size_t row = 1;
  for (const auto& r : rs)
    for (std::size_t i = 0; i < r.metabolites.size(); ++i, ++row) {
      const auto f = split(lines[row], ',');
      ASSERT_EQ(f.size(), 6u);
      EXPECT_EQ(f[0], r.dataset_id);
      EXPECT_EQ(f[1], r.metabolites[i]);
      EXPECT_TRUE(same_6sf(std::stod(f[2]), r.conc[i]));
      EXPECT_TRUE(same_6sf(std::stod(f[4]), r.sd_percent[i]));
      if (std::isfinite(r.ratio_to_tCr[i])) EXPECT_TRUE(same_6sf(std::stod(f[3]), r.ratio_to_tCr[i]));
      EXPECT_EQ(f[5], "lcm");
    }
}

TEST(Export, EmptyThrows) {
  EXPECT_THROW(export_results(std::vector<QuantResult>{}, ExportFormat::csv), ArgumentError);
}

TEST(Native, SpectrumParseKeepsRawMetaForAnonymization) {
  Spectrum s;
  s.acq.num_points = 4;
  s.fid = oracle::random_complex(4, 1);
  json j = json::parse(write_native_spectrum(s));
  j["meta"] = {{"name", "Jane"}, {"age", 33}};
  const auto ns = parse_native_spectrum(j.dump());
  EXPECT_EQ(ns.spectrum.fid, s.fid);
  EXPECT_EQ(ns.meta.at("name"), "Jane");
  EXPECT_EQ(anonymize(ns.meta).age, 33.0);
}
