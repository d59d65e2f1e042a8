#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "lrcssm/data.hpp"
#include "lrcssm/errors.hpp"

using namespace lrcssm;
namespace fs = std::filesystem;

namespace {

const char* kTwoLine =
    "# tiny fixture\n"
    "@problemName Tiny\n"
    "@timeStamps false\n"
    "@univariate true\n"
    "@classLabel true a b\n"
    "@data\n"
    "1.0,2.0,3.0:a\n"
    "-1,0.5,4e-1:b\n";

fs::path temp_path(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "lrcssm_test_data";
  fs::create_directories(dir);
  return dir / name;
}

Dataset toy(std::size_t n, std::size_t T, std::size_t p, std::uint64_t seed) {
  Dataset ds;
  ds.class_names = {"x", "y", "z"};
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t k = 0; k < n; ++k) {
    Matrix m(T, p);
    for (auto& v : m.flat()) v = normal(rng);
    ds.sequences.push_back(m);
    ds.labels.push_back(k % 3);
  }
  return ds;
}

}  // namespace

TEST_CASE("two-line univariate .ts file") {
  const auto ds = parse_ts(kTwoLine);
  CHECK(ds.name == "Tiny");
  CHECK(ds.size() == 2);
  CHECK(ds.class_count() == 2);
  CHECK(ds.length() == 3);
  CHECK(ds.channels() == 1);
  CHECK(ds.labels == std::vector<std::size_t>{0, 1});
  CHECK(ds.sequences[1](2, 0) == 0.4);
}

TEST_CASE("multivariate lines, CRLF and unknown directives") {
  const auto ds = parse_ts("@problemName M\r\n@fancy yes\r\n@classLabel true 1 2 3\r\n@data\r\n1,2:3,4:3\r\n5,6:7,8:1\r\n");
  CHECK(ds.size() == 2);
  CHECK(ds.channels() == 2);
  CHECK(ds.length() == 2);
  CHECK(ds.sequences[0](1, 1) == 4.0);
  CHECK(ds.labels == std::vector<std::size_t>{2, 0});
}

TEST_CASE("malformed input reports the line") {
  try {
    parse_ts("@classLabel true a b\n@data\n1,2:a\n1,x:b\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 4);
  }
  CHECK_THROWS_AS(parse_ts("@classLabel true a\n@data\n1,2:3:a\n"), ParseError);  // ragged dimensions
  CHECK_THROWS_AS(parse_ts("@classLabel true a\n@data\n1,2:c\n"), ParseError);    // undeclared label
  CHECK_THROWS_AS(parse_ts("@classLabel true a\n1,2:a\n"), ParseError);           // no @data
  CHECK_THROWS_AS(parse_ts("@classLabel true a\n@data\n1,2:a\n1,2,3:a\n"), DataError);
}

TEST_CASE(".ts round trip") {
  auto ds = toy(7, 11, 3, 1);
  ds.name = "RoundTrip";
  const auto path = temp_path("round.ts");
  write_ts(ds, path);
  const auto back = load_ts(path);
  CHECK(back.labels == ds.labels);
  CHECK(back.class_names == ds.class_names);
  for (std::size_t k = 0; k < ds.size(); ++k)
    CHECK(max_abs_diff(back.sequences[k].flat(), ds.sequences[k].flat()) <= 1e-12);
}

TEST_CASE("CSV fallback groups rows by id and orders by time") {
  const auto ds = parse_csv(
      "id,time,ch_0,ch_1,label\n"
      "s1,1,3,4,up\n"
      "s1,0,1,2,up\n"
      "# comment\r\n"
      "s2,0,5,6,down\n"
      "s2,1,7,8,down\n");
  CHECK(ds.size() == 2);
  CHECK(ds.channels() == 2);
  CHECK(ds.sequences[0](0, 0) == 1.0);
  CHECK(ds.sequences[0](1, 1) == 4.0);
  CHECK(ds.class_names == std::vector<std::string>{"down", "up"});
  CHECK(ds.labels == std::vector<std::size_t>{1, 0});
  CHECK_THROWS_AS(parse_csv("a,0,1,x\na,1,2,y\n"), ParseError);
  CHECK_THROWS_AS(parse_csv("a,0,1,x\nb,0,2,3,x\n"), ParseError);
}

TEST_CASE("load_dataset dispatches on the extension") {
  const auto path = temp_path("tiny.ts");
  std::ofstream(path) << kTwoLine;
  CHECK(load_dataset(path).size() == 2);
  CHECK_THROWS_AS(load_dataset(temp_path("x.parquet")), DataError);
  CHECK_THROWS_AS(load_ts(temp_path("missing.ts")), DataError);
}

TEST_CASE("split is a seeded partition") {
  const auto ds = toy(40, 4, 2, 2);
  const auto all = split(ds, 1, {1.0, 0.0, 0.0});
  CHECK(all.train.size() == 40);
  CHECK(all.val.size() == 0);

  const auto a = split(ds, 5);
  const auto b = split(ds, 5);
  const auto c = split(ds, 6);
  CHECK(a.train.size() == 28);
  CHECK(a.val.size() == 6);
  CHECK(a.test.size() == 6);
  for (std::size_t k = 0; k < a.train.size(); ++k) CHECK(a.train.sequences[k] == b.train.sequences[k]);
  bool differs = false;
  for (std::size_t k = 0; k < a.train.size(); ++k) differs = differs || !(a.train.sequences[k] == c.train.sequences[k]);
  CHECK(differs);

  // every sequence lands in exactly one part
  std::size_t found = 0;
  for (const auto& part : {a.train, a.val, a.test})
    for (const auto& s : part.sequences)
      for (const auto& o : ds.sequences) found += s == o;
  CHECK(found == 40);

  CHECK_THROWS_AS(split(toy(2, 4, 1, 1), 1), ConfigError);
  CHECK_THROWS_AS(split(ds, 1, {0.5, 0.2, 0.2}), ConfigError);
}

TEST_CASE("normalization uses training statistics only") {
  Dataset train;
  train.class_names = {"a"};
  Matrix s(4, 2);
  for (std::size_t t = 0; t < 4; ++t) {
    s(t, 0) = 3.0;
    s(t, 1) = static_cast<double>(t);
  }
  train.sequences = {s};
  train.labels = {0};
  const auto st = fit_channel_stats(train);
  const auto z = normalize(st, s);
  for (std::size_t t = 0; t < 4; ++t) CHECK(z(t, 0) == 0.0);

  // already standardized data is left alone
  auto ds = toy(30, 50, 2, 3);
  DatasetSplit sp{ds, ds, ds};
  normalize_split(sp);
  const auto again = fit_channel_stats(sp.train);
  for (std::size_t c = 0; c < 2; ++c) {
    CHECK(std::abs(again.mean[c]) <= 1e-12);
    CHECK(again.stddev[c] == doctest::Approx(1.0).epsilon(1e-9));
    const auto twice = normalize(again, sp.train.sequences[0]);
    CHECK(max_abs_diff(twice.flat(), sp.train.sequences[0].flat()) <= 1e-6);
  }

  // wild validation data cannot move the statistics
  DatasetSplit leak{toy(10, 5, 1, 4), toy(10, 5, 1, 5), toy(10, 5, 1, 6)};
  for (auto& m : leak.val.sequences) m.fill(1e6);
  const auto expect = fit_channel_stats(leak.train);
  normalize_split(leak);
  CHECK(leak.val.stats.mean == expect.mean);
  CHECK(leak.test.stats.stddev == expect.stddev);
}

TEST_CASE("synthetic tasks follow their definitions") {
  const auto sos = synth_task(SynthKind::sign_of_sum, 40, 3, 200, 9);
  CHECK(sos.size() == 200);
  CHECK(sos.channels() == 3);
  for (std::size_t k = 0; k < sos.size(); ++k) {
    double sum = 0.0;
    for (std::size_t t = 0; t < 10; ++t) sum += sos.sequences[k](t, 0);
    for (std::size_t t = 10; t < 40; ++t) CHECK(sos.sequences[k](t, 0) == 0.0);
    CHECK(sos.labels[k] == (sum > 0.0 ? 1u : 0u));
  }
  const auto par = synth_task(SynthKind::long_parity, 64, 1, 300, 9);
  for (std::size_t k = 0; k < par.size(); ++k) {
    std::vector<std::size_t> at;
    for (std::size_t t = 0; t < 64; ++t)
      if (par.sequences[k](t, 0) != 0.0) at.push_back(t);
    CHECK(at.size() <= 2);
    if (at.size() == 2) CHECK(at[1] - at[0] >= 32);
    CHECK(par.labels[k] == at.size() % 2);
  }
}

TEST_CASE("synthetic tasks are balanced, seeded and validated") {
  for (auto kind : {SynthKind::sign_of_sum, SynthKind::long_parity}) {
    const auto ds = synth_task(kind, 8, 2, 10000, 1);
    double ones = 0.0;
    for (auto l : ds.labels) ones += static_cast<double>(l);
    CHECK(ones / 10000.0 >= 0.45);
    CHECK(ones / 10000.0 <= 0.55);
    const auto again = synth_task(kind, 8, 2, 50, 7);
    CHECK(synth_task(kind, 8, 2, 50, 7).sequences == again.sequences);
    CHECK(synth_task(kind, 8, 2, 0, 7).size() == 0);
  }
  CHECK_THROWS_AS(synth_task(SynthKind::sign_of_sum, 7, 2, 10, 1), ConfigError);
  CHECK_THROWS_AS(synth_task(SynthKind::sign_of_sum, 16, 1, 10, 1), ConfigError);
  CHECK(parse_synth_kind("long_parity") == SynthKind::long_parity);
  CHECK_THROWS_AS(parse_synth_kind("xor"), ConfigError);
}

TEST_CASE("UEA files when available") {
  const char* dir = std::getenv("LRC_DATA_DIR");
  if (!dir) {
    MESSAGE("LRC_DATA_DIR not set; skipping Heartbeat/EigenWorms shape checks");
    return;
  }
  const fs::path root(dir);
  if (fs::exists(root / "Heartbeat_TRAIN.ts")) {
    const auto hb = load_ts(root / "Heartbeat_TRAIN.ts");
    CHECK(hb.length() == 405);
    CHECK(hb.channels() == 61);
    CHECK(hb.class_count() == 2);
  }
  if (fs::exists(root / "EigenWorms_TRAIN.ts")) {
    const auto ew = load_ts(root / "EigenWorms_TRAIN.ts");
    CHECK(ew.length() == 17984);
    CHECK(ew.channels() == 6);
    CHECK(ew.class_count() == 5);
  }
}
