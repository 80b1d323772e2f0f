#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>

#include "vaudit/io.hpp"

using namespace vaudit;

namespace {
std::string tmp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}
}  // namespace

TEST_CASE("kv config parses, defaults, and rejects malformed input") {
  auto cfg = KvConfig::parse(
      "schema_version=1\n"
      "alpha = 32  # comment\n"
      "name=run a\n"
      "flag=true\n");
  REQUIRE(cfg.get_int("alpha") == 32);
  REQUIRE(cfg.get_str("name") == "run a");
  REQUIRE(cfg.get_bool("flag", false));
  REQUIRE(cfg.get_f64("missing", 2.5) == 2.5);

  REQUIRE_THROWS_AS(KvConfig::parse("alpha=1\n"), Error);          // no schema
  REQUIRE_THROWS_AS(KvConfig::parse("schema_version=2\n"), Error); // wrong schema
  REQUIRE_THROWS_AS(KvConfig::parse("schema_version=1\nbad line\n"), Error);
  REQUIRE_THROWS_AS(KvConfig::parse("schema_version=1\na=1\na=2\n"), Error);

  auto cfg2 = KvConfig::parse("schema_version=1\nalpha=x\n");
  REQUIRE_THROWS_AS(cfg2.get_int("alpha"), Error);
}

TEST_CASE("kv config hash is order-insensitive and content-sensitive") {
  auto a = KvConfig::parse("schema_version=1\nx=1\ny=2\n");
  auto b = KvConfig::parse("schema_version=1\ny=2\nx=1\n");
  auto c = KvConfig::parse("schema_version=1\nx=1\ny=3\n");
  REQUIRE(a.hash() == b.hash());
  REQUIRE(a.hash() != c.hash());
}

TEST_CASE("kv config validate rejects unknown keys") {
  auto cfg = KvConfig::parse("schema_version=1\nalpha=1\nbeta=2\n");
  REQUIRE_NOTHROW(cfg.validate({"alpha", "beta"}));
  REQUIRE_THROWS_AS(cfg.validate({"alpha"}), Error);
}

TEST_CASE("binary writer/reader round trip and truncation detection") {
  std::string path = tmp_path("vaudit_io_test.bin");
  {
    BinWriter w(path);
    w.magic("TEST");
    w.u32(7);
    w.u64(1234567890123ull);
    w.str("hello");
    float fs[3] = {1.5f, -2.25f, 0.0f};
    w.f32s(fs, 3);
    w.close();
  }
  {
    BinReader r(path);
    r.expect_magic("TEST");
    REQUIRE(r.u32() == 7);
    REQUIRE(r.u64() == 1234567890123ull);
    REQUIRE(r.str() == "hello");
    float fs[3];
    r.f32s(fs, 3);
    REQUIRE(fs[1] == -2.25f);
    REQUIRE(r.at_eof());
  }
  // truncate and expect a clean failure
  std::string body = read_text_file(path);
  write_text_file(path, body.substr(0, body.size() - 5));
  BinReader r(path);
  r.expect_magic("TEST");
  REQUIRE(r.u32() == 7);
  REQUIRE(r.u64() == 1234567890123ull);
  float fs[3];
  REQUIRE_THROWS_AS((r.str(), r.f32s(fs, 3)), Error);
  std::remove(path.c_str());
}

TEST_CASE("bad magic is rejected") {
  std::string path = tmp_path("vaudit_io_magic.bin");
  {
    BinWriter w(path);
    w.magic("NOPE");
    w.close();
  }
  BinReader r(path);
  REQUIRE_THROWS_AS(r.expect_magic("TEST"), Error);
  std::remove(path.c_str());
}

TEST_CASE("rng streams are deterministic and seed-separated") {
  Rng a(42), b(42), c(43);
  std::vector<uint64_t> xs, ys, zs;
  for (int i = 0; i < 64; ++i) {
    xs.push_back(a.next_u64());
    ys.push_back(b.next_u64());
    zs.push_back(c.next_u64());
  }
  REQUIRE(xs == ys);
  REQUIRE(xs != zs);

  REQUIRE(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
  REQUIRE(derive_seed(1, 2, 3) != derive_seed(1, 3, 2));
}

TEST_CASE("rng uniform and normal moments are sane") {
  Rng r(9);
  double sum = 0, sumsq = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    double v = r.next_normal();
    sum += v;
    sumsq += v * v;
  }
  REQUIRE(std::abs(sum / n) < 0.02);
  REQUIRE(std::abs(sumsq / n - 1.0) < 0.03);

  double mean_pois = 0;
  for (int i = 0; i < 50000; ++i) mean_pois += r.next_poisson(3.0);
  REQUIRE(std::abs(mean_pois / 50000 - 3.0) < 0.1);
}
