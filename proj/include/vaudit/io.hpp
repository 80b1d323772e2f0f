// io.hpp -- shared plumbing: error type, little-endian binary streams,
// flat key=value config files with schema checking, FNV-1a content hashing.
#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace vaudit {

static_assert(std::endian::native == std::endian::little,
              "on-disk formats are little-endian; big-endian hosts unsupported");

// Error codes surface as the machine-parsable CLI failure line:
//   error: <code>: <message>
struct Error : std::runtime_error {
  std::string code;
  Error(std::string c, const std::string& msg)
      : std::runtime_error(msg), code(std::move(c)) {}
};

[[noreturn]] inline void fail(const char* code, const std::string& msg) {
  throw Error(code, msg);
}

// ---------------------------------------------------------------- binary io

class BinWriter {
 public:
  explicit BinWriter(const std::string& path) : os_(path, std::ios::binary) {
    if (!os_) fail("E_IO", "cannot open for write: " + path);
    path_ = path;
  }
  void bytes(const void* p, size_t n) {
    os_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  }
  void u32(uint32_t v) { bytes(&v, 4); }
  void u64(uint64_t v) { bytes(&v, 8); }
  void f32(float v) { bytes(&v, 4); }
  void f32s(const float* p, size_t n) { bytes(p, 4 * n); }
  void u64s(const uint64_t* p, size_t n) { bytes(p, 8 * n); }
  void u32s(const uint32_t* p, size_t n) { bytes(p, 4 * n); }
  // length-prefixed utf-8 string
  void str(const std::string& s) {
    u32(static_cast<uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void magic(const char m[4]) { bytes(m, 4); }
  void close() {
    os_.close();
    if (!os_) fail("E_IO", "short write: " + path_);
  }

 private:
  std::ofstream os_;
  std::string path_;
};

class BinReader {
 public:
  explicit BinReader(const std::string& path) : is_(path, std::ios::binary) {
    if (!is_) fail("E_IO", "cannot open for read: " + path);
    path_ = path;
  }
  void bytes(void* p, size_t n) {
    is_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(is_.gcount()) != n)
      fail("E_IO", "truncated file: " + path_);
  }
  uint32_t u32() { uint32_t v; bytes(&v, 4); return v; }
  uint64_t u64() { uint64_t v; bytes(&v, 8); return v; }
  float f32() { float v; bytes(&v, 4); return v; }
  void f32s(float* p, size_t n) { bytes(p, 4 * n); }
  void u64s(uint64_t* p, size_t n) { bytes(p, 8 * n); }
  void u32s(uint32_t* p, size_t n) { bytes(p, 4 * n); }
  std::string str(size_t max_len = 1u << 20) {
    uint32_t n = u32();
    if (n > max_len) fail("E_IO", "implausible string length in " + path_);
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  void expect_magic(const char m[4]) {
    char got[4];
    bytes(got, 4);
    if (std::memcmp(got, m, 4) != 0)
      fail("E_IO", "bad magic in " + path_ + " (want " + std::string(m, 4) + ")");
  }
  bool at_eof() { return is_.peek() == std::char_traits<char>::eof(); }

 private:
  std::ifstream is_;
  std::string path_;
};

// ------------------------------------------------------------- text helpers

inline std::string read_text_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail("E_IO", "cannot open: " + path);
  std::string s((std::istreambuf_iterator<char>(is)),
                std::istreambuf_iterator<char>());
  return s;
}

inline void write_text_file(const std::string& path, const std::string& body) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail("E_IO", "cannot open for write: " + path);
  os.write(body.data(), static_cast<std::streamsize>(body.size()));
  os.close();
  if (!os) fail("E_IO", "short write: " + path);
}

inline void ensure_dir(const std::string& path) {
  std::error_code ec;
  std::filesystem::create_directories(path, ec);
  if (ec) fail("E_IO", "cannot create directory " + path + ": " + ec.message());
}

inline std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

// fixed-precision float text for reports; JSON output uses the library's
// round-trip serializer instead
inline std::string fmt_f64(double v, int prec = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

// ---------------------------------------------------------------- hashing

inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// provenance hash of a file's bytes (content fingerprint, not cryptographic)
inline std::string file_hash(const std::string& path) {
  std::string body = read_text_file(path);
  return hex64(fnv1a64(body.data(), body.size()));
}

// ---------------------------------------------------------------- kv config

// Flat key=value config. '#' starts a comment, blank lines ignored, keys
// unique, schema_version mandatory. Unknown keys are rejected by validate()
// so typos cannot silently fall back to defaults.
class KvConfig {
 public:
  static KvConfig parse(const std::string& text, const std::string& origin = "<string>") {
    KvConfig c;
    size_t pos = 0, lineno = 0;
    while (pos <= text.size()) {
      size_t nl = text.find('\n', pos);
      std::string line = text.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
      pos = nl == std::string::npos ? text.size() + 1 : nl + 1;
      ++lineno;
      size_t hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      line = trim(line);
      if (line.empty()) continue;
      size_t eq = line.find('=');
      if (eq == std::string::npos)
        fail("E_CONFIG", origin + ":" + std::to_string(lineno) + ": expected key=value");
      std::string k = trim(line.substr(0, eq));
      std::string v = trim(line.substr(eq + 1));
      if (k.empty()) fail("E_CONFIG", origin + ":" + std::to_string(lineno) + ": empty key");
      if (c.kv_.count(k)) fail("E_CONFIG", origin + ": duplicate key " + k);
      c.kv_[k] = v;
    }
    if (!c.kv_.count("schema_version"))
      fail("E_CONFIG", origin + ": missing schema_version");
    if (c.get_str("schema_version") != "1")
      fail("E_CONFIG", origin + ": unsupported schema_version " + c.get_str("schema_version"));
    return c;
  }

  static KvConfig load(const std::string& path) {
    return parse(read_text_file(path), path);
  }

  bool has(const std::string& k) const { return kv_.count(k) != 0; }

  std::string get_str(const std::string& k) const {
    auto it = kv_.find(k);
    if (it == kv_.end()) fail("E_CONFIG", "missing config key " + k);
    return it->second;
  }
  std::string get_str(const std::string& k, const std::string& dflt) const {
    auto it = kv_.find(k);
    return it == kv_.end() ? dflt : it->second;
  }
  int64_t get_int(const std::string& k, int64_t dflt) const {
    if (!has(k)) return dflt;
    return parse_int(k, kv_.at(k));
  }
  int64_t get_int(const std::string& k) const { return parse_int(k, get_str(k)); }
  double get_f64(const std::string& k, double dflt) const {
    if (!has(k)) return dflt;
    return parse_f64(k, kv_.at(k));
  }
  bool get_bool(const std::string& k, bool dflt) const {
    if (!has(k)) return dflt;
    const std::string& v = kv_.at(k);
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    fail("E_CONFIG", "key " + k + ": expected bool, got '" + v + "'");
  }
  void set(const std::string& k, const std::string& v) { kv_[k] = v; }

  // keys sorted, one per line: the canonical text that gets hashed
  std::string canonical_text() const {
    std::string out = "schema_version=1\n";
    for (const auto& [k, v] : kv_)
      if (k != "schema_version") out += k + "=" + v + "\n";
    return out;
  }
  std::string hash() const {
    std::string t = canonical_text();
    return hex64(fnv1a64(t.data(), t.size()));
  }

  // reject keys outside the schema
  void validate(const std::vector<std::string>& allowed) const {
    for (const auto& [k, v] : kv_) {
      if (k == "schema_version") continue;
      bool ok = false;
      for (const auto& a : allowed)
        if (k == a) { ok = true; break; }
      if (!ok) fail("E_CONFIG", "unknown config key " + k);
    }
  }

  const std::map<std::string, std::string>& items() const { return kv_; }

 private:
  static int64_t parse_int(const std::string& k, const std::string& v) {
    try {
      size_t used = 0;
      int64_t r = std::stoll(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return r;
    } catch (const std::exception&) {
      fail("E_CONFIG", "key " + k + ": expected integer, got '" + v + "'");
    }
  }
  static double parse_f64(const std::string& k, const std::string& v) {
    try {
      size_t used = 0;
      double r = std::stod(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return r;
    } catch (const std::exception&) {
      fail("E_CONFIG", "key " + k + ": expected number, got '" + v + "'");
    }
  }

  std::map<std::string, std::string> kv_;
};

// ---------------------------------------------------------------- rng

// splitmix64, used to derive independent stream seeds from (seed, tags)
inline uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t seed, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
  return mix64(mix64(mix64(mix64(seed) ^ a) ^ b) ^ c);
}

// xoshiro-free minimal generator: explicit so outputs are pinned across
// platforms and standard-library versions
class Rng {
 public:
  explicit Rng(uint64_t seed) : s_(mix64(seed ^ 0x2545f4914f6cdd1dull)) {}
  uint64_t next_u64() {
    s_ = mix64(s_);
    return s_;
  }
  // uniform in [0, n)
  uint64_t next_below(uint64_t n) { return n ? next_u64() % n : 0; }
  // uniform in [0, 1)
  double next_f64() { return (next_u64() >> 11) * 0x1.0p-53; }
  float next_f32() { return static_cast<float>((next_u64() >> 40) * 0x1.0p-24); }
  // uniform in [lo, hi)
  double next_range(double lo, double hi) { return lo + (hi - lo) * next_f64(); }
  // standard normal via Box-Muller
  double next_normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 <= 1e-300) u1 = next_f64();
    double u2 = next_f64();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }
  // Poisson via inversion (small means only)
  int next_poisson(double mean) {
    double l = std::exp(-mean), p = 1.0;
    int k = 0;
    do {
      ++k;
      p *= next_f64();
    } while (p > l && k < 1024);
    return k - 1;
  }
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i)
      std::swap(v[i - 1], v[next_below(i)]);
  }

 private:
  uint64_t s_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace vaudit
