#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include "vaudit/sanitize.hpp"

using namespace vaudit;

namespace {

struct Data {
  Tensor<float> x;
  std::vector<int32_t> y;
};

Data blobs(int64_t per_class, int64_t k, int64_t d, double spread, double noise,
           uint64_t seed) {
  Rng rng(seed);
  Data b;
  b.x = Tensor<float>::zeros({per_class * k, d});
  int64_t row = 0;
  for (int64_t c = 0; c < k; ++c)
    for (int64_t i = 0; i < per_class; ++i, ++row) {
      for (int64_t j = 0; j < d; ++j) {
        double center = (j % k) == c ? spread : 0.0;
        b.x.at(row, j) = static_cast<float>(center + noise * rng.next_normal());
      }
      b.y.push_back(static_cast<int32_t>(c));
    }
  return b;
}

Data noise_data(int64_t n, int64_t d, int64_t k, uint64_t seed) {
  Rng rng(seed);
  Data b;
  b.x = Tensor<float>::zeros({n, d});
  for (auto& v : b.x.data) v = static_cast<float>(rng.next_normal());
  for (int64_t i = 0; i < n; ++i)
    b.y.push_back(static_cast<int32_t>(i % k));
  return b;
}

void check_projector(const LinearSanitizer& s) {
  int64_t d = s.d;
  double sym = 0.0, idem = 0.0;
  for (int64_t i = 0; i < d; ++i)
    for (int64_t j = 0; j < d; ++j) {
      sym = std::max(sym, std::abs(s.p.at(i, j) - s.p.at(j, i)));
      double acc = 0.0;
      for (int64_t c = 0; c < d; ++c) acc += s.p.at(i, c) * s.p.at(c, j);
      idem = std::max(idem, std::abs(acc - s.p.at(i, j)));
    }
  CHECK(sym <= 1e-6);
  CHECK(idem <= 1e-6);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(sanitize_detail::to_eigen(s.p));
  int64_t rank = 0;
  for (int64_t i = 0; i < svd.singularValues().size(); ++i)
    if (svd.singularValues()(i) > 1e-6) ++rank;
  CHECK(rank == d - s.k);
}

}  // namespace

TEST_CASE("every fitted projector is a symmetric idempotent of rank d-k") {
  auto tr = blobs(60, 5, 24, 3.0, 0.6, 3);
  auto va = blobs(30, 5, 24, 3.0, 0.6, 4);
  auto inlp = fit_inlp(tr.x, tr.y, va.x, va.y, 5, 6);
  check_projector(inlp.sanitizer);
  check_projector(fit_oneshot_removal(tr.x, tr.y, 5));
  check_projector(fit_pca_removal(tr.x, 7));
  check_projector(fit_random_removal(24, 7, 11));
  check_projector(fit_random_removal(24, 0, 11));
}

TEST_CASE("inlp pushes a freshly fit probe to chance on separable data") {
  auto tr = blobs(200, 5, 32, 3.0, 0.7, 21);
  auto va = blobs(60, 5, 32, 3.0, 0.7, 22);
  auto ev = blobs(60, 5, 32, 3.0, 0.7, 23);

  auto before = fit_linear_probe(tr.x, tr.y, 5);
  CHECK(evaluate_scores(before.scores(ev.x), ev.y, 5).accuracy >= 0.95);

  auto res = fit_inlp(tr.x, tr.y, va.x, va.y, 5);
  REQUIRE(!res.log.empty());
  CHECK(res.sanitizer.k > 0);
  CHECK(res.sanitizer.k == res.log.back().k_total);
  CHECK((res.log.back().val_gap <= 0.003 ||
         static_cast<int64_t>(res.log.size()) == 20));
  for (size_t i = 0; i < res.log.size(); ++i)
    CHECK(res.log[i].iter == static_cast<int64_t>(i + 1));

  auto str = apply_sanitizer(res.sanitizer, tr.x);
  auto sev = apply_sanitizer(res.sanitizer, ev.x);
  auto after = fit_linear_probe(str, tr.y, 5);
  double acc = evaluate_scores(after.scores(sev), ev.y, 5).accuracy;
  CHECK(std::abs(acc - 0.2) <= 0.05);
}

TEST_CASE("inlp on signal-free data stops after the first iteration") {
  auto tr = noise_data(400, 16, 5, 31);
  auto va = noise_data(100, 16, 5, 32);
  auto res = fit_inlp(tr.x, tr.y, va.x, va.y, 5);
  // chance-level probe: gap <= 0.003 may take a couple of tries on a finite
  // sample, but the stop rule must engage well before the 20-iteration cap
  CHECK(res.log.size() <= 3);
  CHECK(res.log.back().val_gap <= 0.003);
  CHECK(res.sanitizer.k == res.log.back().k_total);
}

TEST_CASE("single-class labels are rejected") {
  auto tr = noise_data(50, 8, 5, 41);
  std::vector<int32_t> ones(50, 1);
  CHECK_THROWS_AS(fit_oneshot_removal(tr.x, ones, 5), Error);
  auto va = noise_data(20, 8, 5, 42);
  CHECK_THROWS_AS(fit_inlp(tr.x, ones, va.x, va.y, 5), Error);
}

TEST_CASE("removal rank follows the weight row space") {
  SECTION("zero weights remove nothing") {
    Tensor<double> w = Tensor<double>::zeros({5, 12});
    auto s = removal_from_weights(w, 12);
    CHECK(s.k == 0);
    for (int64_t i = 0; i < 12; ++i)
      for (int64_t j = 0; j < 12; ++j)
        CHECK(s.p.at(i, j) == (i == j ? 1.0 : 0.0));
  }
  SECTION("duplicate rows drop the rank by one") {
    Rng rng(55);
    Tensor<double> w = Tensor<double>::zeros({5, 12});
    for (auto& v : w.data) v = rng.next_normal();
    for (int64_t j = 0; j < 12; ++j) w.at(1, j) = w.at(0, j);
    auto s = removal_from_weights(w, 12);
    CHECK(s.k == 4);
  }
  SECTION("full-rank weights remove K dims") {
    Rng rng(56);
    Tensor<double> w = Tensor<double>::zeros({5, 32});
    for (auto& v : w.data) v = rng.next_normal();
    auto s = removal_from_weights(w, 32);
    CHECK(s.k == 5);
    check_projector(s);
  }
}

TEST_CASE("oneshot removal on separable five-class data removes five dims") {
  auto tr = blobs(120, 5, 32, 3.0, 0.5, 61);
  auto s = fit_oneshot_removal(tr.x, tr.y, 5);
  CHECK(s.k == 5);
}

TEST_CASE("pca removal flattens low-rank structure") {
  // data on a 3-dim affine subspace of d=10
  Rng rng(71);
  int64_t n = 300, d = 10;
  std::vector<std::vector<double>> dirs(3, std::vector<double>(d));
  for (auto& v : dirs)
    for (auto& x : v) x = rng.next_normal();
  Tensor<float> x = Tensor<float>::zeros({n, d});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t c = 0; c < 3; ++c) {
      double coef = rng.next_normal();
      for (int64_t j = 0; j < d; ++j)
        x.at(i, j) += static_cast<float>(coef * dirs[static_cast<size_t>(c)][static_cast<size_t>(j)] +
                                         (c == 0 ? 0.3 : 0.0));
    }
  auto s = fit_pca_removal(x, 3);
  CHECK(s.k == 3);
  auto xp = apply_sanitizer(s, x);
  // all variance lived in the removed subspace
  for (int64_t j = 0; j < d; ++j) {
    double m = 0.0, v = 0.0;
    for (int64_t i = 0; i < n; ++i) m += xp.at(i, j);
    m /= static_cast<double>(n);
    for (int64_t i = 0; i < n; ++i) {
      double c = xp.at(i, j) - m;
      v += c * c;
    }
    CHECK(v / static_cast<double>(n) <= 1e-10);
  }

  SECTION("k=0 keeps the data") {
    auto id = fit_pca_removal(x, 0);
    auto same = apply_sanitizer(id, x);
    for (int64_t i = 0; i < x.numel(); ++i)
      CHECK(std::abs(same.data[i] - x.data[i]) <= 1e-6f);
  }
  SECTION("k=d zeroes the projector") {
    auto full = fit_pca_removal(x, static_cast<int64_t>(d));
    CHECK(full.k == d);
    for (double v : full.p.data) CHECK(std::abs(v) <= 1e-6);
  }
  SECTION("k out of range is rejected") {
    CHECK_THROWS_AS(fit_pca_removal(x, d + 1), Error);
    CHECK_THROWS_AS(fit_pca_removal(x, -1), Error);
  }
}

TEST_CASE("random removal is seeded and mean-free") {
  auto a = fit_random_removal(16, 5, 9);
  auto b = fit_random_removal(16, 5, 9);
  auto c = fit_random_removal(16, 5, 10);
  CHECK(a.p.data == b.p.data);
  bool differ = false;
  for (int64_t i = 0; i < a.p.numel() && !differ; ++i)
    differ = a.p.data[i] != c.p.data[i];
  CHECK(differ);

  SECTION("k=d sends everything to zero") {
    auto full = fit_random_removal(12, 12, 5);
    Rng rng(77);
    Tensor<float> x = Tensor<float>::zeros({20, 12});
    for (auto& v : x.data) v = static_cast<float>(rng.next_normal());
    auto xp = apply_sanitizer(full, x);
    for (float v : xp.data) CHECK(std::abs(v) <= 1e-4f);
  }
  SECTION("k out of range is rejected") {
    CHECK_THROWS_AS(fit_random_removal(8, 9, 1), Error);
  }
}

TEST_CASE("apply is idempotent and kills the removed subspace") {
  auto tr = blobs(80, 5, 20, 2.5, 0.8, 81);
  auto va = blobs(40, 5, 20, 2.5, 0.8, 82);
  for (const auto* which : {"inlp", "pca"}) {
    LinearSanitizer s;
    if (std::string(which) == "inlp")
      s = fit_inlp(tr.x, tr.y, va.x, va.y, 5, 5).sanitizer;
    else
      s = fit_pca_removal(tr.x, 6);
    auto once = apply_sanitizer(s, va.x);
    auto twice = apply_sanitizer(s, once);
    for (int64_t i = 0; i < once.numel(); ++i)
      CHECK(std::abs(once.data[i] - twice.data[i]) <= 1e-6f);
  }

  // mean-free method: vectors in the removed span map to zero
  auto s = fit_oneshot_removal(tr.x, tr.y, 5);
  REQUIRE(s.k >= 1);
  // find a removed direction as a row difference: P v = 0 for v in span(U)
  // use v = x - P x for an arbitrary x
  Tensor<float> probe = Tensor<float>::zeros({1, 20});
  Rng rng(83);
  for (auto& v : probe.data) v = static_cast<float>(rng.next_normal());
  auto px = apply_sanitizer(s, probe);
  Tensor<float> removed = Tensor<float>::zeros({1, 20});
  for (int64_t j = 0; j < 20; ++j) removed.at(0, j) = probe.at(0, j) - px.at(0, j);
  auto z = apply_sanitizer(s, removed);
  for (float v : z.data) CHECK(std::abs(v) <= 1e-5f);

  SECTION("dimension mismatch is rejected") {
    Tensor<float> bad = Tensor<float>::zeros({2, 19});
    CHECK_THROWS_AS(apply_sanitizer(s, bad), Error);
  }
}

TEST_CASE("matched dimensionality rule") {
  CHECK(matched_k(100, 5) == 100);
  CHECK(matched_k(0, 5) == 5);
  CHECK(matched_k(0, 0) == 0);
}

TEST_CASE("sanitizer files round trip") {
  auto tr = blobs(50, 5, 12, 2.0, 0.5, 91);
  auto s = fit_pca_removal(tr.x, 4);
  std::string path = "/tmp/vaudit_test_san.bin";
  write_vsan(path, s);
  auto b = read_vsan(path);
  CHECK(b.method == "pca");
  CHECK(b.k == 4);
  CHECK(b.d == 12);
  for (size_t i = 0; i < s.mean.size(); ++i)
    CHECK(static_cast<float>(b.mean[i]) == static_cast<float>(s.mean[i]));
  for (int64_t i = 0; i < s.p.numel(); ++i)
    CHECK(static_cast<float>(b.p.data[i]) == static_cast<float>(s.p.data[i]));

  SECTION("truncation fails") {
    std::string blob = read_text_file(path);
    write_text_file(path, blob.substr(0, blob.size() - 3));
    CHECK_THROWS_AS(read_vsan(path), Error);
  }
  SECTION("bad magic fails") {
    std::string blob = read_text_file(path);
    blob[1] = 'Z';
    write_text_file(path, blob);
    CHECK_THROWS_AS(read_vsan(path), Error);
  }
}
