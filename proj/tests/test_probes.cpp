#include <catch2/catch_amalgamated.hpp>

#include <cstring>

#include "support/oracles.hpp"
#include "vaudit/probes.hpp"

using namespace vaudit;

namespace {

struct Blobs {
  Tensor<float> x;
  std::vector<int32_t> y;
};

// k Gaussian blobs with centers spread on coordinate axes
Blobs make_blobs(int64_t per_class, int64_t k, int64_t d, double spread,
                 double noise, uint64_t seed) {
  Rng rng(seed);
  Blobs b;
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

std::vector<std::vector<float>> to_rows(const Tensor<float>& x) {
  std::vector<std::vector<float>> out;
  for (int64_t i = 0; i < x.rows(); ++i)
    out.push_back(std::vector<float>(x.row_ptr(i), x.row_ptr(i) + x.cols()));
  return out;
}

std::vector<int> to_int(const std::vector<int32_t>& y) {
  return std::vector<int>(y.begin(), y.end());
}

}  // namespace

TEST_CASE("linear probe separates well-spread blobs") {
  auto b = make_blobs(200, 5, 16, 4.0, 0.5, 31);
  REQUIRE(oracles::nearest_centroid_acc(to_rows(b.x), to_int(b.y), 5) >= 0.99);
  auto p = fit_linear_probe(b.x, b.y, 5);
  auto rep = evaluate_scores(p.scores(b.x), b.y, 5);
  CHECK(rep.accuracy >= 0.99);
  CHECK(rep.per_class.size() == 5);
}

TEST_CASE("linear probe on label-independent data sits at chance") {
  Rng rng(77);
  int64_t n = 2500, d = 12;
  auto mk = [&](uint64_t) {
    Blobs b;
    b.x = Tensor<float>::zeros({n, d});
    for (auto& v : b.x.data) v = rng.next_f32() - 0.5f;
    for (int64_t i = 0; i < n; ++i)
      b.y.push_back(static_cast<int32_t>(rng.next_below(5)));
    return b;
  };
  auto tr = mk(1), ev = mk(2);
  auto p = fit_linear_probe(tr.x, tr.y, 5);
  double acc = evaluate_scores(p.scores(ev.x), ev.y, 5).accuracy;
  double sigma = std::sqrt(0.2 * 0.8 / static_cast<double>(n));
  CHECK(std::abs(acc - 0.2) <= 3.0 * sigma);
}

TEST_CASE("identical rows with balanced labels score exactly chance") {
  int64_t n = 100, d = 6;
  Tensor<float> x = Tensor<float>::zeros({n, d});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < d; ++j) x.at(i, j) = 0.37f;
  std::vector<int32_t> y;
  for (int64_t i = 0; i < n; ++i) y.push_back(static_cast<int32_t>(i % 5));
  auto p = fit_linear_probe(x, y, 5);
  auto rep = evaluate_scores(p.scores(x), y, 5);
  CHECK(rep.accuracy == 0.2);
  CHECK(rep.gap == 0.0);
}

TEST_CASE("convex objective makes the linear probe seed-stable") {
  auto tr = make_blobs(120, 5, 10, 1.2, 1.0, 41);
  auto ev = make_blobs(80, 5, 10, 1.2, 1.0, 42);
  double lo = 1.0, hi = 0.0;
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    LinearProbeSpec spec;
    spec.seed = seed;
    auto p = fit_linear_probe(tr.x, tr.y, 5, spec);
    double acc = evaluate_scores(p.scores(ev.x), ev.y, 5).accuracy;
    lo = std::min(lo, acc);
    hi = std::max(hi, acc);
  }
  CHECK(hi - lo <= 0.002);
}

TEST_CASE("leakage gap is the absolute deviation from chance") {
  auto craft = [](int64_t correct, int64_t n, int64_t k) {
    Tensor<double> scores = Tensor<double>::zeros({n, k});
    std::vector<int32_t> y;
    for (int64_t i = 0; i < n; ++i) {
      int32_t label = static_cast<int32_t>(i % k);
      y.push_back(label);
      int32_t pred = i < correct ? label : (label + 1) % static_cast<int32_t>(k);
      scores.at(i, pred) = 1.0;
    }
    return std::make_pair(scores, y);
  };
  {
    auto [s, y] = craft(236, 1000, 5);
    auto rep = evaluate_scores(s, y, 5);
    CHECK(rep.accuracy == Catch::Approx(0.236).margin(1e-12));
    CHECK(rep.gap == Catch::Approx(0.036).margin(1e-12));
  }
  {
    auto [s, y] = craft(203, 1000, 5);
    CHECK(evaluate_scores(s, y, 5).gap == Catch::Approx(0.003).margin(1e-12));
  }
  {
    auto [s, y] = craft(200, 1000, 5);
    CHECK(evaluate_scores(s, y, 5).gap == Catch::Approx(0.0).margin(1e-12));
  }
  Tensor<double> empty = Tensor<double>::zeros({0, 5});
  CHECK_THROWS_AS(evaluate_scores(empty, {}, 5), Error);
}

TEST_CASE("mlp probe learns xor that defeats the linear probe") {
  // four clusters at (+-1, +-1), label = xor of signs
  auto make_xor = [](int64_t per_quad, double noise, uint64_t seed) {
    Rng rng(seed);
    Blobs b;
    b.x = Tensor<float>::zeros({per_quad * 4, 2});
    int64_t row = 0;
    for (int sx = 0; sx < 2; ++sx)
      for (int sy = 0; sy < 2; ++sy)
        for (int64_t i = 0; i < per_quad; ++i, ++row) {
          double cx = sx ? 1.0 : -1.0, cy = sy ? 1.0 : -1.0;
          b.x.at(row, 0) = static_cast<float>(cx + noise * rng.next_normal());
          b.x.at(row, 1) = static_cast<float>(cy + noise * rng.next_normal());
          b.y.push_back(sx ^ sy);
        }
    return b;
  };
  auto tr = make_xor(100, 0.25, 51);
  auto va = make_xor(50, 0.25, 52);
  auto te = make_xor(50, 0.25, 53);

  auto lin = fit_linear_probe(tr.x, tr.y, 2);
  double lin_acc = evaluate_scores(lin.scores(te.x), te.y, 2).accuracy;
  CHECK(lin_acc <= 0.6);

  auto mlp = fit_mlp_probe(tr.x, tr.y, va.x, va.y, 2);
  double mlp_acc = evaluate_scores(mlp.scores(te.x), te.y, 2).accuracy;
  CHECK(mlp_acc >= 0.95);

  auto s1 = mlp.scores(te.x);
  auto s2 = mlp.scores(te.x);
  CHECK(0 == std::memcmp(s1.data.data(), s2.data.data(),
                         sizeof(double) * static_cast<size_t>(s1.numel())));
}

TEST_CASE("mlp early stopping counts non-improving epochs") {
  // constant-prediction setup: training and validation accuracy pin at 1.0
  int64_t n = 64;
  Tensor<float> x = Tensor<float>::zeros({n, 4});
  std::vector<int32_t> y(static_cast<size_t>(n), 2);
  Tensor<float> xv = Tensor<float>::zeros({10, 4});
  std::vector<int32_t> yv(10, 2);
  MlpProbeSpec spec;
  spec.max_epochs = 50;
  auto p = fit_mlp_probe(x, y, xv, yv, 3, spec);
  CHECK(p.epochs_run == 6);
  CHECK(p.best_val_accuracy == 1.0);
}

TEST_CASE("macro auroc follows the mann-whitney tie convention") {
  SECTION("perfect ranking gives 1") {
    Tensor<double> s = Tensor<double>::zeros({6, 2});
    std::vector<int32_t> y = {0, 0, 0, 1, 1, 1};
    for (int64_t i = 0; i < 6; ++i) {
      s.at(i, 0) = i < 3 ? 2.0 + static_cast<double>(i) : -2.0 - static_cast<double>(i);
      s.at(i, 1) = -s.at(i, 0);
    }
    CHECK(macro_auroc(s, y, 2) == 1.0);
  }
  SECTION("constant scores give exactly one half") {
    Tensor<double> s = Tensor<double>::zeros({10, 2});
    std::vector<int32_t> y = {0, 1, 0, 1, 0, 1, 0, 1, 0, 1};
    CHECK(macro_auroc(s, y, 2) == 0.5);
  }
  SECTION("hand case with a tie") {
    // class-0 scores: pos {0.9, 0.5}, neg {0.5, 0.1}
    // pairs: .9>.5, .9>.1, .5=.5 (half), .5>.1 -> 3.5/4
    Tensor<double> s = Tensor<double>::zeros({4, 2});
    std::vector<int32_t> y = {0, 0, 1, 1};
    s.at(0, 0) = 0.9;
    s.at(1, 0) = 0.5;
    s.at(2, 0) = 0.5;
    s.at(3, 0) = 0.1;
    s.at(0, 1) = 0.1;
    s.at(1, 1) = 0.5;
    s.at(2, 1) = 0.5;
    s.at(3, 1) = 0.9;
    CHECK(macro_auroc(s, y, 2) == Catch::Approx(0.875).margin(1e-12));
  }
  SECTION("agrees with the pairwise-count oracle on random scores") {
    Rng rng(5);
    int64_t n = 60, k = 3;
    Tensor<double> s = Tensor<double>::zeros({n, k});
    std::vector<int32_t> y;
    for (int64_t i = 0; i < n; ++i) {
      y.push_back(static_cast<int32_t>(i % k));
      for (int64_t c = 0; c < k; ++c)
        s.at(i, c) = std::round(rng.next_f64() * 8.0) / 8.0;  // force ties
    }
    double mine = macro_auroc(s, y, k);
    double ref = 0.0;
    for (int64_t c = 0; c < k; ++c) {
      std::vector<double> col;
      std::vector<int> pos;
      for (int64_t i = 0; i < n; ++i) {
        col.push_back(s.at(i, c));
        pos.push_back(y[static_cast<size_t>(i)] == c ? 1 : 0);
      }
      ref += oracles::pairwise_auroc(col, pos);
    }
    ref /= static_cast<double>(k);
    CHECK(mine == Catch::Approx(ref).margin(1e-12));
  }
  SECTION("missing class is rejected") {
    Tensor<double> s = Tensor<double>::zeros({4, 3});
    std::vector<int32_t> y = {0, 0, 1, 1};
    CHECK_THROWS_AS(macro_auroc(s, y, 3), Error);
  }
}

TEST_CASE("tfidf features use the smoothed idf and row normalization") {
  TextAttacker a;
  // two train docs: "a b" and "a"
  a.vocab = {{"a", 0}, {"b", 1}, {"a b", 2}};
  double n = 2.0;
  a.idf = {std::log((1.0 + n) / (1.0 + 2.0)) + 1.0,
           std::log((1.0 + n) / (1.0 + 1.0)) + 1.0,
           std::log((1.0 + n) / (1.0 + 1.0)) + 1.0};
  auto row = a.featurize("A  b");  // case folding and whitespace runs
  REQUIRE(row.size() == 3);
  double va = 1.0, vb = std::log(1.5) + 1.0;
  double norm = std::sqrt(va * va + 2.0 * vb * vb);
  CHECK(row[0].second == Catch::Approx(va / norm).margin(1e-12));
  CHECK(row[1].second == Catch::Approx(vb / norm).margin(1e-12));
  CHECK(row[2].second == Catch::Approx(vb / norm).margin(1e-12));
}

TEST_CASE("text attacker nails unique marker words") {
  std::vector<std::string> tr, va;
  std::vector<int32_t> ytr, yva;
  Rng rng(8);
  auto sample = [&](std::vector<std::string>& t, std::vector<int32_t>& y, int64_t n) {
    static const char* fillers[4] = {"patient stable today", "exam unremarkable",
                                     "continues home medication", "followup planned"};
    for (int64_t i = 0; i < n; ++i) {
      int32_t c = static_cast<int32_t>(i % 2);
      std::string s = fillers[rng.next_below(4)];
      s += c == 0 ? " alpha" : " omega";
      s += " ";
      s += fillers[rng.next_below(4)];
      t.push_back(s);
      y.push_back(c);
    }
  };
  sample(tr, ytr, 80);
  sample(va, yva, 40);
  auto a = fit_text_attacker(tr, ytr, va, yva, 2);
  auto sc = a.scores(va);
  CHECK(evaluate_scores(sc, yva, 2).accuracy == 1.0);
  CHECK(macro_auroc(sc, yva, 2) == 1.0);
}

TEST_CASE("text attacker on shuffled labels is near-chance auroc") {
  std::vector<std::string> tr, ev;
  std::vector<int32_t> ytr, yev;
  Rng rng(15);
  static const char* words[8] = {"alpha", "beta",  "gamma", "delta",
                                 "edema", "fever", "cough", "stable"};
  auto sample = [&](std::vector<std::string>& t, std::vector<int32_t>& y, int64_t n) {
    for (int64_t i = 0; i < n; ++i) {
      std::string s;
      for (int j = 0; j < 6; ++j) {
        if (j) s += ' ';
        s += words[rng.next_below(8)];
      }
      t.push_back(s);
      y.push_back(static_cast<int32_t>(rng.next_below(2)));
    }
  };
  sample(tr, ytr, 1000);
  sample(ev, yev, 1000);
  auto a = fit_text_attacker(tr, ytr, ev, yev, 2, {1.0});
  double auc = macro_auroc(a.scores(ev), yev, 2);
  CHECK(auc >= 0.45);
  CHECK(auc <= 0.55);
}

TEST_CASE("attacker grid picks best f1 then best accuracy") {
  CHECK(pick_grid_index({{0.5, 0.9}, {0.7, 0.68}, {0.7, 0.71}}) == 2);
  CHECK(pick_grid_index({{0.8, 0.1}, {0.7, 0.9}}) == 0);
  CHECK(pick_grid_index({{0.6, 0.5}, {0.6, 0.5}}) == 0);
}

TEST_CASE("empty attacker vocabulary is rejected") {
  CHECK_THROWS_AS(fit_text_attacker({" ", "  "}, {0, 1}, {" "}, {0}, 2), Error);
}
