#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <set>
#include <vector>

#include "vaudit/governance.hpp"

using namespace vaudit;
using Catch::Matchers::WithinAbs;

namespace {

CheckpointRecord rec(double lambda, int64_t step, double rl, double acc,
                     const std::string& kind = "lasttok_L-1") {
  CheckpointRecord r;
  r.run_id = "lambda=" + std::to_string(lambda);
  r.lambda = lambda;
  r.step = step;
  r.val_rouge_l = rl;
  r.val_lr_acc = acc;
  r.val_gap = leakage_gap(acc, 5);
  r.kind = kind;
  r.path = r.run_id + "/step" + std::to_string(step) + ".vlra";
  return r;
}

// best validation points per run for the lasttok-targeted sweep
std::vector<CheckpointRecord> lasttok_records() {
  return {
      rec(0.20, 600, 12.14, 0.217),
      rec(0.50, 600, 9.18, 0.218),
      rec(0.05, 800, 12.87, 0.222),
      rec(0.02, 1200, 14.40, 0.223),
      rec(0.10, 400, 13.45, 0.225),
      rec(0.00, 200, 13.46, 0.229),
  };
}

// meanpool-targeted sweep: per-lambda diagnostic bests plus the front rows
std::vector<CheckpointRecord> meanpool_records() {
  return {
      rec(0.00, 800, 13.67, 0.3164, "meanpool_L-1"),
      rec(0.05, 400, 13.21, 0.3084, "meanpool_L-1"),
      rec(0.10, 400, 12.97, 0.3132, "meanpool_L-1"),
      rec(0.30, 600, 13.91, 0.3136, "meanpool_L-1"),
      rec(1.00, 800, 13.53, 0.3136, "meanpool_L-1"),
      rec(0.05, 1000, 14.24, 0.3132, "meanpool_L-1"),
      rec(0.05, 1200, 14.65, 0.3136, "meanpool_L-1"),
      rec(0.30, 1200, 14.66, 0.3212, "meanpool_L-1"),
      rec(1.00, 1400, 14.79, 0.3260, "meanpool_L-1"),
  };
}

std::set<std::pair<double, int64_t>> keys(const std::vector<CheckpointRecord>& v) {
  std::set<std::pair<double, int64_t>> out;
  for (const auto& r : v) out.insert({r.lambda, r.step});
  return out;
}

}  // namespace

TEST_CASE("leakage gap arithmetic") {
  CHECK_THAT(leakage_gap(0.223, 5), WithinAbs(0.023, 1e-12));
  CHECK_THAT(leakage_gap(0.17, 5), WithinAbs(0.03, 1e-12));
  CHECK_THAT(leakage_gap(0.2, 5), WithinAbs(0.0, 1e-12));
  CHECK_THAT(leakage_gap(0.5, 2), WithinAbs(0.0, 1e-12));
}

TEST_CASE("selection on the frozen validation sweep") {
  auto records = lasttok_records();

  SECTION("default budget picks the max-rouge feasible checkpoint") {
    Selection s = select_checkpoint(records);
    CHECK(s.feasible);
    CHECK(s.record.lambda == 0.02);
    CHECK(s.record.step == 1200);
    CHECK_THAT(s.record.val_rouge_l, WithinAbs(14.40, 1e-12));
    CHECK_THAT(s.record.val_gap, WithinAbs(0.023, 1e-12));
  }
  SECTION("a gap equal to the budget is feasible but can lose on rouge") {
    // the (0.10, 400) row sits exactly on the 0.025 budget
    Selection s = select_checkpoint(records);
    CHECK(s.record.step != 400);
    SelectionPolicy tight;
    tight.epsilon = 0.0249;
    Selection s2 = select_checkpoint(records, tight);
    CHECK(s2.feasible);
    CHECK(s2.record.step == 1200);
  }
  SECTION("tightened budget falls back to the minimum-gap record") {
    SelectionPolicy p;
    p.epsilon = 0.010;
    Selection s = select_checkpoint(records, p);
    CHECK_FALSE(s.feasible);
    CHECK(s.record.lambda == 0.20);
    CHECK(s.record.step == 600);
    CHECK_THAT(s.record.val_gap, WithinAbs(0.017, 1e-12));
  }
  SECTION("selection ignores record order") {
    auto shuffled = records;
    std::reverse(shuffled.begin(), shuffled.end());
    Selection a = select_checkpoint(records);
    Selection b = select_checkpoint(shuffled);
    CHECK(a.record.path == b.record.path);
  }
}

TEST_CASE("selection on the meanpool sweep is infeasible") {
  Selection s = select_checkpoint(meanpool_records());
  CHECK_FALSE(s.feasible);
  CHECK(s.record.lambda == 0.05);
  CHECK(s.record.step == 400);
  CHECK_THAT(s.record.val_gap, WithinAbs(0.1084, 1e-12));
}

TEST_CASE("pareto front of the frozen sweeps") {
  SECTION("lasttok front is exactly three rows") {
    auto front = pareto_front(lasttok_records());
    std::set<std::pair<double, int64_t>> expect = {
        {0.20, 600}, {0.05, 800}, {0.02, 1200}};
    CHECK(keys(front) == expect);
  }
  SECTION("meanpool front matches the published rows") {
    auto front = pareto_front(meanpool_records());
    std::set<std::pair<double, int64_t>> expect = {
        {0.05, 400}, {0.05, 1000}, {0.05, 1200}, {0.30, 1200}, {1.00, 1400}};
    CHECK(keys(front) == expect);
  }
  SECTION("a front is a fixed point of pareto_front") {
    auto front = pareto_front(lasttok_records());
    auto again = pareto_front(front);
    CHECK(keys(again) == keys(front));
  }
  SECTION("front is sorted by ascending gap") {
    auto front = pareto_front(meanpool_records());
    for (size_t i = 1; i < front.size(); ++i)
      CHECK(front[i - 1].val_gap <= front[i].val_gap);
  }
  SECTION("single record is its own front") {
    std::vector<CheckpointRecord> one = {rec(0.1, 200, 10.0, 0.25)};
    CHECK(pareto_front(one).size() == 1);
  }
  SECTION("a dominating record collapses the front") {
    std::vector<CheckpointRecord> two = {rec(0.1, 200, 10.0, 0.25),
                                         rec(0.2, 400, 12.0, 0.21)};
    auto front = pareto_front(two);
    REQUIRE(front.size() == 1);
    CHECK(front[0].step == 400);
  }
  SECTION("incomparable duplicates on both axes are both kept") {
    std::vector<CheckpointRecord> two = {rec(0.1, 200, 10.0, 0.25),
                                         rec(0.2, 400, 10.0, 0.25)};
    CHECK(pareto_front(two).size() == 2);
  }
}

TEST_CASE("selection tie-breaks") {
  SECTION("equal rouge prefers the lower gap") {
    std::vector<CheckpointRecord> r = {rec(0.1, 400, 12.0, 0.222),
                                       rec(0.2, 600, 12.0, 0.221)};
    Selection s = select_checkpoint(r);
    CHECK(s.record.step == 600);
  }
  SECTION("equal rouge and gap prefers the lower step") {
    std::vector<CheckpointRecord> r = {rec(0.1, 800, 12.0, 0.221),
                                       rec(0.2, 400, 12.0, 0.221)};
    Selection s = select_checkpoint(r);
    CHECK(s.record.step == 400);
  }
  SECTION("full tie prefers the lower lambda") {
    std::vector<CheckpointRecord> r = {rec(0.3, 400, 12.0, 0.221),
                                       rec(0.1, 400, 12.0, 0.221)};
    Selection s = select_checkpoint(r);
    CHECK(s.record.lambda == 0.1);
  }
  SECTION("fallback ties prefer the higher rouge") {
    SelectionPolicy p;
    p.epsilon = 0.001;
    std::vector<CheckpointRecord> r = {rec(0.1, 400, 11.0, 0.29),
                                       rec(0.2, 600, 13.0, 0.29)};
    Selection s = select_checkpoint(r, p);
    CHECK_FALSE(s.feasible);
    CHECK(s.record.step == 600);
  }
}

TEST_CASE("selection preconditions") {
  SECTION("empty record list") {
    try {
      select_checkpoint({});
      FAIL("expected E_DATA");
    } catch (const Error& e) {
      CHECK(e.code == "E_DATA");
    }
  }
  SECTION("mixed artifact kinds") {
    std::vector<CheckpointRecord> r = {rec(0.1, 400, 12.0, 0.22, "lasttok_L-1"),
                                       rec(0.2, 600, 12.0, 0.22, "meanpool_L-1")};
    try {
      select_checkpoint(r);
      FAIL("expected E_DATA");
    } catch (const Error& e) {
      CHECK(e.code == "E_DATA");
    }
    REQUIRE_THROWS_AS(pareto_front(r), Error);
  }
  SECTION("negative budget") {
    SelectionPolicy p;
    p.epsilon = -0.1;
    REQUIRE_THROWS_AS(select_checkpoint(lasttok_records(), p), Error);
  }
  SECTION("non-linear attackers are rejected for selection") {
    SelectionPolicy p;
    p.attacker = "mlp";
    REQUIRE_THROWS_AS(select_checkpoint(lasttok_records(), p), Error);
  }
}

TEST_CASE("feasible selection is pareto-optimal among feasible records") {
  Rng rng(42);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<CheckpointRecord> records;
    int n = 2 + static_cast<int>(rng.next_below(10));
    for (int i = 0; i < n; ++i) {
      double lambda = 0.05 * static_cast<double>(rng.next_below(6));
      int64_t step = 200 * static_cast<int64_t>(1 + rng.next_below(6));
      double rl = 9.0 + static_cast<double>(rng.next_below(12)) * 0.5;
      double acc = 0.2 + static_cast<double>(rng.next_below(8)) * 0.01;
      records.push_back(rec(lambda, step, rl, acc));
    }
    Selection s = select_checkpoint(records);
    if (!s.feasible) continue;
    for (const auto& o : records) {
      if (governance_detail::dominates(o, s.record))
        CHECK(o.val_gap > 0.025);
    }
  }
}
