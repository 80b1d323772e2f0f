// governance.hpp -- leakage-budget checkpoint selection over sweep records.
// The validation attacker is the linear probe only; the budget epsilon is
// applied to its validation gap, never to test metrics. When no checkpoint is
// feasible the minimum-gap record is returned flagged infeasible.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "vaudit/io.hpp"

namespace vaudit {

struct CheckpointRecord {
  std::string run_id;
  double lambda = 0.0;
  int64_t step = 0;
  double val_rouge_l = 0.0;  // 0-100 scale
  double val_lr_acc = 0.0;
  double val_gap = 0.0;      // |val_lr_acc - 1/K|
  std::string kind;
  std::string path;
};

struct SelectionPolicy {
  double epsilon = 0.025;
  std::string attacker = "lr";
};

struct Selection {
  CheckpointRecord record;
  bool feasible = false;
};

inline double leakage_gap(double acc, int64_t k) {
  return std::abs(acc - 1.0 / static_cast<double>(k));
}

namespace governance_detail {

inline void check_records(const std::vector<CheckpointRecord>& records) {
  if (records.empty()) fail("E_DATA", "no checkpoint records");
  for (const auto& r : records)
    if (r.kind != records.front().kind)
      fail("E_DATA", "mixed artifact kinds in one selection: " +
                         records.front().kind + " vs " + r.kind);
}

// ties: lower gap, then lower step, then lower lambda
inline bool better_feasible(const CheckpointRecord& a, const CheckpointRecord& b) {
  if (a.val_rouge_l != b.val_rouge_l) return a.val_rouge_l > b.val_rouge_l;
  if (a.val_gap != b.val_gap) return a.val_gap < b.val_gap;
  if (a.step != b.step) return a.step < b.step;
  return a.lambda < b.lambda;
}

// ties: higher rouge, then lower step, then lower lambda
inline bool better_fallback(const CheckpointRecord& a, const CheckpointRecord& b) {
  if (a.val_gap != b.val_gap) return a.val_gap < b.val_gap;
  if (a.val_rouge_l != b.val_rouge_l) return a.val_rouge_l > b.val_rouge_l;
  if (a.step != b.step) return a.step < b.step;
  return a.lambda < b.lambda;
}

inline bool dominates(const CheckpointRecord& a, const CheckpointRecord& b) {
  return a.val_gap <= b.val_gap && a.val_rouge_l >= b.val_rouge_l &&
         (a.val_gap < b.val_gap || a.val_rouge_l > b.val_rouge_l);
}

}  // namespace governance_detail

inline Selection select_checkpoint(const std::vector<CheckpointRecord>& records,
                                   const SelectionPolicy& policy = {}) {
  governance_detail::check_records(records);
  if (policy.epsilon < 0.0) fail("E_CONFIG", "negative leakage budget");
  if (policy.attacker != "lr")
    fail("E_CONFIG", "selection attacker must be the linear probe");

  const CheckpointRecord* best = nullptr;
  for (const auto& r : records) {
    if (r.val_gap > policy.epsilon) continue;
    if (!best || governance_detail::better_feasible(r, *best)) best = &r;
  }
  if (best) return {*best, true};
  for (const auto& r : records)
    if (!best || governance_detail::better_fallback(r, *best)) best = &r;
  return {*best, false};
}

// records not dominated by any other (lower gap, higher rouge), returned
// sorted by ascending gap then descending rouge
inline std::vector<CheckpointRecord> pareto_front(
    const std::vector<CheckpointRecord>& records) {
  governance_detail::check_records(records);
  std::vector<CheckpointRecord> front;
  for (const auto& r : records) {
    bool dominated = false;
    for (const auto& o : records)
      if (governance_detail::dominates(o, r)) { dominated = true; break; }
    if (!dominated) front.push_back(r);
  }
  std::sort(front.begin(), front.end(),
            [](const CheckpointRecord& a, const CheckpointRecord& b) {
              if (a.val_gap != b.val_gap) return a.val_gap < b.val_gap;
              if (a.val_rouge_l != b.val_rouge_l) return a.val_rouge_l > b.val_rouge_l;
              if (a.step != b.step) return a.step < b.step;
              return a.lambda < b.lambda;
            });
  return front;
}

}  // namespace vaudit
