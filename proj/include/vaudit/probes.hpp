// probes.hpp -- post-hoc attackers on exported vectors and generated text:
// a multinomial linear probe (convex, full-batch GD with backtracking line
// search), a two-layer MLP probe with early stopping, and a TF-IDF 1-2 gram
// attacker over output text. Evaluation reports accuracy, per-class accuracy,
// and LeakageGap = |accuracy - 1/K|. All probe math runs in double.
#pragma once

#include <cctype>
#include <cmath>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "vaudit/autodiff.hpp"
#include "vaudit/optim.hpp"
#include "vaudit/tensor.hpp"

namespace vaudit {

struct ProbeReport {
  double accuracy = 0.0;
  double gap = 0.0;
  std::vector<double> per_class;
};

namespace probe_detail {

// softmax cross-entropy over double logits, row-wise
inline double ce_rows(const Tensor<double>& logits, const std::vector<int32_t>& y,
                      Tensor<double>* probs_out = nullptr) {
  int64_t n = logits.rows(), k = logits.cols();
  double total = 0.0;
  if (probs_out) *probs_out = Tensor<double>::zeros({n, k});
  for (int64_t i = 0; i < n; ++i) {
    const double* row = logits.row_ptr(i);
    double mx = row[0];
    for (int64_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (int64_t j = 0; j < k; ++j) z += std::exp(row[j] - mx);
    double lse = mx + std::log(z);
    total += lse - row[y[static_cast<size_t>(i)]];
    if (probs_out)
      for (int64_t j = 0; j < k; ++j)
        probs_out->at(i, j) = std::exp(row[j] - lse);
  }
  return total / static_cast<double>(n);
}

inline std::vector<int32_t> argmax_rows(const Tensor<double>& scores) {
  std::vector<int32_t> out;
  for (int64_t i = 0; i < scores.rows(); ++i) {
    const double* row = scores.row_ptr(i);
    int32_t best = 0;
    for (int64_t j = 1; j < scores.cols(); ++j)
      if (row[j] > row[best]) best = static_cast<int32_t>(j);
    out.push_back(best);
  }
  return out;
}

}  // namespace probe_detail

inline ProbeReport evaluate_scores(const Tensor<double>& scores,
                                   const std::vector<int32_t>& y, int64_t k) {
  if (scores.rows() == 0) fail("E_DATA", "empty evaluation set");
  if (scores.rows() != static_cast<int64_t>(y.size()))
    fail("E_DATA", "scores/labels length mismatch");
  auto pred = probe_detail::argmax_rows(scores);
  std::vector<int64_t> hit(static_cast<size_t>(k), 0), tot(static_cast<size_t>(k), 0);
  int64_t correct = 0;
  for (size_t i = 0; i < y.size(); ++i) {
    tot[static_cast<size_t>(y[i])]++;
    if (pred[i] == y[i]) {
      ++correct;
      hit[static_cast<size_t>(y[i])]++;
    }
  }
  ProbeReport r;
  r.accuracy = static_cast<double>(correct) / static_cast<double>(y.size());
  r.gap = std::abs(r.accuracy - 1.0 / static_cast<double>(k));
  for (int64_t c = 0; c < k; ++c)
    r.per_class.push_back(tot[c] ? static_cast<double>(hit[c]) / static_cast<double>(tot[c])
                                 : 0.0);
  return r;
}

// ------------------------------------------------------------- linear probe

struct LinearProbeSpec {
  double l2 = 1.0;
  double tol = 1e-3;  // gradient sup-norm stopping threshold
  int64_t max_epochs = 800;
  uint64_t seed = 0;
};

struct LinearProbe {
  Tensor<double> w;        // K x d
  std::vector<double> b;   // K
  int64_t k = 0;

  Tensor<double> scores(const Tensor<float>& x) const {
    int64_t n = x.rows(), d = x.cols();
    if (d != w.cols()) fail("E_DATA", "probe dimension mismatch");
    Tensor<double> s = Tensor<double>::zeros({n, k});
    for (int64_t i = 0; i < n; ++i) {
      const float* xi = x.row_ptr(i);
      for (int64_t c = 0; c < k; ++c) {
        double acc = b[static_cast<size_t>(c)];
        const double* wc = w.row_ptr(c);
        for (int64_t j = 0; j < d; ++j) acc += wc[j] * static_cast<double>(xi[j]);
        s.at(i, c) = acc;
      }
    }
    return s;
  }
};

// full-batch GD with Armijo backtracking on
// J = mean CE + (l2 / 2n) ||W||^2, bias unpenalized
inline LinearProbe fit_linear_probe(const Tensor<float>& x,
                                    const std::vector<int32_t>& y, int64_t k,
                                    const LinearProbeSpec& spec = {}) {
  int64_t n = x.rows(), d = x.cols();
  if (n < k) fail("E_DATA", "need at least one row per class");
  if (n != static_cast<int64_t>(y.size())) fail("E_DATA", "rows/labels mismatch");
  {
    std::vector<int64_t> cnt(static_cast<size_t>(k), 0);
    for (int32_t c : y) {
      if (c < 0 || c >= k) fail("E_DATA", "label out of range");
      cnt[static_cast<size_t>(c)]++;
    }
    for (int64_t c = 1; c < k; ++c)
      if (cnt[c] != cnt[0]) {
        std::cerr << "warning: linear probe fit on an unbalanced label set\n";
        break;
      }
  }

  Tensor<double> xd = Tensor<double>::zeros({n, d});
  for (int64_t i = 0; i < x.numel(); ++i) xd.data[i] = static_cast<double>(x.data[i]);

  LinearProbe p;
  p.k = k;
  p.w = Tensor<double>::zeros({k, d});
  p.b.assign(static_cast<size_t>(k), 0.0);
  Rng rng(derive_seed(spec.seed, 0x11eaull));
  for (auto& v : p.w.data) v = 0.01 * rng.next_normal();

  double dn = static_cast<double>(n);
  auto objective = [&](const Tensor<double>& w, const std::vector<double>& b,
                       Tensor<double>* probs) {
    Tensor<double> logits = Tensor<double>::zeros({n, k});
    gemm_acc<double>(false, true, n, k, d, xd.data.data(), w.data.data(), logits.data.data());
    for (int64_t i = 0; i < n; ++i)
      for (int64_t c = 0; c < k; ++c) logits.at(i, c) += b[static_cast<size_t>(c)];
    double j = probe_detail::ce_rows(logits, y, probs);
    double pen = 0.0;
    for (double v : w.data) pen += v * v;
    return j + spec.l2 / (2.0 * dn) * pen;
  };

  double step = 1.0;
  Tensor<double> probs;
  double jcur = objective(p.w, p.b, &probs);
  for (int64_t epoch = 0; epoch < spec.max_epochs; ++epoch) {
    // grad = (1/n) (P - Y)^T X + (l2/n) W ; grad_b = (1/n) colsum(P - Y)
    Tensor<double> delta = probs;
    for (int64_t i = 0; i < n; ++i) delta.at(i, y[static_cast<size_t>(i)]) -= 1.0;
    Tensor<double> gw = Tensor<double>::zeros({k, d});
    gemm_acc<double>(true, false, k, d, n, delta.data.data(), xd.data.data(), gw.data.data());
    std::vector<double> gb(static_cast<size_t>(k), 0.0);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t c = 0; c < k; ++c) gb[static_cast<size_t>(c)] += delta.at(i, c);
    double gmax = 0.0;
    for (int64_t i = 0; i < gw.numel(); ++i) {
      gw.data[i] = gw.data[i] / dn + spec.l2 / dn * p.w.data[i];
      gmax = std::max(gmax, std::abs(gw.data[i]));
    }
    for (auto& v : gb) {
      v /= dn;
      gmax = std::max(gmax, std::abs(v));
    }
    if (gmax <= spec.tol) break;

    double g2 = 0.0;
    for (double v : gw.data) g2 += v * v;
    for (double v : gb) g2 += v * v;
    step = std::min(step * 2.0, 1e4);
    Tensor<double> wt;
    std::vector<double> bt;
    double jnext = jcur;
    Tensor<double> pnext;
    while (true) {
      wt = p.w;
      bt = p.b;
      for (int64_t i = 0; i < wt.numel(); ++i) wt.data[i] -= step * gw.data[i];
      for (int64_t c = 0; c < k; ++c) bt[static_cast<size_t>(c)] -= step * gb[static_cast<size_t>(c)];
      jnext = objective(wt, bt, &pnext);
      if (jnext <= jcur - 1e-4 * step * g2 || step < 1e-12) break;
      step *= 0.5;
    }
    p.w = std::move(wt);
    p.b = std::move(bt);
    probs = std::move(pnext);
    jcur = jnext;
  }
  return p;
}

// ---------------------------------------------------------------- MLP probe

struct MlpProbeSpec {
  int64_t hidden = 128;
  double dropout = 0.3;
  double lr = 1e-3;
  double weight_decay = 0.01;
  int64_t batch = 128;
  int64_t max_epochs = 50;
  int64_t patience = 5;
  uint64_t seed = 0;
};

struct MlpProbe {
  Tensor<double> w1, w2;       // [h, d], [K, h]
  std::vector<double> b1, b2;  // h, K
  int64_t k = 0;
  int64_t epochs_run = 0;
  double best_val_accuracy = 0.0;

  Tensor<double> scores(const Tensor<float>& x) const {
    int64_t n = x.rows(), d = x.cols(), h = w1.rows();
    if (d != w1.cols()) fail("E_DATA", "probe dimension mismatch");
    Tensor<double> hid = Tensor<double>::zeros({n, h});
    for (int64_t i = 0; i < n; ++i) {
      const float* xi = x.row_ptr(i);
      for (int64_t j = 0; j < h; ++j) {
        double acc = b1[static_cast<size_t>(j)];
        const double* wr = w1.row_ptr(j);
        for (int64_t c = 0; c < d; ++c) acc += wr[c] * static_cast<double>(xi[c]);
        hid.at(i, j) = acc > 0.0 ? acc : 0.0;
      }
    }
    Tensor<double> s = Tensor<double>::zeros({n, k});
    gemm_acc<double>(false, true, n, k, h, hid.data.data(), w2.data.data(), s.data.data());
    for (int64_t i = 0; i < n; ++i)
      for (int64_t c = 0; c < k; ++c) s.at(i, c) += b2[static_cast<size_t>(c)];
    return s;
  }
};

inline MlpProbe fit_mlp_probe(const Tensor<float>& xtr, const std::vector<int32_t>& ytr,
                              const Tensor<float>& xval, const std::vector<int32_t>& yval,
                              int64_t k, const MlpProbeSpec& spec = {}) {
  if (xval.rows() == 0) fail("E_DATA", "validation set required for early stopping");
  int64_t n = xtr.rows(), d = xtr.cols(), h = spec.hidden;

  ParamStore<double> params;
  Rng init(derive_seed(spec.seed, 0x3317ull));
  Tensor<double> w1({h, d}), w2({k, h});
  for (auto& v : w1.data) v = init.next_normal() * std::sqrt(2.0 / static_cast<double>(d));
  for (auto& v : w2.data) v = init.next_normal() * std::sqrt(2.0 / static_cast<double>(h));
  params.add("w1", std::move(w1), true);
  params.add("b1", Tensor<double>::zeros({1, h}), true);
  params.add("w2", std::move(w2), true);
  params.add("b2", Tensor<double>::zeros({1, k}), true);

  typename AdamW<double>::Config oc;
  oc.lr = spec.lr;
  oc.weight_decay = spec.weight_decay;
  AdamW<double> opt(oc);

  auto snapshot = [&] {
    MlpProbe p;
    p.w1 = params.get("w1");
    p.w2 = params.get("w2");
    const auto& b1 = params.get("b1");
    const auto& b2 = params.get("b2");
    p.b1.assign(b1.data.begin(), b1.data.end());
    p.b2.assign(b2.data.begin(), b2.data.end());
    p.k = k;
    return p;
  };

  MlpProbe best = snapshot();
  double best_acc = -1.0;
  int64_t strikes = 0, epochs = 0;
  for (int64_t epoch = 1; epoch <= spec.max_epochs; ++epoch) {
    epochs = epoch;
    std::vector<int64_t> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Rng shuf(derive_seed(spec.seed, 0x0e9ull, static_cast<uint64_t>(epoch)));
    shuf.shuffle(order);
    for (int64_t at = 0; at < n; at += spec.batch) {
      int64_t bs = std::min(spec.batch, n - at);
      Tensor<double> xb = Tensor<double>::zeros({bs, d});
      std::vector<int32_t> yb;
      for (int64_t i = 0; i < bs; ++i) {
        const float* src = xtr.row_ptr(order[static_cast<size_t>(at + i)]);
        for (int64_t j = 0; j < d; ++j) xb.at(i, j) = static_cast<double>(src[j]);
        yb.push_back(ytr[static_cast<size_t>(order[static_cast<size_t>(at + i)])]);
      }
      Tape<double> t;
      std::map<std::string, Var> bound;
      for (const auto& e : params.entries) bound[e.name] = t.leaf(e.value, e.trainable);
      Var xin = t.constant(std::move(xb));
      Var hid = t.relu(t.add_rowbias(t.matmul(xin, bound.at("w1"), false, true),
                                     bound.at("b1")));
      Rng drop(derive_seed(spec.seed, 0xd209ull, static_cast<uint64_t>(epoch),
                           static_cast<uint64_t>(at)));
      hid = t.dropout(hid, spec.dropout, drop);
      Var logits = t.add_rowbias(t.matmul(hid, bound.at("w2"), false, true),
                                 bound.at("b2"));
      std::vector<uint8_t> wts(yb.size(), 1);
      Var loss = t.ce_mean(logits, yb, wts);
      t.backward(loss);
      GradMap<double> grads;
      for (const auto& name : params.trainable_names())
        grads[name] = t.grad(bound.at(name));
      opt.step(params, grads);
    }
    MlpProbe cur = snapshot();
    cur.k = k;
    double acc = evaluate_scores(cur.scores(xval), yval, k).accuracy;
    if (acc > best_acc) {
      best_acc = acc;
      best = std::move(cur);
      strikes = 0;
    } else if (++strikes >= spec.patience) {
      break;
    }
  }
  best.epochs_run = epochs;
  best.best_val_accuracy = best_acc;
  return best;
}

// ------------------------------------------------------------- macro AUROC

// mean over classes of one-vs-rest AUROC, ties at 1/2 (Mann-Whitney)
inline double macro_auroc(const Tensor<double>& scores, const std::vector<int32_t>& y,
                          int64_t k) {
  if (scores.rows() != static_cast<int64_t>(y.size()))
    fail("E_DATA", "scores/labels length mismatch");
  int64_t n = scores.rows();
  double total = 0.0;
  for (int64_t c = 0; c < k; ++c) {
    std::vector<std::pair<double, int>> v;
    int64_t pos = 0;
    for (int64_t i = 0; i < n; ++i) {
      bool is_pos = y[static_cast<size_t>(i)] == c;
      v.push_back({scores.at(i, c), is_pos ? 1 : 0});
      pos += is_pos;
    }
    int64_t neg = n - pos;
    if (pos == 0 || neg == 0)
      fail("E_DATA", "class " + std::to_string(c) + " missing from labels");
    std::sort(v.begin(), v.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    // average ranks across tie groups
    double rank_sum_pos = 0.0;
    size_t i = 0;
    while (i < v.size()) {
      size_t j = i;
      while (j < v.size() && v[j].first == v[i].first) ++j;
      double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based mean
      for (size_t t = i; t < j; ++t)
        if (v[t].second) rank_sum_pos += avg_rank;
      i = j;
    }
    double u = rank_sum_pos - 0.5 * static_cast<double>(pos) * static_cast<double>(pos + 1);
    total += u / (static_cast<double>(pos) * static_cast<double>(neg));
  }
  return total / static_cast<double>(k);
}

// ----------------------------------------------------------- macro F1 score

inline double macro_f1(const std::vector<int32_t>& pred,
                       const std::vector<int32_t>& y, int64_t k) {
  std::vector<int64_t> tp(static_cast<size_t>(k), 0), fp(static_cast<size_t>(k), 0),
      fn(static_cast<size_t>(k), 0);
  for (size_t i = 0; i < y.size(); ++i) {
    if (pred[i] == y[i]) {
      tp[static_cast<size_t>(y[i])]++;
    } else {
      fp[static_cast<size_t>(pred[i])]++;
      fn[static_cast<size_t>(y[i])]++;
    }
  }
  double total = 0.0;
  for (int64_t c = 0; c < k; ++c) {
    double p = tp[c] + fp[c] ? static_cast<double>(tp[c]) / static_cast<double>(tp[c] + fp[c]) : 0.0;
    double r = tp[c] + fn[c] ? static_cast<double>(tp[c]) / static_cast<double>(tp[c] + fn[c]) : 0.0;
    total += p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
  }
  return total / static_cast<double>(k);
}

// --------------------------------------------------------- TF-IDF attacker

// grid selection: best validation macro-F1, ties by accuracy, then first
inline size_t pick_grid_index(const std::vector<std::pair<double, double>>& f1_acc) {
  size_t best = 0;
  for (size_t i = 1; i < f1_acc.size(); ++i) {
    if (f1_acc[i].first > f1_acc[best].first ||
        (f1_acc[i].first == f1_acc[best].first &&
         f1_acc[i].second > f1_acc[best].second))
      best = i;
  }
  return best;
}

struct TextAttacker {
  std::map<std::string, int64_t> vocab;  // 1-2 gram -> feature id
  std::vector<double> idf;
  Tensor<double> w;  // K x V
  std::vector<double> b;
  int64_t k = 0;
  double chosen_c = 0.0;

  static std::vector<std::string> grams(const std::string& text) {
    std::vector<std::string> toks;
    std::string cur;
    for (char ch : text) {
      if (std::isspace(static_cast<unsigned char>(ch))) {
        if (!cur.empty()) toks.push_back(cur);
        cur.clear();
      } else {
        cur += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
      }
    }
    if (!cur.empty()) toks.push_back(cur);
    std::vector<std::string> out = toks;
    for (size_t i = 0; i + 1 < toks.size(); ++i)
      out.push_back(toks[i] + " " + toks[i + 1]);
    return out;
  }

  // tf-idf with smoothed idf, L2-normalized row
  std::vector<std::pair<int64_t, double>> featurize(const std::string& text) const {
    std::map<int64_t, double> tf;
    for (const auto& g : grams(text)) {
      auto it = vocab.find(g);
      if (it != vocab.end()) tf[it->second] += 1.0;
    }
    std::vector<std::pair<int64_t, double>> row(tf.begin(), tf.end());
    double norm = 0.0;
    for (auto& [id, v] : row) {
      v *= idf[static_cast<size_t>(id)];
      norm += v * v;
    }
    norm = std::sqrt(norm);
    if (norm > 0.0)
      for (auto& [id, v] : row) v /= norm;
    return row;
  }

  Tensor<double> scores(const std::vector<std::string>& texts) const {
    int64_t n = static_cast<int64_t>(texts.size());
    Tensor<double> s = Tensor<double>::zeros({n, k});
    for (int64_t i = 0; i < n; ++i) {
      auto row = featurize(texts[static_cast<size_t>(i)]);
      for (int64_t c = 0; c < k; ++c) {
        double acc = b[static_cast<size_t>(c)];
        const double* wc = w.row_ptr(c);
        for (const auto& [id, v] : row) acc += wc[id] * v;
        s.at(i, c) = acc;
      }
    }
    return s;
  }
};

namespace probe_detail {

// sparse multinomial LR, same objective as the dense probe
inline void fit_sparse_lr(const std::vector<std::vector<std::pair<int64_t, double>>>& rows,
                          const std::vector<int32_t>& y, int64_t k, int64_t dim,
                          double l2, Tensor<double>& w, std::vector<double>& b) {
  int64_t n = static_cast<int64_t>(rows.size());
  double dn = static_cast<double>(n);
  w = Tensor<double>::zeros({k, dim});
  b.assign(static_cast<size_t>(k), 0.0);

  auto logits_of = [&](const Tensor<double>& wm, const std::vector<double>& bm) {
    Tensor<double> logits = Tensor<double>::zeros({n, k});
    for (int64_t i = 0; i < n; ++i)
      for (int64_t c = 0; c < k; ++c) {
        double acc = bm[static_cast<size_t>(c)];
        const double* wc = wm.row_ptr(c);
        for (const auto& [id, v] : rows[static_cast<size_t>(i)]) acc += wc[id] * v;
        logits.at(i, c) = acc;
      }
    return logits;
  };
  auto objective = [&](const Tensor<double>& wm, const std::vector<double>& bm,
                       Tensor<double>* probs) {
    double j = ce_rows(logits_of(wm, bm), y, probs);
    double pen = 0.0;
    for (double v : wm.data) pen += v * v;
    return j + l2 / (2.0 * dn) * pen;
  };

  double step = 1.0;
  Tensor<double> probs;
  double jcur = objective(w, b, &probs);
  for (int64_t epoch = 0; epoch < 800; ++epoch) {
    Tensor<double> gw = Tensor<double>::zeros({k, dim});
    std::vector<double> gb(static_cast<size_t>(k), 0.0);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t c = 0; c < k; ++c) {
        double dlt = probs.at(i, c) - (y[static_cast<size_t>(i)] == c ? 1.0 : 0.0);
        gb[static_cast<size_t>(c)] += dlt;
        double* gc = gw.row_ptr(c);
        for (const auto& [id, v] : rows[static_cast<size_t>(i)]) gc[id] += dlt * v;
      }
    double gmax = 0.0;
    for (int64_t i = 0; i < gw.numel(); ++i) {
      gw.data[i] = gw.data[i] / dn + l2 / dn * w.data[i];
      gmax = std::max(gmax, std::abs(gw.data[i]));
    }
    for (auto& v : gb) {
      v /= dn;
      gmax = std::max(gmax, std::abs(v));
    }
    if (gmax <= 1e-3) break;
    double g2 = 0.0;
    for (double v : gw.data) g2 += v * v;
    for (double v : gb) g2 += v * v;
    step = std::min(step * 2.0, 1e4);
    while (true) {
      Tensor<double> wt = w;
      std::vector<double> bt = b;
      for (int64_t i = 0; i < wt.numel(); ++i) wt.data[i] -= step * gw.data[i];
      for (int64_t c = 0; c < k; ++c) bt[static_cast<size_t>(c)] -= step * gb[static_cast<size_t>(c)];
      Tensor<double> pnext;
      double jnext = objective(wt, bt, &pnext);
      if (jnext <= jcur - 1e-4 * step * g2 || step < 1e-12) {
        w = std::move(wt);
        b = std::move(bt);
        probs = std::move(pnext);
        jcur = jnext;
        break;
      }
      step *= 0.5;
    }
  }
}

}  // namespace probe_detail

inline TextAttacker fit_text_attacker(const std::vector<std::string>& texts_tr,
                                      const std::vector<int32_t>& y_tr,
                                      const std::vector<std::string>& texts_val,
                                      const std::vector<int32_t>& y_val, int64_t k,
                                      const std::vector<double>& c_grid = {0.01, 0.1, 1.0, 10.0, 100.0}) {
  if (texts_tr.empty()) fail("E_DATA", "no training texts");
  TextAttacker a;
  a.k = k;
  std::vector<std::vector<std::string>> all_grams;
  std::map<std::string, int64_t> df;
  for (const auto& t : texts_tr) {
    auto g = TextAttacker::grams(t);
    std::set<std::string> uniq(g.begin(), g.end());
    for (const auto& u : uniq) df[u]++;
    all_grams.push_back(std::move(g));
  }
  if (df.empty()) fail("E_DATA", "empty attacker vocabulary");
  double dn = static_cast<double>(texts_tr.size());
  for (const auto& [g, cnt] : df) {
    int64_t id = static_cast<int64_t>(a.vocab.size());
    a.vocab[g] = id;
    a.idf.push_back(std::log((1.0 + dn) / (1.0 + static_cast<double>(cnt))) + 1.0);
  }

  std::vector<std::vector<std::pair<int64_t, double>>> rows;
  for (const auto& t : texts_tr) rows.push_back(a.featurize(t));

  std::vector<std::pair<double, double>> f1_acc;
  std::vector<Tensor<double>> ws(c_grid.size());
  std::vector<std::vector<double>> bs(c_grid.size());
  for (size_t ci = 0; ci < c_grid.size(); ++ci) {
    double l2 = 1.0 / c_grid[ci];
    probe_detail::fit_sparse_lr(rows, y_tr, k, static_cast<int64_t>(a.vocab.size()),
                                l2, ws[ci], bs[ci]);
    a.w = ws[ci];
    a.b = bs[ci];
    auto sc = a.scores(texts_val);
    auto pred = probe_detail::argmax_rows(sc);
    double f1 = macro_f1(pred, y_val, k);
    double acc = evaluate_scores(sc, y_val, k).accuracy;
    f1_acc.push_back({f1, acc});
  }
  size_t best = pick_grid_index(f1_acc);
  a.w = std::move(ws[best]);
  a.b = std::move(bs[best]);
  a.chosen_c = c_grid[best];
  return a;
}

}  // namespace vaudit
