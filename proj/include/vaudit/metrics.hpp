// metrics.hpp -- utility and statistics: word-level ROUGE-1/2/L, the
// decomposed mention-rate scanner with its strict local-context filter for
// ambiguous color words, the paired example bootstrap for ROUGE, and the
// per-class stratified cluster bootstrap for probe accuracy. Replicate seeds
// are derived per replicate and reduced in replicate order, so the confidence
// intervals are deterministic for a fixed seed.
#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "vaudit/io.hpp"

namespace vaudit {

// -------------------------------------------------------------------- ROUGE

struct RougePrf {
  double p = 0.0, r = 0.0, f1 = 0.0;
};

struct RougeScore {
  RougePrf r1, r2, rl;
};

namespace metrics_detail {

inline std::vector<std::string> norm_words(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

inline RougePrf prf(double overlap, double hyp_n, double ref_n) {
  RougePrf s;
  s.p = hyp_n > 0.0 ? overlap / hyp_n : 0.0;
  s.r = ref_n > 0.0 ? overlap / ref_n : 0.0;
  s.f1 = s.p + s.r > 0.0 ? 2.0 * s.p * s.r / (s.p + s.r) : 0.0;
  return s;
}

// clipped n-gram overlap
inline RougePrf ngram_prf(const std::vector<std::string>& hyp,
                          const std::vector<std::string>& ref, size_t n) {
  auto grams = [&](const std::vector<std::string>& w) {
    std::map<std::string, int64_t> g;
    if (w.size() < n) return g;
    for (size_t i = 0; i + n <= w.size(); ++i) {
      std::string key = w[i];
      for (size_t j = 1; j < n; ++j) key += "\x1f" + w[i + j];
      g[key]++;
    }
    return g;
  };
  auto gh = grams(hyp), gr = grams(ref);
  int64_t overlap = 0, hn = 0, rn = 0;
  for (const auto& [k, c] : gh) {
    hn += c;
    auto it = gr.find(k);
    if (it != gr.end()) overlap += std::min(c, it->second);
  }
  for (const auto& [k, c] : gr) rn += c;
  return prf(static_cast<double>(overlap), static_cast<double>(hn),
             static_cast<double>(rn));
}

inline int64_t lcs_len(const std::vector<std::string>& a,
                       const std::vector<std::string>& b) {
  size_t n = a.size(), m = b.size();
  std::vector<int64_t> prev(m + 1, 0), cur(m + 1, 0);
  for (size_t i = 1; i <= n; ++i) {
    for (size_t j = 1; j <= m; ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1
                                    : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[m];
}

}  // namespace metrics_detail

inline RougeScore rouge(const std::string& hyp, const std::string& ref) {
  auto h = metrics_detail::norm_words(hyp);
  auto r = metrics_detail::norm_words(ref);
  RougeScore s;
  s.r1 = metrics_detail::ngram_prf(h, r, 1);
  s.r2 = metrics_detail::ngram_prf(h, r, 2);
  s.rl = metrics_detail::prf(static_cast<double>(metrics_detail::lcs_len(h, r)),
                             static_cast<double>(h.size()),
                             static_cast<double>(r.size()));
  return s;
}

// ------------------------------------------------------------- mention scan

struct MentionLexicon {
  std::set<std::string> meta;
  std::set<std::string> group;      // unambiguous identifiers
  std::set<std::string> ambiguous;  // color words needing the context filter
  std::set<std::string> identity_cues;
  std::set<std::string> color_cues;  // medical senses that veto a match
  int64_t window = 8;

  static MentionLexicon defaults() {
    MentionLexicon m;
    m.meta = {"race", "races", "racial", "ethnicity", "ethnicities",
              "ethnic", "demographics", "demographic"};
    m.group = {"hispanic", "hispanics", "asian", "asians", "latino", "latina",
               "latinx", "african", "caucasian", "caucasians"};
    m.ambiguous = {"black", "white"};
    m.identity_cues = {"race",  "ethnicity", "identifies", "identifying",
                       "identified", "male",  "female",    "man",
                       "woman", "men",       "women",      "gentleman",
                       "lady",  "descent",   "heritage",   "background",
                       "origin"};
    m.color_cues = {"stool",  "stools",   "emesis", "sputum", "blood",
                    "cell",   "cells",    "count",  "counts", "tarry",
                    "guaiac", "melena",   "matter", "coat",   "coated",
                    "coating", "drainage", "urine",  "discharge", "lesion",
                    "plaque", "plaques",  "patch",  "patches"};
    return m;
  }

  // flat key=value file with comma-separated lists
  static MentionLexicon from_config(const KvConfig& cfg) {
    MentionLexicon m;
    auto parse_list = [&](const std::string& key) {
      std::set<std::string> out;
      std::string raw = cfg.get_str(key);
      std::string cur;
      for (char c : raw + ",") {
        if (c == ',') {
          std::string w = trim(cur);
          if (!w.empty()) out.insert(w);
          cur.clear();
        } else {
          cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        }
      }
      return out;
    };
    m.meta = parse_list("meta_terms");
    m.group = parse_list("group_terms");
    m.ambiguous = parse_list("ambiguous_terms");
    m.identity_cues = parse_list("identity_cues");
    m.color_cues = parse_list("color_cues");
    m.window = cfg.get_int("context_window");
    return m;
  }
};

struct MentionFlags {
  bool group = false;
  bool meta = false;
};

namespace metrics_detail {

// alphanumeric word tokens, lowercased
inline std::vector<std::string> scan_words(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    if (std::isalnum(static_cast<unsigned char>(ch))) {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    } else if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace metrics_detail

// ambiguous color words count as group mentions only when an identity cue
// appears in the +-window and no medical-color cue does
inline MentionFlags mention_scan(const std::string& text,
                                 const MentionLexicon& lex = MentionLexicon::defaults()) {
  auto words = metrics_detail::scan_words(text);
  MentionFlags f;
  for (size_t i = 0; i < words.size(); ++i) {
    if (lex.meta.count(words[i])) f.meta = true;
    if (lex.group.count(words[i])) f.group = true;
    if (lex.ambiguous.count(words[i])) {
      size_t lo = i >= static_cast<size_t>(lex.window) ? i - static_cast<size_t>(lex.window) : 0;
      size_t hi = std::min(words.size(), i + static_cast<size_t>(lex.window) + 1);
      bool identity = false, color = false;
      for (size_t j = lo; j < hi; ++j) {
        if (j == i) continue;
        if (lex.identity_cues.count(words[j])) identity = true;
        if (lex.color_cues.count(words[j])) color = true;
      }
      if (identity && !color) f.group = true;
    }
  }
  return f;
}

struct MentionDecomposition {
  int64_t total = 0;
  int64_t group = 0;      // any group mention
  int64_t meta = 0;       // any meta mention
  int64_t meta_only = 0;
  int64_t group_only = 0;
  int64_t both = 0;
  int64_t neither = 0;
};

inline MentionDecomposition decompose_mentions(
    const std::vector<std::string>& texts,
    const MentionLexicon& lex = MentionLexicon::defaults()) {
  MentionDecomposition d;
  d.total = static_cast<int64_t>(texts.size());
  for (const auto& t : texts) {
    MentionFlags f = mention_scan(t, lex);
    d.group += f.group;
    d.meta += f.meta;
    if (f.group && f.meta) ++d.both;
    else if (f.group) ++d.group_only;
    else if (f.meta) ++d.meta_only;
    else ++d.neither;
  }
  return d;
}

// ---------------------------------------------------------------- bootstrap

struct BootstrapConfig {
  int64_t b = 10000;
  double lo_pct = 2.5, hi_pct = 97.5;
  uint64_t seed = 0;
  int64_t subjects_per_class = 500;
};

struct Ci {
  double mean = 0.0;
  double lo = 0.0, hi = 0.0;
};

namespace metrics_detail {

inline double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  if (v.size() == 1) return v[0];
  double pos = q / 100.0 * static_cast<double>(v.size() - 1);
  size_t i = static_cast<size_t>(pos);
  if (i + 1 >= v.size()) return v.back();
  double frac = pos - static_cast<double>(i);
  return v[i] + (v[i + 1] - v[i]) * frac;
}

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace metrics_detail

// percentile CI of the mean under example resampling
inline Ci bootstrap_mean_ci(const std::vector<double>& scores,
                            const BootstrapConfig& cfg) {
  if (scores.empty()) fail("E_DATA", "bootstrap over an empty sample");
  size_t n = scores.size();
  std::vector<double> means;
  means.reserve(static_cast<size_t>(cfg.b));
  for (int64_t rep = 0; rep < cfg.b; ++rep) {
    Rng rng(derive_seed(cfg.seed, 0xb001ull, static_cast<uint64_t>(rep)));
    double s = 0.0;
    for (size_t i = 0; i < n; ++i) s += scores[rng.next_below(n)];
    means.push_back(s / static_cast<double>(n));
  }
  Ci ci;
  ci.mean = metrics_detail::mean_of(scores);
  ci.lo = metrics_detail::percentile(means, cfg.lo_pct);
  ci.hi = metrics_detail::percentile(means, cfg.hi_pct);
  return ci;
}

struct PairedBootstrap {
  Ci a, b, diff;  // diff = a - b
  bool significant = false;
};

// same resampled indices for both systems per replicate
inline PairedBootstrap paired_bootstrap_rouge(const std::vector<double>& a,
                                              const std::vector<double>& b,
                                              const BootstrapConfig& cfg) {
  if (a.size() != b.size())
    fail("E_DATA", "paired bootstrap needs aligned per-example scores");
  if (a.empty()) fail("E_DATA", "bootstrap over an empty sample");
  size_t n = a.size();
  std::vector<double> ma, mb, md;
  for (int64_t rep = 0; rep < cfg.b; ++rep) {
    Rng rng(derive_seed(cfg.seed, 0xb001ull, static_cast<uint64_t>(rep)));
    double sa = 0.0, sb = 0.0;
    for (size_t i = 0; i < n; ++i) {
      size_t idx = rng.next_below(n);
      sa += a[idx];
      sb += b[idx];
    }
    ma.push_back(sa / static_cast<double>(n));
    mb.push_back(sb / static_cast<double>(n));
    md.push_back((sa - sb) / static_cast<double>(n));
  }
  PairedBootstrap out;
  out.a = {metrics_detail::mean_of(a), metrics_detail::percentile(ma, cfg.lo_pct),
           metrics_detail::percentile(ma, cfg.hi_pct)};
  out.b = {metrics_detail::mean_of(b), metrics_detail::percentile(mb, cfg.lo_pct),
           metrics_detail::percentile(mb, cfg.hi_pct)};
  out.diff = {out.a.mean - out.b.mean, metrics_detail::percentile(md, cfg.lo_pct),
              metrics_detail::percentile(md, cfg.hi_pct)};
  out.significant = out.diff.lo > 0.0 || out.diff.hi < 0.0;
  return out;
}

// ---------------------------------------------------- cluster bootstrap

namespace metrics_detail {

struct Strata {
  // per class: subject -> record indices
  std::vector<std::vector<std::vector<size_t>>> per_class;
};

inline Strata build_strata(const std::vector<int32_t>& labels,
                           const std::vector<uint64_t>& subject_ids, int64_t k) {
  Strata st;
  st.per_class.resize(static_cast<size_t>(k));
  std::map<std::pair<int32_t, uint64_t>, size_t> slot;
  for (size_t i = 0; i < labels.size(); ++i) {
    int32_t c = labels[i];
    if (c < 0 || c >= k) fail("E_DATA", "label out of range");
    auto key = std::make_pair(c, subject_ids[i]);
    auto it = slot.find(key);
    if (it == slot.end()) {
      slot[key] = st.per_class[static_cast<size_t>(c)].size();
      st.per_class[static_cast<size_t>(c)].push_back({i});
    } else {
      st.per_class[static_cast<size_t>(c)][it->second].push_back(i);
    }
  }
  for (int64_t c = 0; c < k; ++c)
    if (st.per_class[static_cast<size_t>(c)].empty())
      fail("E_DATA", "class " + std::to_string(c) + " has no subjects");
  return st;
}

}  // namespace metrics_detail

struct PairedClusterBootstrap {
  Ci a, b, diff;
  bool significant = false;
};

// per replicate and class: draw subjects_per_class subjects with replacement,
// then one record per drawn subject; the same draws feed both systems
inline PairedClusterBootstrap cluster_bootstrap_acc_paired(
    const std::vector<uint8_t>& correct_a, const std::vector<uint8_t>& correct_b,
    const std::vector<int32_t>& labels, const std::vector<uint64_t>& subject_ids,
    int64_t k, const BootstrapConfig& cfg) {
  size_t n = labels.size();
  if (correct_a.size() != n || correct_b.size() != n || subject_ids.size() != n)
    fail("E_DATA", "cluster bootstrap inputs misaligned");
  auto st = metrics_detail::build_strata(labels, subject_ids, k);

  double denom = static_cast<double>(k * cfg.subjects_per_class);
  std::vector<double> ma, mb, md;
  for (int64_t rep = 0; rep < cfg.b; ++rep) {
    Rng rng(derive_seed(cfg.seed, 0xc1b5ull, static_cast<uint64_t>(rep)));
    int64_t hits_a = 0, hits_b = 0;
    for (int64_t c = 0; c < k; ++c) {
      const auto& subjects = st.per_class[static_cast<size_t>(c)];
      for (int64_t s = 0; s < cfg.subjects_per_class; ++s) {
        const auto& recs = subjects[rng.next_below(subjects.size())];
        size_t idx = recs.size() == 1 ? recs[0] : recs[rng.next_below(recs.size())];
        hits_a += correct_a[idx];
        hits_b += correct_b[idx];
      }
    }
    ma.push_back(static_cast<double>(hits_a) / denom);
    mb.push_back(static_cast<double>(hits_b) / denom);
    md.push_back(static_cast<double>(hits_a - hits_b) / denom);
  }
  auto point = [&](const std::vector<uint8_t>& c) {
    double s = 0.0;
    for (uint8_t v : c) s += v;
    return s / static_cast<double>(n);
  };
  PairedClusterBootstrap out;
  out.a = {point(correct_a), metrics_detail::percentile(ma, cfg.lo_pct),
           metrics_detail::percentile(ma, cfg.hi_pct)};
  out.b = {point(correct_b), metrics_detail::percentile(mb, cfg.lo_pct),
           metrics_detail::percentile(mb, cfg.hi_pct)};
  out.diff = {out.a.mean - out.b.mean, metrics_detail::percentile(md, cfg.lo_pct),
              metrics_detail::percentile(md, cfg.hi_pct)};
  out.significant = out.diff.lo > 0.0 || out.diff.hi < 0.0;
  return out;
}

inline Ci cluster_bootstrap_acc(const std::vector<uint8_t>& correct,
                                const std::vector<int32_t>& labels,
                                const std::vector<uint64_t>& subject_ids, int64_t k,
                                const BootstrapConfig& cfg) {
  return cluster_bootstrap_acc_paired(correct, correct, labels, subject_ids, k, cfg).a;
}

}  // namespace vaudit
