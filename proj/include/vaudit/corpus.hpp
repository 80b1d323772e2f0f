// corpus.hpp -- synthetic note corpus with planted label cues, attribute
// normalization, subject-level splits, and balanced subsets. Contexts are
// short clinical-style notes; each carries a per-class cue token count drawn
// Poisson(dispersion) with presence probability equal to the cue strength.
// Cue tokens are scattered at interior positions, never the final token, so
// last-token leakage is only reachable through attention.
#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "vaudit/io.hpp"

namespace vaudit {

struct Record {
  uint64_t subject_id = 0;
  uint64_t note_id = 0;
  int32_t label = -1;
  std::string raw_attribute;
  std::string context;
  std::string target;
};

constexpr int kMaxClasses = 8;

// ------------------------------------------------------------ generator data

namespace corpus_detail {

struct Theme {
  const char* adj;
  std::array<const char*, 5> sym;
  std::array<const char*, 5> find;
  std::array<const char*, 5> med;
};

inline const std::array<Theme, 5>& themes() {
  static const std::array<Theme, 5> t = {{
      {"cardiac",
       {"palpitations", "dyspnea", "orthopnea", "edema", "presyncope"},
       {"troponin", "ischemia", "murmur", "stenosis", "cardiomegaly"},
       {"metoprolol", "furosemide", "aspirin", "atorvastatin", "heparin"}},
      {"renal",
       {"oliguria", "dysuria", "hematuria", "nocturia", "flank"},
       {"creatinine", "proteinuria", "hydronephrosis", "azotemia", "casts"},
       {"lisinopril", "tamsulosin", "sevelamer", "epoetin", "bicarbonate"}},
      {"pulmonary",
       {"cough", "wheezing", "sputum", "hypoxia", "tachypnea"},
       {"infiltrate", "effusion", "consolidation", "nodule", "atelectasis"},
       {"albuterol", "prednisone", "azithromycin", "oxygen", "ipratropium"}},
      {"neurologic",
       {"headache", "dizziness", "weakness", "numbness", "tremor"},
       {"lesion", "aphasia", "ataxia", "neuropathy", "hyperreflexia"},
       {"levetiracetam", "gabapentin", "sumatriptan", "donepezil", "baclofen"}},
      {"digestive",
       {"nausea", "vomiting", "cramping", "bloating", "anorexia"},
       {"gastritis", "polyp", "varices", "obstruction", "colitis"},
       {"omeprazole", "ondansetron", "mesalamine", "lactulose", "rifaximin"}},
  }};
  return t;
}

// label-specific cue tokens: invented facility names, one set per class
inline const std::array<std::array<const char*, 3>, kMaxClasses>& cue_words() {
  static const std::array<std::array<const char*, 3>, kMaxClasses> c = {{
      {"greenfield", "stclair", "harborview"},
      {"eastbrook", "villanova", "crestwood"},
      {"mercado", "solana", "riverview"},
      {"lakeshore", "pinecrest", "meadowbrook"},
      {"fairhaven", "oakridge", "summitview"},
      {"northgate", "palmetto", "ironwood"},
      {"brookside", "santafe", "kingsport"},
      {"westfall", "duneland", "baycrest"},
  }};
  return c;
}

inline const std::vector<std::string>& glue_words() {
  static const std::vector<std::string> g = {
      "patient", "reports",  "for",      "days",    "exam",     "notable",
      "on",      "evaluation", "started", "with",   "partial",  "relief",
      "history", "includes", "and",      "prior",   "denies",   "fever",
      "but",     "endorses", "imaging",  "shows",   "without",  "change",
      "continues", "at",     "home",     "followup", "planned", "after",
      "titration", "two",    "three",    "four",    "five",     "six",
      "managed", "course",   "stable",   "a",       "of",       "the",
      "summarize", "case",   "note",     "into",    "brief",    "summary",
      "remain",  "neutral",  "avoid",    "demographic", "cues", "transferred",
      "from",    "clinic",   "seen",     "in"};
  return g;
}

}  // namespace corpus_detail

// every word the generator and default instructions can emit
inline std::vector<std::string> corpus_wordlist() {
  std::vector<std::string> out;
  std::set<std::string> seen;
  auto put = [&](const std::string& w) {
    if (seen.insert(w).second) out.push_back(w);
  };
  for (const auto& w : corpus_detail::glue_words()) put(w);
  for (const auto& th : corpus_detail::themes()) {
    put(th.adj);
    for (auto* w : th.sym) put(w);
    for (auto* w : th.find) put(w);
    for (auto* w : th.med) put(w);
  }
  for (const auto& cls : corpus_detail::cue_words())
    for (auto* w : cls) put(w);
  return out;
}

// ----------------------------------------------------------- normalization

// canonical label ids for the clinical 5-class attribute scheme
enum : int32_t {
  LABEL_WHITE = 0,
  LABEL_BLACK = 1,
  LABEL_HISPANIC = 2,
  LABEL_ASIAN = 3,
  LABEL_OTHER = 4,
  LABEL_DROPPED = -1,
};

// first-match family precedence, then the drop list, then Other
inline int32_t normalize_attribute(const std::string& raw) {
  std::string u;
  u.reserve(raw.size());
  for (char c : raw) u += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  auto has = [&](const char* s) { return u.find(s) != std::string::npos; };
  if (has("WHITE") || has("CAUCASIAN") || has("PORTUGUESE")) return LABEL_WHITE;
  if (has("BLACK") || has("AFRICAN")) return LABEL_BLACK;
  if (has("HISPANIC") || has("LATINO")) return LABEL_HISPANIC;
  if (has("ASIAN")) return LABEL_ASIAN;
  if (u.empty() || has("UNKNOWN") || has("UNABLE") || has("DECLINED") || has("NOT SPECIFIED"))
    return LABEL_DROPPED;
  return LABEL_OTHER;
}

inline std::string label_name(int64_t k_classes, int32_t label) {
  static const char* clinical[5] = {"White", "Black", "Hispanic", "Asian", "Other"};
  if (k_classes == 5 && label >= 0 && label < 5) return clinical[label];
  return "class" + std::to_string(label);
}

// --------------------------------------------------------------- generation

struct SynthConfig {
  int64_t k_classes = 5;
  int64_t n_subjects = 500;
  int64_t notes_per_subject = 4;
  double cue_strength = 1.0;    // probability a note carries cues at all
  double cue_dispersion = 8.0;  // Poisson mean of the per-note cue count
  double drop_frac = 0.02;      // unnormalizable attribute rows (k=5 only)
  int64_t ctx_sentences_min = 3;
  int64_t ctx_sentences_max = 5;
  uint64_t seed = 1;

  void check() const {
    if (k_classes < 2 || k_classes > kMaxClasses)
      fail("E_CONFIG", "k_classes must be in [2, 8]");
    if (cue_strength < 0.0 || cue_strength > 1.0)
      fail("E_CONFIG", "cue_strength must be in [0, 1]");
    if (n_subjects < k_classes) fail("E_CONFIG", "need at least one subject per class");
    if (ctx_sentences_min < 3 || ctx_sentences_max < ctx_sentences_min)
      fail("E_CONFIG", "context needs at least three sentences");
  }
};

struct SynthStats {
  int64_t n_records = 0;
  int64_t n_dropped = 0;
};

inline std::vector<Record> synth_corpus(const SynthConfig& cfg,
                                        SynthStats* stats = nullptr) {
  cfg.check();
  using namespace corpus_detail;
  static const char* drop_pool[3] = {"UNKNOWN", "UNABLE TO OBTAIN",
                                     "PATIENT DECLINED TO ANSWER"};
  static const std::array<std::vector<const char*>, 5> raw_pools = {{
      {"WHITE", "WHITE - RUSSIAN", "WHITE - BRAZILIAN", "PORTUGUESE",
       "WHITE - OTHER EUROPEAN"},
      {"BLACK/AFRICAN AMERICAN", "BLACK/CAPE VERDEAN", "BLACK", "AFRICAN AMERICAN"},
      {"HISPANIC/LATINO - PUERTO RICAN", "HISPANIC OR LATINO",
       "HISPANIC/LATINO - DOMINICAN"},
      {"ASIAN", "ASIAN - CHINESE", "ASIAN - SOUTH EAST ASIAN"},
      {"OTHER", "AMERICAN INDIAN/ALASKA NATIVE", "NATIVE HAWAIIAN",
       "MULTIPLE RACE/ETHNICITY"},
  }};

  Rng rng(derive_seed(cfg.seed, 0xc0c905ull));
  std::vector<Record> out;
  SynthStats st;
  uint64_t note_counter = 1;

  // subject labels: evenly divided, order shuffled
  std::vector<int32_t> subject_label(static_cast<size_t>(cfg.n_subjects));
  for (int64_t s = 0; s < cfg.n_subjects; ++s)
    subject_label[s] = static_cast<int32_t>(s % cfg.k_classes);
  rng.shuffle(subject_label);

  for (int64_t s = 0; s < cfg.n_subjects; ++s) {
    uint64_t subject_id = static_cast<uint64_t>(s + 1);
    int32_t label = subject_label[s];
    for (int64_t nn = 0; nn < cfg.notes_per_subject; ++nn) {
      const Theme& th = themes()[rng.next_below(themes().size())];
      const char* sym = th.sym[rng.next_below(5)];
      const char* find = th.find[rng.next_below(5)];
      const char* med = th.med[rng.next_below(5)];
      static const char* nums[5] = {"two", "three", "four", "five", "six"};
      const char* num = nums[rng.next_below(5)];

      std::vector<std::string> toks;
      auto say = [&](std::initializer_list<const char*> ws) {
        for (auto* w : ws) toks.push_back(w);
      };
      say({"patient", "reports", sym, "for", num, "days"});
      say({"exam", "notable", "for", find, "on", "evaluation"});
      say({"started", "on", med, "with", "partial", "relief"});
      int64_t extra = cfg.ctx_sentences_min - 3 +
                      static_cast<int64_t>(rng.next_below(
                          static_cast<uint64_t>(cfg.ctx_sentences_max - cfg.ctx_sentences_min + 1)));
      for (int64_t e = 0; e < extra; ++e) {
        switch (rng.next_below(4)) {
          case 0: say({"denies", "fever", "but", "endorses", th.sym[rng.next_below(5)]}); break;
          case 1: say({"imaging", "shows", th.find[rng.next_below(5)], "without", "change"}); break;
          case 2: say({"continues", th.med[rng.next_below(5)], "at", "home"}); break;
          default: say({"followup", "planned", "after", th.med[rng.next_below(5)], "titration"}); break;
        }
      }

      // plant cues at interior positions
      if (cfg.cue_strength > 0.0 && rng.next_f64() < cfg.cue_strength) {
        int n_cues = rng.next_poisson(cfg.cue_dispersion);
        for (int c = 0; c < n_cues; ++c) {
          const char* cue = cue_words()[label][rng.next_below(3)];
          size_t pos = rng.next_below(toks.size() - 1);  // never the final slot
          toks.insert(toks.begin() + static_cast<int64_t>(pos), cue);
        }
      }

      Record r;
      r.subject_id = subject_id;
      r.note_id = note_counter++;
      r.label = label;
      bool dropped = false;
      if (cfg.k_classes == 5) {
        if (rng.next_f64() < cfg.drop_frac) {
          r.raw_attribute = drop_pool[rng.next_below(3)];
          dropped = true;
        } else {
          const auto& pool = raw_pools[label];
          r.raw_attribute = pool[rng.next_below(pool.size())];
        }
      } else {
        r.raw_attribute = "class" + std::to_string(label);
      }
      std::string ctx;
      for (size_t i = 0; i < toks.size(); ++i) {
        if (i) ctx += ' ';
        ctx += toks[i];
      }
      r.context = std::move(ctx);
      r.target = std::string("patient with ") + sym + " and " + find +
                 " managed on " + med;
      if (cfg.k_classes == 5) {
        int32_t norm = normalize_attribute(r.raw_attribute);
        if (norm == LABEL_DROPPED) {
          ++st.n_dropped;
          continue;
        }
        if (!dropped && norm != label)
          fail("E_STATE", "raw attribute pool inconsistent with label");
        r.label = norm;
      }
      out.push_back(std::move(r));
    }
  }
  st.n_records = static_cast<int64_t>(out.size());
  if (stats) *stats = st;
  return out;
}

// -------------------------------------------------------------------- splits

struct Splits {
  std::vector<Record> train, val, test;
};

// subject-level: a subject's records land in exactly one split
inline Splits split_by_subject(const std::vector<Record>& records, double test_frac,
                               double val_frac, uint64_t seed) {
  std::set<uint64_t> ids;
  for (const auto& r : records) ids.insert(r.subject_id);
  std::vector<uint64_t> order(ids.begin(), ids.end());
  Rng rng(derive_seed(seed, 0x591a7ull));
  rng.shuffle(order);
  size_t n = order.size();
  size_t n_test = static_cast<size_t>(test_frac * static_cast<double>(n));
  size_t n_val = static_cast<size_t>(val_frac * static_cast<double>(n - n_test));
  std::map<uint64_t, int> where;
  for (size_t i = 0; i < n; ++i)
    where[order[i]] = i < n_test ? 2 : (i < n_test + n_val ? 1 : 0);
  Splits s;
  for (const auto& r : records) {
    switch (where[r.subject_id]) {
      case 2: s.test.push_back(r); break;
      case 1: s.val.push_back(r); break;
      default: s.train.push_back(r); break;
    }
  }
  return s;
}

// per-class sample without replacement, then shuffled together
inline std::vector<Record> make_balanced(const std::vector<Record>& records,
                                         int64_t per_class, int64_t k_classes,
                                         uint64_t seed) {
  Rng rng(derive_seed(seed, 0xba1a2ceull));
  std::vector<Record> out;
  for (int32_t c = 0; c < k_classes; ++c) {
    std::vector<size_t> idx;
    for (size_t i = 0; i < records.size(); ++i)
      if (records[i].label == c) idx.push_back(i);
    if (static_cast<int64_t>(idx.size()) < per_class)
      fail("E_DATA", "class " + std::to_string(c) + " has " +
                         std::to_string(idx.size()) + " records, need " +
                         std::to_string(per_class));
    rng.shuffle(idx);
    for (int64_t i = 0; i < per_class; ++i) out.push_back(records[idx[i]]);
  }
  rng.shuffle(out);
  return out;
}

// ----------------------------------------------------------------------- tsv

namespace corpus_detail {
inline std::string escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    if (c == '\\') o += "\\\\";
    else if (c == '\t') o += "\\t";
    else if (c == '\n') o += "\\n";
    else if (c == '\r') o += "\\r";
    else o += c;
  }
  return o;
}
inline std::string unescape(const std::string& s) {
  std::string o;
  for (size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\' || i + 1 == s.size()) {
      o += s[i];
      continue;
    }
    char n = s[++i];
    o += n == 't' ? '\t' : n == 'n' ? '\n' : n == 'r' ? '\r' : n;
  }
  return o;
}
}  // namespace corpus_detail

inline void write_corpus_tsv(const std::string& path, const std::vector<Record>& rs) {
  std::string body = "subject_id\tnote_id\tlabel\traw_attribute\tcontext\ttarget\n";
  for (const auto& r : rs) {
    body += std::to_string(r.subject_id) + "\t" + std::to_string(r.note_id) + "\t" +
            std::to_string(r.label) + "\t" + corpus_detail::escape(r.raw_attribute) +
            "\t" + corpus_detail::escape(r.context) + "\t" +
            corpus_detail::escape(r.target) + "\n";
  }
  write_text_file(path, body);
}

inline std::vector<Record> read_corpus_tsv(const std::string& path) {
  std::string body = read_text_file(path);
  std::vector<Record> out;
  size_t pos = 0;
  bool header = true;
  while (pos < body.size()) {
    size_t nl = body.find('\n', pos);
    if (nl == std::string::npos) nl = body.size();
    std::string line = body.substr(pos, nl - pos);
    pos = nl + 1;
    if (header) {
      header = false;
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> cols;
    size_t p = 0;
    while (cols.size() < 5) {
      size_t tab = line.find('\t', p);
      if (tab == std::string::npos) fail("E_DATA", "malformed corpus row in " + path);
      cols.push_back(line.substr(p, tab - p));
      p = tab + 1;
    }
    cols.push_back(line.substr(p));
    Record r;
    r.subject_id = std::stoull(cols[0]);
    r.note_id = std::stoull(cols[1]);
    r.label = static_cast<int32_t>(std::stol(cols[2]));
    r.raw_attribute = corpus_detail::unescape(cols[3]);
    r.context = corpus_detail::unescape(cols[4]);
    r.target = corpus_detail::unescape(cols[5]);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace vaudit
