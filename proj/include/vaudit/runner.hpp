// runner.hpp -- run-directory pipeline shared by the command-line tool and
// the acceptance harness. A run directory is created by corpus generation and
// then accumulates checkpoints, vector dumps, manifests, and reports; every
// file it contains traces back to the single config.cfg at its root via the
// canonical config hash.
#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "vaudit/artifacts.hpp"
#include "vaudit/corpus.hpp"
#include "vaudit/governance.hpp"
#include "vaudit/io.hpp"
#include "vaudit/metrics.hpp"
#include "vaudit/model.hpp"
#include "vaudit/probes.hpp"
#include "vaudit/sanitize.hpp"
#include "vaudit/surfacelora.hpp"
#include "vaudit/vocab.hpp"

namespace vaudit {

using train_detail::fmt_g;

// ------------------------------------------------------------- small parsers

inline ArtifactKind parse_kind(const std::string& s) {
  for (const auto& k : all_artifact_kinds())
    if (k.str() == s) return k;
  fail("E_CONFIG", "unknown artifact kind: " + s);
  return {};
}

inline std::vector<double> parse_lambda_list(const std::string& s) {
  std::vector<double> out;
  size_t at = 0;
  while (at <= s.size()) {
    size_t comma = s.find(',', at);
    std::string piece = trim(s.substr(at, comma == std::string::npos
                                              ? std::string::npos
                                              : comma - at));
    if (piece.empty()) fail("E_CONFIG", "empty entry in lambda list");
    char* end = nullptr;
    double v = std::strtod(piece.c_str(), &end);
    if (end != piece.c_str() + piece.size() || v < 0.0)
      fail("E_CONFIG", "bad lambda value: " + piece);
    out.push_back(v);
    if (comma == std::string::npos) break;
    at = comma + 1;
  }
  if (out.empty()) fail("E_CONFIG", "lambda list is empty");
  return out;
}

// ------------------------------------------------------------ pipeline config

// one flat file drives the whole pipeline; every key is required so a file
// always reads the same no matter which tool version wrote it
struct PipelineConfig {
  KvConfig raw;

  SynthConfig synth;
  double test_frac = 0.0, val_frac = 0.0;
  int64_t bal_train_per_class = 0, bal_eval_per_class = 0;

  int64_t d_model = 0, n_layers = 0, n_heads = 0, d_ffn = 0, max_pos = 0;
  int64_t lora_r = 0;
  double lora_alpha = 0.0, lora_dropout = 0.0;
  int64_t max_prompt = 0, max_total = 0;
  uint64_t backbone_seed = 0;

  int64_t steps = 0, batch = 0, accum = 0, eval_every = 0;
  double lr = 0.0, xcov_beta = 0.0;
  ArtifactKind target;
  std::string disc;
  int64_t disc_hidden = 0;
  uint64_t train_seed = 0;
  int64_t eval_rouge_n = 0, eval_max_new = 0;
  std::vector<double> lambdas;

  double epsilon = 0.0;
  std::string attacker;
  int64_t bootstrap_b = 0, report_rouge_n = 0;
  uint64_t audit_seed = 0;
  std::string instruction_base, instruction_neutral;

  static const std::vector<std::string>& keys() {
    static const std::vector<std::string> k = {
        "schema_version",
        "k_classes", "n_subjects", "notes_per_subject", "cue_strength",
        "cue_dispersion", "drop_frac", "ctx_sentences_min", "ctx_sentences_max",
        "corpus_seed", "test_frac", "val_frac", "bal_train_per_class",
        "bal_eval_per_class",
        "d_model", "n_layers", "n_heads", "d_ffn", "max_pos", "lora_r",
        "lora_alpha", "lora_dropout", "max_prompt", "max_total", "backbone_seed",
        "steps", "lr", "batch", "accum", "eval_every", "target", "disc",
        "disc_hidden", "xcov_beta", "train_seed", "eval_rouge_n", "eval_max_new",
        "lambdas",
        "epsilon", "attacker", "bootstrap_b", "report_rouge_n", "audit_seed",
        "instruction_base", "instruction_neutral",
    };
    return k;
  }

  static PipelineConfig parse(const KvConfig& c) {
    c.validate(keys());
    PipelineConfig p;
    p.raw = c;
    auto f64 = [&](const char* k) {
      (void)c.get_str(k);
      return c.get_f64(k, 0.0);
    };

    p.synth.k_classes = c.get_int("k_classes");
    p.synth.n_subjects = c.get_int("n_subjects");
    p.synth.notes_per_subject = c.get_int("notes_per_subject");
    p.synth.cue_strength = f64("cue_strength");
    p.synth.cue_dispersion = f64("cue_dispersion");
    p.synth.drop_frac = f64("drop_frac");
    p.synth.ctx_sentences_min = c.get_int("ctx_sentences_min");
    p.synth.ctx_sentences_max = c.get_int("ctx_sentences_max");
    p.synth.seed = static_cast<uint64_t>(c.get_int("corpus_seed"));
    p.test_frac = f64("test_frac");
    p.val_frac = f64("val_frac");
    p.bal_train_per_class = c.get_int("bal_train_per_class");
    p.bal_eval_per_class = c.get_int("bal_eval_per_class");
    if (p.test_frac <= 0.0 || p.val_frac <= 0.0 || p.test_frac + p.val_frac >= 1.0)
      fail("E_CONFIG", "split fractions must be positive and sum below one");
    if (p.bal_train_per_class <= 0 || p.bal_eval_per_class <= 0)
      fail("E_CONFIG", "balanced subset sizes must be positive");

    p.d_model = c.get_int("d_model");
    p.n_layers = c.get_int("n_layers");
    p.n_heads = c.get_int("n_heads");
    p.d_ffn = c.get_int("d_ffn");
    p.max_pos = c.get_int("max_pos");
    p.lora_r = c.get_int("lora_r");
    p.lora_alpha = f64("lora_alpha");
    p.lora_dropout = f64("lora_dropout");
    p.max_prompt = c.get_int("max_prompt");
    p.max_total = c.get_int("max_total");
    p.backbone_seed = static_cast<uint64_t>(c.get_int("backbone_seed"));

    p.steps = c.get_int("steps");
    p.lr = f64("lr");
    p.batch = c.get_int("batch");
    p.accum = c.get_int("accum");
    p.eval_every = c.get_int("eval_every");
    p.target = parse_kind(c.get_str("target"));
    p.disc = c.get_str("disc");
    p.disc_hidden = c.get_int("disc_hidden");
    p.xcov_beta = f64("xcov_beta");
    p.train_seed = static_cast<uint64_t>(c.get_int("train_seed"));
    p.eval_rouge_n = c.get_int("eval_rouge_n");
    p.eval_max_new = c.get_int("eval_max_new");
    p.lambdas = parse_lambda_list(c.get_str("lambdas"));

    p.epsilon = f64("epsilon");
    p.attacker = c.get_str("attacker");
    p.bootstrap_b = c.get_int("bootstrap_b");
    p.report_rouge_n = c.get_int("report_rouge_n");
    p.audit_seed = static_cast<uint64_t>(c.get_int("audit_seed"));
    p.instruction_base = c.get_str("instruction_base");
    p.instruction_neutral = c.get_str("instruction_neutral");
    if (p.bootstrap_b <= 0 || p.report_rouge_n <= 0)
      fail("E_CONFIG", "bootstrap_b and report_rouge_n must be positive");

    p.synth.check();
    p.model_config(1).check();
    p.train_config(0.0).check();
    SelectionPolicy sp{p.epsilon, p.attacker};
    if (sp.epsilon < 0.0) fail("E_CONFIG", "epsilon must be nonnegative");
    if (sp.attacker != "lr") fail("E_CONFIG", "attacker must be lr");
    return p;
  }

  static PipelineConfig load(const std::string& path) {
    return parse(KvConfig::load(path));
  }

  ModelConfig model_config(int32_t vocab_size) const {
    ModelConfig m;
    m.vocab_size = vocab_size;
    m.d_model = d_model;
    m.n_layers = n_layers;
    m.n_heads = n_heads;
    m.d_ffn = d_ffn;
    m.max_pos = max_pos;
    m.lora_r = lora_r;
    m.lora_alpha = lora_alpha;
    m.lora_dropout = lora_dropout;
    m.max_prompt = max_prompt;
    m.max_total = max_total;
    return m;
  }

  TrainConfig train_config(double lambda) const {
    TrainConfig t;
    t.lambda = lambda;
    t.steps = steps;
    t.lr = lr;
    t.batch = batch;
    t.accum = accum;
    t.eval_every = eval_every;
    t.target = target;
    t.disc = disc;
    t.disc_hidden = disc_hidden;
    t.xcov_beta = xcov_beta;
    t.seed = train_seed;
    t.eval_rouge_n = eval_rouge_n;
    t.eval_max_new = eval_max_new;
    return t;
  }

  std::string hash() const { return raw.hash(); }
};

// --------------------------------------------------------------- run layout

struct RunPaths {
  std::string root;

  std::string config() const { return root + "/config.cfg"; }
  std::string corpus() const { return root + "/corpus"; }
  std::string checkpoints() const { return root + "/checkpoints"; }
  std::string vectors() const { return root + "/vectors"; }
  std::string manifests() const { return root + "/manifests"; }
  std::string reports() const { return root + "/reports"; }
  std::string frozen() const { return checkpoints() + "/frozen.vlra"; }
  std::string run_dir_of(double lambda) const {
    return checkpoints() + "/lambda_" + fmt_g(lambda);
  }
  std::string manifest_of(double lambda) const {
    return manifests() + "/lambda_" + fmt_g(lambda) + ".jsonl";
  }
  std::string sweep_manifest() const { return manifests() + "/sweep.jsonl"; }

  // manifest rows hold run-relative paths so a run directory can be moved
  std::string relativize(const std::string& path) const {
    std::string prefix = root + "/";
    if (path.rfind(prefix, 0) == 0) return path.substr(prefix.size());
    return path;
  }
  std::string resolve(const std::string& stored) const {
    if (std::filesystem::exists(stored)) return stored;
    std::string joined = root + "/" + stored;
    if (std::filesystem::exists(joined)) return joined;
    fail("E_STATE", "missing checkpoint: " + stored);
    return {};
  }
};

inline RunPaths init_run_dir(const std::string& root) {
  RunPaths rp{root};
  ensure_dir(rp.corpus());
  ensure_dir(rp.checkpoints());
  ensure_dir(rp.vectors());
  ensure_dir(rp.manifests());
  ensure_dir(rp.reports());
  return rp;
}

inline PipelineConfig load_run_config(const RunPaths& rp) {
  if (!std::filesystem::exists(rp.config()))
    fail("E_STATE", rp.root + ": no config.cfg; run gen-corpus first");
  return PipelineConfig::load(rp.config());
}

// ------------------------------------------------------------------- corpus

struct CorpusBundle {
  Splits splits;
  std::vector<Record> bal_train, bal_val, test_balanced;
};

inline CorpusBundle build_corpus(const PipelineConfig& pc, SynthStats* stats = nullptr) {
  std::vector<Record> all = synth_corpus(pc.synth, stats);
  CorpusBundle b;
  b.splits = split_by_subject(all, pc.test_frac, pc.val_frac,
                              derive_seed(pc.synth.seed, 0x5b17ull));
  b.bal_train = make_balanced(b.splits.train, pc.bal_train_per_class,
                              pc.synth.k_classes, derive_seed(pc.synth.seed, 0xba10ull));
  b.bal_val = make_balanced(b.splits.val, pc.bal_eval_per_class,
                            pc.synth.k_classes, derive_seed(pc.synth.seed, 0xba11ull));
  b.test_balanced = make_balanced(b.splits.test, pc.bal_eval_per_class,
                                  pc.synth.k_classes, derive_seed(pc.synth.seed, 0xba12ull));
  return b;
}

namespace run_detail {

inline const std::vector<std::pair<const char*, std::vector<Record> CorpusBundle::*>>&
split_members() {
  static const std::vector<std::pair<const char*, std::vector<Record> CorpusBundle::*>>
      m = {{"bal_train", &CorpusBundle::bal_train},
           {"bal_val", &CorpusBundle::bal_val},
           {"test_balanced", &CorpusBundle::test_balanced}};
  return m;
}

inline std::vector<int64_t> class_counts(const std::vector<Record>& rs, int64_t k) {
  std::vector<int64_t> c(static_cast<size_t>(k), 0);
  for (const auto& r : rs)
    if (r.label >= 0 && r.label < k) ++c[static_cast<size_t>(r.label)];
  return c;
}

}  // namespace run_detail

inline std::string split_report_text(const PipelineConfig& pc, const CorpusBundle& b) {
  int64_t k = pc.synth.k_classes;
  std::string out = "corpus splits (config " + pc.hash() + ")\n";
  auto row = [&](const char* name, const std::vector<Record>& rs) {
    std::set<uint64_t> subj;
    for (const auto& r : rs) subj.insert(r.subject_id);
    out += name;
    out += ": " + std::to_string(rs.size()) + " records, " +
           std::to_string(subj.size()) + " subjects, per class [";
    auto c = run_detail::class_counts(rs, k);
    for (int64_t j = 0; j < k; ++j)
      out += (j ? " " : "") + std::to_string(c[static_cast<size_t>(j)]);
    out += "]\n";
  };
  row("train", b.splits.train);
  row("val", b.splits.val);
  row("test", b.splits.test);
  row("bal_train", b.bal_train);
  row("bal_val", b.bal_val);
  row("test_balanced", b.test_balanced);
  return out;
}

inline void write_corpus_dir(const RunPaths& rp, const PipelineConfig& pc,
                             const CorpusBundle& b) {
  write_corpus_tsv(rp.corpus() + "/train.tsv", b.splits.train);
  write_corpus_tsv(rp.corpus() + "/val.tsv", b.splits.val);
  write_corpus_tsv(rp.corpus() + "/test.tsv", b.splits.test);
  for (const auto& [name, member] : run_detail::split_members())
    write_corpus_tsv(rp.corpus() + "/" + name + ".tsv", b.*member);
  write_text_file(rp.corpus() + "/splits.txt", split_report_text(pc, b));
}

inline CorpusBundle load_corpus_dir(const RunPaths& rp) {
  if (!std::filesystem::exists(rp.corpus() + "/train.tsv"))
    fail("E_STATE", rp.root + ": no corpus; run gen-corpus first");
  CorpusBundle b;
  b.splits.train = read_corpus_tsv(rp.corpus() + "/train.tsv");
  b.splits.val = read_corpus_tsv(rp.corpus() + "/val.tsv");
  b.splits.test = read_corpus_tsv(rp.corpus() + "/test.tsv");
  for (const auto& [name, member] : run_detail::split_members())
    b.*member = read_corpus_tsv(rp.corpus() + "/" + name + ".tsv");
  return b;
}

inline const std::vector<Record>& pick_split(const CorpusBundle& b, const std::string& name) {
  if (name == "train") return b.splits.train;
  if (name == "val") return b.splits.val;
  if (name == "test") return b.splits.test;
  for (const auto& [n, member] : run_detail::split_members())
    if (name == n) return b.*member;
  fail("E_USAGE", "unknown split: " + name);
  return b.splits.train;
}

// ------------------------------------------------------------- model plumbing

inline Vocab corpus_vocab() { return Vocab(corpus_wordlist()); }

inline ParamStore<float> ensure_frozen(const PipelineConfig& pc, const RunPaths& rp,
                                       const Vocab& vocab) {
  if (std::filesystem::exists(rp.frozen()))
    return load_frozen_checkpoint(rp.frozen());
  ModelConfig mc = pc.model_config(vocab.size());
  ParamStore<float> frozen = init_backbone<float>(mc, pc.backbone_seed);
  ensure_dir(rp.checkpoints());
  save_frozen_checkpoint(rp.frozen(), frozen, pc.hash());
  return frozen;
}

// adapter values only; optimizer moments are skipped and the config echo is
// checked so a dump from a different config cannot be probed by accident
inline ParamStore<float> load_adapter_values(const std::string& path,
                                             const std::string& expect_hash) {
  VlraArrays v = read_vlra(path);
  if (v.role != "adapter") fail("E_STATE", path + ": expected an adapter checkpoint");
  if (!expect_hash.empty() && !v.config_echo.empty() && v.config_echo != expect_hash)
    fail("E_STATE", path + ": checkpoint was written under a different config");
  ParamStore<float> ps;
  for (auto& [name, ten] : v.arrays)
    if (name.rfind("m@", 0) != 0 && name.rfind("v@", 0) != 0)
      ps.add(name, std::move(ten), false);
  return ps;
}

inline TrainEnv make_env(const PipelineConfig& pc, const CorpusBundle& b,
                         const Vocab& vocab) {
  TrainEnv env;
  env.vocab = &vocab;
  env.instruction = pc.instruction_base;
  env.train_records = &b.splits.train;
  env.bal_train = &b.bal_train;
  env.bal_val = &b.bal_val;
  env.val_records = &b.splits.val;
  return env;
}

// ----------------------------------------------------------------- training

inline int64_t latest_checkpoint_step(const std::string& dir) {
  if (!std::filesystem::exists(dir)) return 0;
  int64_t best = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    std::string name = e.path().filename().string();
    long long step = 0;
    if (std::sscanf(name.c_str(), "step_%lld.vlra", &step) == 1)
      best = std::max<int64_t>(best, step);
  }
  return best;
}

inline std::string step_file(const std::string& dir, int64_t step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "/step_%06lld.vlra", static_cast<long long>(step));
  return dir + buf;
}

struct TrainOutcome {
  std::vector<CheckpointRecord> records;
  int64_t resumed_from = 0;
};

// one lambda: resumes from the newest on-disk step, appends run-relative
// manifest rows, leaves checkpoints under checkpoints/lambda_<l>/
inline TrainOutcome run_training(const PipelineConfig& pc, const RunPaths& rp,
                                 const CorpusBundle& bundle, const Vocab& vocab,
                                 const ParamStore<float>& frozen, double lambda) {
  ModelConfig mc = pc.model_config(vocab.size());
  TrainConfig tc = pc.train_config(lambda);
  TrainState<float> st = init_train(mc, tc, frozen, pc.synth.k_classes);

  std::string dir = rp.run_dir_of(lambda);
  TrainOutcome out;
  out.resumed_from = latest_checkpoint_step(dir);
  if (out.resumed_from > tc.steps)
    fail("E_STATE", dir + ": on-disk step exceeds configured steps");
  if (out.resumed_from > 0)
    load_train_checkpoint(st, step_file(dir, out.resumed_from));

  TrainEnv env = make_env(pc, bundle, vocab);
  train_run(st, env, dir, &out.records, nullptr, pc.hash());

  ensure_dir(rp.manifests());
  std::ofstream ms(rp.manifest_of(lambda), std::ios::app);
  if (!ms) fail("E_IO", "cannot append manifest for lambda " + fmt_g(lambda));
  for (auto& r : out.records) {
    r.path = rp.relativize(r.path);
    ms << manifest_line(r) << "\n";
  }
  return out;
}

inline std::vector<CheckpointRecord> read_manifest_file(const std::string& path) {
  std::string body = read_text_file(path);
  std::vector<CheckpointRecord> out;
  size_t at = 0;
  int64_t lineno = 0;
  while (at < body.size()) {
    size_t nl = body.find('\n', at);
    std::string line = body.substr(at, nl == std::string::npos ? std::string::npos
                                                               : nl - at);
    at = nl == std::string::npos ? body.size() : nl + 1;
    ++lineno;
    if (trim(line).empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object())
      fail("E_DATA", path + ":" + std::to_string(lineno) + ": bad manifest line");
    CheckpointRecord r;
    try {
      r.run_id = j.at("run_id").get<std::string>();
      r.lambda = j.at("lambda").get<double>();
      r.step = j.at("step").get<int64_t>();
      r.val_rouge_l = j.at("val_rouge_l").get<double>();
      r.val_lr_acc = j.at("val_lr_acc").get<double>();
      r.val_gap = j.at("val_gap").get<double>();
      r.kind = j.at("kind").get<std::string>();
      r.path = j.at("path").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      fail("E_DATA", path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    out.push_back(std::move(r));
  }
  return out;
}

// sweep.jsonl when present, otherwise every per-lambda manifest in name order
inline std::vector<CheckpointRecord> read_run_manifests(const RunPaths& rp) {
  if (std::filesystem::exists(rp.sweep_manifest()))
    return read_manifest_file(rp.sweep_manifest());
  std::vector<std::string> files;
  if (std::filesystem::exists(rp.manifests()))
    for (const auto& e : std::filesystem::directory_iterator(rp.manifests()))
      if (e.path().extension() == ".jsonl") files.push_back(e.path().string());
  std::sort(files.begin(), files.end());
  std::vector<CheckpointRecord> out;
  for (const auto& f : files)
    for (auto& r : read_manifest_file(f)) out.push_back(std::move(r));
  if (out.empty()) fail("E_DATA", "no manifest found in " + rp.root);
  return out;
}

inline std::vector<CheckpointRecord> run_cli_sweep(const PipelineConfig& pc,
                                                   const RunPaths& rp,
                                                   const CorpusBundle& bundle,
                                                   const Vocab& vocab,
                                                   const ParamStore<float>& frozen,
                                                   const std::vector<double>& lambdas) {
  for (double l : lambdas) run_training(pc, rp, bundle, vocab, frozen, l);
  std::vector<CheckpointRecord> all;
  for (double l : lambdas)
    for (auto& r : read_manifest_file(rp.manifest_of(l))) all.push_back(std::move(r));
  std::string body;
  for (const auto& r : all) body += manifest_line(r) + "\n";
  write_text_file(rp.sweep_manifest(), body);
  return all;
}

// --------------------------------------------------------------- extraction

namespace run_detail {

inline std::string jesc(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out;
}

}  // namespace run_detail

// the artifact kinds a model of this depth can produce
inline std::vector<ArtifactKind> kinds_for_depth(int64_t n_layers) {
  std::vector<ArtifactKind> out;
  for (const auto& k : all_artifact_kinds()) {
    if (k.layer == LayerSpec::second_last && n_layers < 2) continue;
    if (k.layer == LayerSpec::last4_mean && n_layers < 4) continue;
    out.push_back(k);
  }
  return out;
}

// every requested artifact kind from one forward pass per batch
inline std::vector<ArtifactSet> extract_all_kinds(const ModelConfig& cfg,
                                                  const ParamStore<float>& frozen,
                                                  const ParamStore<float>* adapters,
                                                  const Vocab& vocab,
                                                  const std::string& instruction,
                                                  const std::vector<Record>& records,
                                                  int64_t batch_size = 8) {
  if (records.empty()) fail("E_DATA", "no records to extract from");
  const std::vector<ArtifactKind> kinds = kinds_for_depth(cfg.n_layers);
  std::vector<ArtifactSet> out(kinds.size());
  for (size_t s = 0; s < kinds.size(); ++s) {
    out[s].kind = kinds[s].str();
    out[s].d = cfg.d_model;
    out[s].x = Tensor<float>::zeros({static_cast<int64_t>(records.size()), cfg.d_model});
  }
  int64_t row = 0;
  for (size_t at = 0; at < records.size(); at += static_cast<size_t>(batch_size)) {
    size_t hi = std::min(records.size(), at + static_cast<size_t>(batch_size));
    std::vector<std::vector<int32_t>> rows;
    for (size_t i = at; i < hi; ++i)
      rows.push_back(render_prompt(vocab, instruction, records[i].context, true,
                                   cfg.max_prompt));
    Batch b = make_batch(rows);
    Tape<float> t;
    BoundParams<float> fr = bind_params(t, frozen);
    BoundParams<float> ad;
    if (adapters) ad = bind_params(t, *adapters);
    ForwardOut<float> fwd = forward_model<float>(t, cfg, fr, adapters ? &ad : nullptr, b);
    for (size_t s = 0; s < kinds.size(); ++s) {
      Var z = artifact_on_tape(t, fwd, b, kinds[s]);
      const Tensor<float>& zv = t.val(z);
      for (int64_t r = 0; r < b.B; ++r)
        for (int64_t j = 0; j < cfg.d_model; ++j) out[s].x.at(row + r, j) = zv.at(r, j);
    }
    row += b.B;
    for (size_t i = at; i < hi; ++i) {
      if (records[i].label < 0) fail("E_DATA", "record with negative label");
      for (auto& set : out) {
        set.labels.push_back(static_cast<uint32_t>(records[i].label));
        set.subject_ids.push_back(records[i].subject_id);
      }
    }
  }
  return out;
}

inline void write_vaud_with_meta(const std::string& path, const ArtifactSet& a,
                                 const std::string& config_hash,
                                 const std::string& source, const std::string& split,
                                 const std::string& instruction_tag) {
  write_vaud(path, a);
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "{\"config_hash\":\"%s\",\"kind\":\"%s\",\"split\":\"%s\","
                "\"instruction\":\"%s\",\"source\":\"%s\",\"n\":%lld,\"d\":%lld}\n",
                config_hash.c_str(), run_detail::jesc(a.kind).c_str(),
                run_detail::jesc(split).c_str(), instruction_tag.c_str(),
                run_detail::jesc(source).c_str(), static_cast<long long>(a.n()),
                static_cast<long long>(a.d));
  write_text_file(path + ".meta.json", buf);
}

inline void check_vaud_meta(const std::string& vaud_path, const std::string& config_hash) {
  std::string meta = vaud_path + ".meta.json";
  if (!std::filesystem::exists(meta)) return;
  nlohmann::json j = nlohmann::json::parse(read_text_file(meta), nullptr, false);
  if (j.is_discarded() || !j.is_object()) fail("E_DATA", meta + ": bad sidecar");
  if (j.contains("config_hash") && j["config_hash"].get<std::string>() != config_hash)
    fail("E_STATE", vaud_path + ": dump was written under a different config");
}

// ------------------------------------------------------------------ probing

struct ProbeOutcome {
  std::string probe;
  double accuracy = 0.0;
  double gap = 0.0;
  Ci ci;
  int64_t n = 0;
};

namespace run_detail {

inline std::vector<int32_t> labels_i32(const ArtifactSet& a) {
  std::vector<int32_t> y;
  y.reserve(a.labels.size());
  for (uint32_t v : a.labels) y.push_back(static_cast<int32_t>(v));
  return y;
}

inline int64_t min_subjects_per_class(const ArtifactSet& a, int64_t k) {
  std::vector<std::set<uint64_t>> subj(static_cast<size_t>(k));
  for (size_t i = 0; i < a.labels.size(); ++i)
    subj[a.labels[i]].insert(a.subject_ids[i]);
  int64_t m = std::numeric_limits<int64_t>::max();
  for (const auto& s : subj) m = std::min<int64_t>(m, static_cast<int64_t>(s.size()));
  return m;
}

}  // namespace run_detail

// fit on one dump, early-stop (mlp) on a second, score a third; the interval
// is a cluster bootstrap over subjects of the eval dump
inline ProbeOutcome probe_vectors(const ArtifactSet& fit, const ArtifactSet& stop,
                                  const ArtifactSet& eval_set, const std::string& probe,
                                  int64_t k, uint64_t seed, int64_t bootstrap_b) {
  if (fit.kind != eval_set.kind || fit.kind != stop.kind)
    fail("E_DATA", "probe dumps mix artifact kinds");
  if (fit.d != eval_set.d || fit.d != stop.d)
    fail("E_DATA", "probe dumps mix dimensions");
  std::vector<int32_t> ytr = run_detail::labels_i32(fit);
  std::vector<int32_t> yst = run_detail::labels_i32(stop);
  std::vector<int32_t> yev = run_detail::labels_i32(eval_set);

  Tensor<double> scores;
  if (probe == "lr") {
    LinearProbeSpec spec;
    spec.seed = seed;
    scores = fit_linear_probe(fit.x, ytr, k, spec).scores(eval_set.x);
  } else if (probe == "mlp") {
    MlpProbeSpec spec;
    spec.seed = seed;
    scores = fit_mlp_probe(fit.x, ytr, stop.x, yst, k, spec).scores(eval_set.x);
  } else {
    fail("E_CONFIG", "probe must be lr or mlp");
  }

  ProbeOutcome out;
  out.probe = probe;
  out.n = eval_set.n();
  ProbeReport rep = evaluate_scores(scores, yev, k);
  out.accuracy = rep.accuracy;
  out.gap = rep.gap;

  std::vector<int32_t> pred = probe_detail::argmax_rows(scores);
  std::vector<uint8_t> correct(yev.size(), 0);
  for (size_t i = 0; i < yev.size(); ++i) correct[i] = pred[i] == yev[i] ? 1 : 0;
  BootstrapConfig bc;
  bc.b = bootstrap_b;
  bc.seed = derive_seed(seed, 0xc120ull);
  bc.subjects_per_class = run_detail::min_subjects_per_class(eval_set, k);
  out.ci = cluster_bootstrap_acc(correct, yev, eval_set.subject_ids, k, bc);
  return out;
}

// --------------------------------------------------------------- sanitizing

struct SanitizeOutcome {
  LinearSanitizer sanitizer;
  std::vector<InlpIter> log;
};

inline SanitizeOutcome fit_sanitizer(const std::string& method, const ArtifactSet& fit,
                                     const ArtifactSet& stop, int64_t k_classes,
                                     int64_t k_remove, uint64_t seed) {
  std::vector<int32_t> ytr = run_detail::labels_i32(fit);
  SanitizeOutcome out;
  if (method == "inlp") {
    InlpResult res = fit_inlp(fit.x, ytr, stop.x, run_detail::labels_i32(stop),
                              k_classes, 20, 0.003, seed);
    out.sanitizer = std::move(res.sanitizer);
    out.log = std::move(res.log);
  } else if (method == "oneshot") {
    LinearProbeSpec spec;
    spec.seed = seed;
    out.sanitizer = fit_oneshot_removal(fit.x, ytr, k_classes, spec);
  } else if (method == "pca") {
    if (k_remove <= 0) fail("E_CONFIG", "pca needs a matched removal rank");
    out.sanitizer = fit_pca_removal(fit.x, k_remove);
  } else if (method == "random") {
    if (k_remove <= 0) fail("E_CONFIG", "random needs a matched removal rank");
    out.sanitizer = fit_random_removal(fit.d, k_remove, derive_seed(seed, 0x5a9dull));
  } else {
    fail("E_CONFIG", "sanitizer method must be inlp, oneshot, pca, or random");
  }
  return out;
}

inline std::string sanitize_log_text(const std::string& method,
                                     const SanitizeOutcome& out) {
  std::string s = "method " + method + ", removed k=" + std::to_string(out.sanitizer.k) + "\n";
  for (const auto& it : out.log) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "iter %lld: removed %lld, k_total %lld, val_gap %.6f\n",
                  static_cast<long long>(it.iter), static_cast<long long>(it.removed),
                  static_cast<long long>(it.k_total), it.val_gap);
    s += buf;
  }
  return s;
}

// ---------------------------------------------------------------- selection

inline std::string selection_json(const SelectionPolicy& policy, const Selection& sel,
                                  const std::vector<CheckpointRecord>& front) {
  auto rec = [&](const CheckpointRecord& r) {
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "{\"run_id\":\"%s\",\"lambda\":%.17g,\"step\":%lld,"
                  "\"val_rouge_l\":%.17g,\"val_lr_acc\":%.17g,\"val_gap\":%.17g,"
                  "\"kind\":\"%s\",\"path\":\"%s\"}",
                  run_detail::jesc(r.run_id).c_str(), r.lambda,
                  static_cast<long long>(r.step), r.val_rouge_l, r.val_lr_acc,
                  r.val_gap, run_detail::jesc(r.kind).c_str(),
                  run_detail::jesc(r.path).c_str());
    return std::string(buf);
  };
  char head[160];
  std::snprintf(head, sizeof head, "{\"epsilon\":%.17g,\"attacker\":\"%s\",\"feasible\":%s,",
                policy.epsilon, policy.attacker.c_str(),
                sel.feasible ? "true" : "false");
  std::string s = head;
  s += "\"selected\":" + rec(sel.record) + ",\"pareto\":[";
  for (size_t i = 0; i < front.size(); ++i) s += (i ? "," : "") + rec(front[i]);
  s += "]}\n";
  return s;
}

// ------------------------------------------------------------------- report

namespace run_detail {

inline std::string md_table(const std::vector<std::string>& head,
                            const std::vector<std::vector<std::string>>& rows) {
  std::vector<size_t> w(head.size());
  for (size_t j = 0; j < head.size(); ++j) w[j] = head[j].size();
  for (const auto& r : rows)
    for (size_t j = 0; j < r.size(); ++j) w[j] = std::max(w[j], r[j].size());
  auto line = [&](const std::vector<std::string>& r) {
    std::string s = "|";
    for (size_t j = 0; j < w.size(); ++j) {
      std::string cell = j < r.size() ? r[j] : "";
      s += " " + cell + std::string(w[j] - cell.size(), ' ') + " |";
    }
    return s + "\n";
  };
  std::string s = line(head);
  s += "|";
  for (size_t j = 0; j < w.size(); ++j) s += std::string(w[j] + 2, '-') + "|";
  s += "\n";
  for (const auto& r : rows) s += line(r);
  return s;
}

inline std::string fmt_f(double v, int prec) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

inline std::string fmt_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string acc_ci_cell(const ProbeOutcome& p) {
  return fmt_f(p.accuracy, 3) + " [" + fmt_f(p.ci.lo, 3) + ", " + fmt_f(p.ci.hi, 3) + "]";
}

}  // namespace run_detail

struct ReportRow {
  std::string name;
  const ParamStore<float>* adapters = nullptr;
  std::string instruction;
  RougePrf rouge_mean;
  double r1 = 0.0, r2 = 0.0;
  std::vector<double> rl_samples;
  Ci rl_ci;
  ProbeOutcome lr, mlp;
  MentionDecomposition mentions;
};

// the run's final artifact: selection replay, paired test evaluation of the
// base model, the neutral-prompt baseline, the lambda=0 checkpoint, and the
// selected checkpoint, an all-kinds attacker grid, and mention counts
inline void generate_report(const PipelineConfig& pc, const RunPaths& rp) {
  std::vector<CheckpointRecord> records = read_run_manifests(rp);
  ensure_dir(rp.reports());

  std::string curve = "lambda,step,val_gap,val_rouge_l\n";
  {
    std::vector<CheckpointRecord> ordered = records;
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const CheckpointRecord& a, const CheckpointRecord& b) {
                       if (a.lambda != b.lambda) return a.lambda < b.lambda;
                       return a.step < b.step;
                     });
    for (const auto& r : ordered)
      curve += fmt_g(r.lambda) + "," + std::to_string(r.step) + "," +
               run_detail::fmt_g17(r.val_gap) + "," +
               run_detail::fmt_g17(r.val_rouge_l) + "\n";
  }
  write_text_file(rp.reports() + "/curve.csv", curve);

  SelectionPolicy policy{pc.epsilon, pc.attacker};
  Selection sel = select_checkpoint(records, policy);
  std::vector<CheckpointRecord> front = pareto_front(records);
  write_text_file(rp.reports() + "/selection.json", selection_json(policy, sel, front));

  CorpusBundle bundle = load_corpus_dir(rp);
  Vocab vocab = corpus_vocab();
  if (!std::filesystem::exists(rp.frozen()))
    fail("E_STATE", rp.root + ": no frozen checkpoint");
  ParamStore<float> frozen = load_frozen_checkpoint(rp.frozen());
  ModelConfig mc = pc.model_config(vocab.size());
  int64_t k = pc.synth.k_classes;

  const CheckpointRecord* base_rec = nullptr;
  for (const auto& r : records)
    if (r.lambda == 0.0 &&
        (!base_rec || r.val_rouge_l > base_rec->val_rouge_l ||
         (r.val_rouge_l == base_rec->val_rouge_l && r.step < base_rec->step)))
      base_rec = &r;

  ParamStore<float> sel_adapters =
      load_adapter_values(rp.resolve(sel.record.path), pc.hash());
  ParamStore<float> lam0_adapters;
  if (base_rec)
    lam0_adapters = load_adapter_values(rp.resolve(base_rec->path), pc.hash());

  std::vector<ReportRow> rows;
  rows.push_back({"base", nullptr, pc.instruction_base});
  rows.push_back({"base + neutral prompt", nullptr, pc.instruction_neutral});
  if (base_rec)
    rows.push_back({"lora lambda=0 step " + std::to_string(base_rec->step),
                    &lam0_adapters, pc.instruction_base});
  rows.push_back({"selected lambda=" + fmt_g(sel.record.lambda) + " step " +
                      std::to_string(sel.record.step),
                  &sel_adapters, pc.instruction_base});

  const std::vector<Record>& test = bundle.splits.test;
  std::vector<size_t> order(test.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng shuffler(derive_seed(pc.audit_seed, 0xe0a2ull));
  shuffler.shuffle(order);
  size_t n_rouge = std::min<size_t>(order.size(), static_cast<size_t>(pc.report_rouge_n));
  order.resize(n_rouge);

  for (size_t ri = 0; ri < rows.size(); ++ri) {
    ReportRow& row = rows[ri];

    std::vector<std::vector<int32_t>> prompts;
    prompts.reserve(n_rouge);
    for (size_t i : order)
      prompts.push_back(render_prompt(vocab, row.instruction, test[i].context, true,
                                      mc.max_prompt));
    auto gen = greedy_decode<float>(mc, frozen, row.adapters, prompts, pc.eval_max_new);
    double r1 = 0.0, r2 = 0.0;
    std::vector<std::string> texts;
    for (size_t i = 0; i < gen.size(); ++i) {
      std::string hyp = vocab.decode(gen[i]);
      texts.push_back(hyp);
      RougeScore sc = rouge(hyp, test[order[i]].target);
      r1 += sc.r1.f1;
      r2 += sc.r2.f1;
      row.rl_samples.push_back(sc.rl.f1);
    }
    row.r1 = r1 / static_cast<double>(n_rouge);
    row.r2 = r2 / static_cast<double>(n_rouge);
    BootstrapConfig bc;
    bc.b = pc.bootstrap_b;
    bc.seed = derive_seed(pc.audit_seed, 0xb0caull, ri);
    row.rl_ci = bootstrap_mean_ci(row.rl_samples, bc);

    MentionLexicon lex = MentionLexicon::defaults();
    row.mentions = decompose_mentions(texts, lex);

    auto sets = [&](const std::vector<Record>& recs) {
      return extract_dataset(mc, frozen, row.adapters, vocab, row.instruction, recs,
                             pc.target);
    };
    ArtifactSet fit = sets(bundle.bal_train);
    ArtifactSet stop = sets(bundle.bal_val);
    ArtifactSet eval_set = sets(bundle.test_balanced);
    row.lr = probe_vectors(fit, stop, eval_set, "lr", k,
                           derive_seed(pc.audit_seed, 0x9e0bull, ri, 0), pc.bootstrap_b);
    row.mlp = probe_vectors(fit, stop, eval_set, "mlp", k,
                            derive_seed(pc.audit_seed, 0x9e0bull, ri, 1), pc.bootstrap_b);
  }

  // paired rouge difference of the selected checkpoint over the lambda=0 run
  const ReportRow* lam0_row = base_rec ? &rows[2] : nullptr;
  const ReportRow& sel_row = rows.back();
  PairedBootstrap diff;
  if (lam0_row) {
    BootstrapConfig bc;
    bc.b = pc.bootstrap_b;
    bc.seed = derive_seed(pc.audit_seed, 0xd1ffull);
    diff = paired_bootstrap_rouge(sel_row.rl_samples, lam0_row->rl_samples, bc);
  }

  // attacker grid over every artifact kind, base model vs selected checkpoint
  std::vector<std::string> grid_kinds;
  std::vector<double> grid_base, grid_sel;
  {
    auto grid_for = [&](const ParamStore<float>* ad) {
      std::vector<ArtifactSet> fit = extract_all_kinds(mc, frozen, ad, vocab,
                                                       pc.instruction_base,
                                                       bundle.bal_train);
      std::vector<ArtifactSet> stop = extract_all_kinds(mc, frozen, ad, vocab,
                                                        pc.instruction_base,
                                                        bundle.bal_val);
      std::vector<ArtifactSet> ev = extract_all_kinds(mc, frozen, ad, vocab,
                                                      pc.instruction_base,
                                                      bundle.test_balanced);
      std::vector<double> gaps;
      for (size_t s = 0; s < fit.size(); ++s) {
        ProbeOutcome p = probe_vectors(fit[s], stop[s], ev[s], "lr", k,
                                       derive_seed(pc.audit_seed, 0x96edull, s),
                                       pc.bootstrap_b);
        gaps.push_back(p.gap);
      }
      return gaps;
    };
    for (const auto& kk : kinds_for_depth(mc.n_layers)) grid_kinds.push_back(kk.str());
    grid_base = grid_for(nullptr);
    grid_sel = grid_for(&sel_adapters);
  }

  // ---------------------------------------------------------------- emission

  std::string md = "# representation leakage audit\n\n";
  md += "config " + pc.hash() + "\n\n";
  md += "## inputs\n\n";
  {
    std::vector<std::vector<std::string>> irows;
    auto add = [&](const std::string& rel) {
      std::string p = rp.root + "/" + rel;
      if (std::filesystem::exists(p)) irows.push_back({rel, file_hash(p)});
    };
    add("config.cfg");
    add("corpus/train.tsv");
    add("corpus/val.tsv");
    add("corpus/test.tsv");
    add("corpus/bal_train.tsv");
    add("corpus/bal_val.tsv");
    add("corpus/test_balanced.tsv");
    add("checkpoints/frozen.vlra");
    add("manifests/sweep.jsonl");
    add(rp.relativize(sel.record.path));
    md += run_detail::md_table({"file", "hash"}, irows) + "\n";
  }

  md += "## checkpoint selection\n\n";
  md += "budget epsilon=" + fmt_g(policy.epsilon) + " on " + sel.record.kind +
        ", attacker " + policy.attacker + "\n\n";
  md += std::string("selected: ") + (sel.feasible ? "" : "(infeasible fallback) ") +
        "lambda=" + fmt_g(sel.record.lambda) + " step " +
        std::to_string(sel.record.step) + ", val R-L " +
        run_detail::fmt_f(sel.record.val_rouge_l, 2) + ", val gap " +
        run_detail::fmt_f(sel.record.val_gap, 4) + "\n\n";
  md += "### pareto front (validation)\n\n";
  {
    std::vector<std::vector<std::string>> prs;
    for (const auto& r : front)
      prs.push_back({fmt_g(r.lambda), std::to_string(r.step),
                     run_detail::fmt_f(r.val_gap, 4),
                     run_detail::fmt_f(r.val_rouge_l, 2)});
    md += run_detail::md_table({"lambda", "step", "val gap", "val R-L"}, prs) + "\n";
  }

  md += "## test evaluation\n\n";
  md += "ROUGE is mean F1 x 100 over " + std::to_string(n_rouge) +
        " sampled test records; fractions are in summary.csv. Probe intervals "
        "are 95% cluster bootstraps over subjects of test_balanced.\n\n";
  {
    std::vector<std::vector<std::string>> trs;
    for (const auto& row : rows)
      trs.push_back({row.name, run_detail::fmt_f(row.r1 * 100.0, 2),
                     run_detail::fmt_f(row.r2 * 100.0, 2),
                     run_detail::fmt_f(row.rl_ci.mean * 100.0, 2) + " [" +
                         run_detail::fmt_f(row.rl_ci.lo * 100.0, 2) + ", " +
                         run_detail::fmt_f(row.rl_ci.hi * 100.0, 2) + "]",
                     run_detail::acc_ci_cell(row.lr), run_detail::fmt_f(row.lr.gap, 3),
                     run_detail::acc_ci_cell(row.mlp), run_detail::fmt_f(row.mlp.gap, 3)});
    md += run_detail::md_table({"system", "R-1", "R-2", "R-L [95% CI]",
                                "LR acc [95% CI]", "LR gap", "MLP acc [95% CI]",
                                "MLP gap"},
                               trs) + "\n";
  }
  if (lam0_row) {
    md += "R-L paired difference, selected minus lambda=0: " +
          run_detail::fmt_f(diff.diff.mean * 100.0, 2) + " [" +
          run_detail::fmt_f(diff.diff.lo * 100.0, 2) + ", " +
          run_detail::fmt_f(diff.diff.hi * 100.0, 2) + "], " +
          (diff.significant ? "significant" : "not significant") + "\n\n";
  }

  md += "## attacker grid (LR gap on test_balanced)\n\n";
  {
    std::vector<std::vector<std::string>> grs;
    for (size_t s = 0; s < grid_kinds.size(); ++s)
      grs.push_back({grid_kinds[s], run_detail::fmt_f(grid_base[s], 3),
                     run_detail::fmt_f(grid_sel[s], 3)});
    md += run_detail::md_table({"artifact", "base", "selected"}, grs) + "\n";
  }

  md += "## mention decomposition (generated test summaries)\n\n";
  {
    std::vector<std::vector<std::string>> mrs;
    for (const auto& row : rows) {
      const auto& m = row.mentions;
      mrs.push_back({row.name, std::to_string(m.total), std::to_string(m.group),
                     std::to_string(m.meta), std::to_string(m.meta_only),
                     std::to_string(m.group_only), std::to_string(m.both),
                     std::to_string(m.neither)});
    }
    md += run_detail::md_table({"system", "total", "group", "meta", "meta only",
                                "group only", "both", "neither"},
                               mrs) + "\n";
  }
  md += "machine outputs: summary.csv, mentions.csv, curve.csv, selection.json\n";
  write_text_file(rp.reports() + "/report.md", md);

  std::string csv =
      "system,kind,n_rouge,r1,r2,rl,rl_lo,rl_hi,lr_acc,lr_gap,lr_lo,lr_hi,"
      "mlp_acc,mlp_gap,mlp_lo,mlp_hi\n";
  for (const auto& row : rows) {
    csv += "\"" + row.name + "\"," + pc.target.str() + "," + std::to_string(n_rouge);
    for (double v : {row.r1, row.r2, row.rl_ci.mean, row.rl_ci.lo, row.rl_ci.hi,
                     row.lr.accuracy, row.lr.gap, row.lr.ci.lo, row.lr.ci.hi,
                     row.mlp.accuracy, row.mlp.gap, row.mlp.ci.lo, row.mlp.ci.hi})
      csv += "," + run_detail::fmt_g17(v);
    csv += "\n";
  }
  write_text_file(rp.reports() + "/summary.csv", csv);

  std::string mcsv = "system,n,total,group,meta,meta_only,group_only,both,neither\n";
  for (const auto& row : rows) {
    const auto& m = row.mentions;
    mcsv += "\"" + row.name + "\"," + std::to_string(n_rouge);
    for (int64_t v : {m.total, m.group, m.meta, m.meta_only, m.group_only, m.both,
                      m.neither})
      mcsv += "," + std::to_string(v);
    mcsv += "\n";
  }
  write_text_file(rp.reports() + "/mentions.csv", mcsv);
}

}  // namespace vaudit
