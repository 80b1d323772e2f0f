// vaudit -- drive the audit pipeline against a run directory: generate the
// synthetic corpus, train or sweep adapters, dump prompt vectors, probe and
// sanitize them, replay checkpoint selection, and emit the report tables.
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vaudit/runner.hpp"

namespace {

using namespace vaudit;

int exit_code(const std::string& code) {
  if (code == "E_USAGE") return 2;
  if (code == "E_IO") return 3;
  if (code == "E_CONFIG") return 4;
  if (code == "E_DATA") return 5;
  if (code == "E_STATE") return 6;
  return 1;
}

// vector dumps and checkpoints may be named bare, relative to the run dir
std::string resolve_in(const RunPaths& rp, const std::string& sub,
                       const std::string& name) {
  if (std::filesystem::exists(name)) return name;
  std::string s = rp.root + "/" + name;
  if (std::filesystem::exists(s)) return s;
  s = rp.root + "/" + sub + "/" + name;
  if (std::filesystem::exists(s)) return s;
  fail("E_IO", "cannot find " + name + " in " + rp.root);
  return {};
}

std::string place_in(const RunPaths& rp, const std::string& sub,
                     const std::string& name) {
  if (name.find('/') != std::string::npos) return name;
  return rp.root + "/" + sub + "/" + name;
}

struct LoadedRun {
  RunPaths rp;
  PipelineConfig pc;
};

LoadedRun open_run(const std::string& run_dir) {
  RunPaths rp{run_dir};
  return {rp, load_run_config(rp)};
}

int cmd_gen_corpus(const std::string& config_path, const std::string& out_dir) {
  PipelineConfig pc = PipelineConfig::load(config_path);
  RunPaths rp = init_run_dir(out_dir);
  write_text_file(rp.config(), pc.raw.canonical_text());
  SynthStats stats;
  CorpusBundle b = build_corpus(pc, &stats);
  write_corpus_dir(rp, pc, b);
  std::printf("config %s\n", pc.hash().c_str());
  std::printf("generated %lld records (%lld dropped), train/val/test = %zu/%zu/%zu\n",
              static_cast<long long>(stats.n_records),
              static_cast<long long>(stats.n_dropped), b.splits.train.size(),
              b.splits.val.size(), b.splits.test.size());
  std::printf("wrote %s\n", rp.corpus().c_str());
  return 0;
}

int cmd_train(const std::string& run_dir, double lambda) {
  LoadedRun run = open_run(run_dir);
  CorpusBundle b = load_corpus_dir(run.rp);
  Vocab vocab = corpus_vocab();
  ParamStore<float> frozen = ensure_frozen(run.pc, run.rp, vocab);
  TrainOutcome out = run_training(run.pc, run.rp, b, vocab, frozen, lambda);
  if (out.resumed_from > 0)
    std::printf("resumed lambda=%s from step %lld\n", fmt_g(lambda).c_str(),
                static_cast<long long>(out.resumed_from));
  for (const auto& r : out.records)
    std::printf("lambda=%s step %lld: val R-L %.2f, val gap %.4f\n",
                fmt_g(r.lambda).c_str(), static_cast<long long>(r.step),
                r.val_rouge_l, r.val_gap);
  std::printf("manifest %s\n", run.rp.manifest_of(lambda).c_str());
  return 0;
}

int cmd_sweep(const std::string& run_dir, const std::string& lambda_override) {
  LoadedRun run = open_run(run_dir);
  std::vector<double> lambdas = lambda_override.empty()
                                    ? run.pc.lambdas
                                    : parse_lambda_list(lambda_override);
  CorpusBundle b = load_corpus_dir(run.rp);
  Vocab vocab = corpus_vocab();
  ParamStore<float> frozen = ensure_frozen(run.pc, run.rp, vocab);
  auto records = run_cli_sweep(run.pc, run.rp, b, vocab, frozen, lambdas);
  std::printf("swept %zu lambdas, %zu manifest rows\n", lambdas.size(), records.size());
  std::printf("manifest %s\n", run.rp.sweep_manifest().c_str());
  return 0;
}

int cmd_extract(const std::string& run_dir, const std::string& checkpoint,
                const std::string& kind_s, const std::string& split, bool neutral,
                std::string out_name) {
  LoadedRun run = open_run(run_dir);
  ArtifactKind kind = parse_kind(kind_s);
  CorpusBundle b = load_corpus_dir(run.rp);
  Vocab vocab = corpus_vocab();
  if (!std::filesystem::exists(run.rp.frozen()))
    fail("E_STATE", run_dir + ": no frozen checkpoint");
  ParamStore<float> frozen = load_frozen_checkpoint(run.rp.frozen());
  ModelConfig mc = run.pc.model_config(vocab.size());

  ParamStore<float> adapters;
  std::string source = "base";
  if (!checkpoint.empty()) {
    std::string path = resolve_in(run.rp, "checkpoints", checkpoint);
    adapters = load_adapter_values(path, run.pc.hash());
    source = run.rp.relativize(path);
  }
  const std::vector<Record>& recs = pick_split(b, split);
  const std::string& instr = neutral ? run.pc.instruction_neutral
                                     : run.pc.instruction_base;
  ArtifactSet a = extract_dataset(mc, frozen, checkpoint.empty() ? nullptr : &adapters,
                                  vocab, instr, recs, kind);
  if (out_name.empty())
    out_name = (checkpoint.empty() ? std::string("base") : std::string("adapter")) +
               "_" + kind_s + "_" + split + (neutral ? "_neutral" : "") + ".vaud";
  std::string out = place_in(run.rp, "vectors", out_name);
  write_vaud_with_meta(out, a, run.pc.hash(), source, split,
                       neutral ? "neutral" : "base");
  std::printf("wrote %s (%lld x %lld, kind %s)\n", out.c_str(),
              static_cast<long long>(a.n()), static_cast<long long>(a.d),
              a.kind.c_str());
  return 0;
}

int cmd_probe(const std::string& run_dir, const std::string& fit_name,
              const std::string& stop_name, const std::string& eval_name,
              const std::string& probe, const std::string& out_name) {
  LoadedRun run = open_run(run_dir);
  std::string fit_path = resolve_in(run.rp, "vectors", fit_name);
  std::string eval_path = resolve_in(run.rp, "vectors", eval_name);
  std::string stop_path = stop_name.empty() ? eval_path
                                            : resolve_in(run.rp, "vectors", stop_name);
  for (const auto& p : {fit_path, stop_path, eval_path})
    check_vaud_meta(p, run.pc.hash());
  ArtifactSet fit = read_vaud(fit_path);
  ArtifactSet stop = read_vaud(stop_path);
  ArtifactSet ev = read_vaud(eval_path);
  ProbeOutcome o = probe_vectors(fit, stop, ev, probe, run.pc.synth.k_classes,
                                 derive_seed(run.pc.audit_seed, 0x9e0bull),
                                 run.pc.bootstrap_b);
  std::printf("%s on %s: acc %.4f [%.4f, %.4f], gap %.4f, n %lld\n", o.probe.c_str(),
              ev.kind.c_str(), o.accuracy, o.ci.lo, o.ci.hi, o.gap,
              static_cast<long long>(o.n));
  if (!out_name.empty()) {
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "{\"config_hash\":\"%s\",\"probe\":\"%s\",\"kind\":\"%s\","
                  "\"fit\":\"%s\",\"eval\":\"%s\",\"accuracy\":%.17g,"
                  "\"gap\":%.17g,\"ci_lo\":%.17g,\"ci_hi\":%.17g,\"n\":%lld}\n",
                  run.pc.hash().c_str(), o.probe.c_str(), ev.kind.c_str(),
                  run.rp.relativize(fit_path).c_str(),
                  run.rp.relativize(eval_path).c_str(), o.accuracy, o.gap, o.ci.lo,
                  o.ci.hi, static_cast<long long>(o.n));
    std::string out = place_in(run.rp, "reports", out_name);
    write_text_file(out, buf);
    std::printf("wrote %s\n", out.c_str());
  }
  return 0;
}

int cmd_sanitize(const std::string& run_dir, const std::string& method,
                 const std::string& fit_name, const std::string& stop_name,
                 int64_t k_remove, const std::string& match_from,
                 const std::vector<std::string>& apply_names,
                 std::string out_name) {
  LoadedRun run = open_run(run_dir);
  std::string fit_path = resolve_in(run.rp, "vectors", fit_name);
  check_vaud_meta(fit_path, run.pc.hash());
  ArtifactSet fit = read_vaud(fit_path);
  ArtifactSet stop;
  if (!stop_name.empty()) {
    std::string stop_path = resolve_in(run.rp, "vectors", stop_name);
    check_vaud_meta(stop_path, run.pc.hash());
    stop = read_vaud(stop_path);
  } else if (method == "inlp") {
    fail("E_USAGE", "inlp needs --stop vectors for its stopping rule");
  }

  int64_t k = k_remove;
  if (!match_from.empty()) {
    if (k > 0) fail("E_USAGE", "give either --k or --match-from, not both");
    LinearSanitizer ref = read_vsan(resolve_in(run.rp, "vectors", match_from));
    k = ref.k;
  }
  SanitizeOutcome o = fit_sanitizer(method, fit, stop, run.pc.synth.k_classes, k,
                                    derive_seed(run.pc.audit_seed, 0x5a71ull));
  if (out_name.empty()) out_name = method + ".vsan";
  std::string out = place_in(run.rp, "vectors", out_name);
  write_vsan(out, o.sanitizer);
  write_text_file(out + ".log.txt", sanitize_log_text(method, o));
  std::printf("fit %s sanitizer: removed k=%lld of d=%lld\n", method.c_str(),
              static_cast<long long>(o.sanitizer.k),
              static_cast<long long>(o.sanitizer.d));
  std::printf("wrote %s\n", out.c_str());

  for (const auto& name : apply_names) {
    std::string path = resolve_in(run.rp, "vectors", name);
    check_vaud_meta(path, run.pc.hash());
    ArtifactSet a = read_vaud(path);
    a.x = apply_sanitizer(o.sanitizer, a.x);
    std::string dst = path;
    std::string suffix = ".vaud";
    if (dst.size() > suffix.size() &&
        dst.compare(dst.size() - suffix.size(), suffix.size(), suffix) == 0)
      dst.resize(dst.size() - suffix.size());
    dst += ".san_" + method + ".vaud";
    write_vaud_with_meta(dst, a, run.pc.hash(),
                         run.rp.relativize(out), "sanitized", "base");
    std::printf("wrote %s\n", dst.c_str());
  }
  return 0;
}

int cmd_select(const std::string& run_dir, double epsilon_override,
               const std::string& manifest_path) {
  LoadedRun run = open_run(run_dir);
  std::vector<CheckpointRecord> records =
      manifest_path.empty() ? read_run_manifests(run.rp)
                            : read_manifest_file(manifest_path);
  SelectionPolicy policy{epsilon_override >= 0.0 ? epsilon_override : run.pc.epsilon,
                         run.pc.attacker};
  Selection sel = select_checkpoint(records, policy);
  std::vector<CheckpointRecord> front = pareto_front(records);
  write_text_file(run.rp.reports() + "/selection.json",
                  selection_json(policy, sel, front));
  std::printf("%slambda=%s step %lld, val R-L %.2f, val gap %.4f (epsilon %s)\n",
              sel.feasible ? "selected " : "infeasible fallback ",
              fmt_g(sel.record.lambda).c_str(),
              static_cast<long long>(sel.record.step), sel.record.val_rouge_l,
              sel.record.val_gap, fmt_g(policy.epsilon).c_str());
  std::printf("pareto front: %zu rows\n", front.size());
  std::printf("wrote %s/selection.json\n", run.rp.reports().c_str());
  return 0;
}

int cmd_report(const std::string& run_dir) {
  RunPaths probe_rp{run_dir};
  bool any_manifest = std::filesystem::exists(probe_rp.sweep_manifest());
  if (!any_manifest && std::filesystem::exists(probe_rp.manifests()))
    for (const auto& e : std::filesystem::directory_iterator(probe_rp.manifests()))
      any_manifest |= e.path().extension() == ".jsonl";
  if (!any_manifest) fail("E_DATA", "no manifest found in " + run_dir);
  LoadedRun run = open_run(run_dir);
  generate_report(run.pc, run.rp);
  std::printf("wrote %s/report.md\n", run.rp.reports().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"representation leakage audit pipeline"};
  app.require_subcommand(1);

  std::string config_path, out_dir, run_dir;
  double lambda = 0.0, epsilon_override = -1.0;
  std::string lambda_override, checkpoint, kind_s, split = "test_balanced";
  std::string fit_name, stop_name, eval_name, probe = "lr", out_name;
  std::string method, match_from, manifest_path;
  bool neutral = false;
  int64_t k_remove = 0;
  std::vector<std::string> apply_names;

  auto* gen = app.add_subcommand("gen-corpus", "synthesize and split the corpus");
  gen->add_option("--config", config_path, "pipeline config file")->required();
  gen->add_option("--out", out_dir, "run directory to create")->required();

  auto* train = app.add_subcommand("train", "train adapters at one lambda");
  train->add_option("--run-dir", run_dir)->required();
  train->add_option("--lambda", lambda)->required();

  auto* sweep = app.add_subcommand("sweep", "train the configured lambda grid");
  sweep->add_option("--run-dir", run_dir)->required();
  sweep->add_option("--lambdas", lambda_override, "comma list overriding the config");

  auto* extract = app.add_subcommand("extract", "dump prompt vectors for a split");
  extract->add_option("--run-dir", run_dir)->required();
  extract->add_option("--checkpoint", checkpoint, "adapter checkpoint (omit for base)");
  extract->add_option("--artifact", kind_s, "artifact kind")->required();
  extract->add_option("--split", split, "corpus split name");
  extract->add_flag("--neutral", neutral, "use the neutral instruction");
  extract->add_option("--out", out_name, "dump name under vectors/");

  auto* probe_cmd = app.add_subcommand("probe", "fit a probe on one dump, score another");
  probe_cmd->add_option("--run-dir", run_dir)->required();
  probe_cmd->add_option("--fit", fit_name)->required();
  probe_cmd->add_option("--eval", eval_name)->required();
  probe_cmd->add_option("--stop", stop_name, "early-stop dump (mlp)");
  probe_cmd->add_option("--probe", probe, "lr or mlp");
  probe_cmd->add_option("--out", out_name, "report name under reports/");

  auto* sanitize = app.add_subcommand("sanitize", "fit a removal projector");
  sanitize->add_option("--run-dir", run_dir)->required();
  sanitize->add_option("--method", method, "inlp, oneshot, pca, or random")->required();
  sanitize->add_option("--fit", fit_name)->required();
  sanitize->add_option("--stop", stop_name, "stopping dump (inlp)");
  sanitize->add_option("--k", k_remove, "removal rank (pca, random)");
  sanitize->add_option("--match-from", match_from, "take the rank from this .vsan");
  sanitize->add_option("--apply", apply_names, "dumps to sanitize alongside");
  sanitize->add_option("--out", out_name, "projector name under vectors/");

  auto* select = app.add_subcommand("select", "replay budgeted checkpoint selection");
  select->add_option("--run-dir", run_dir)->required();
  select->add_option("--epsilon", epsilon_override, "leakage budget override");
  select->add_option("--manifest", manifest_path, "manifest file override");

  auto* report = app.add_subcommand("report", "emit the report tables");
  report->add_option("--run-dir", run_dir)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error: E_USAGE: %s\n", e.what());
    return 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_corpus(config_path, out_dir);
    if (train->parsed()) return cmd_train(run_dir, lambda);
    if (sweep->parsed()) return cmd_sweep(run_dir, lambda_override);
    if (extract->parsed())
      return cmd_extract(run_dir, checkpoint, kind_s, split, neutral, out_name);
    if (probe_cmd->parsed())
      return cmd_probe(run_dir, fit_name, stop_name, eval_name, probe, out_name);
    if (sanitize->parsed())
      return cmd_sanitize(run_dir, method, fit_name, stop_name, k_remove, match_from,
                          apply_names, out_name);
    if (select->parsed()) return cmd_select(run_dir, epsilon_override, manifest_path);
    if (report->parsed()) return cmd_report(run_dir);
  } catch (const vaudit::Error& e) {
    std::fprintf(stderr, "error: %s: %s\n", e.code.c_str(), e.what());
    return exit_code(e.code);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: E_STATE: %s\n", e.what());
    return 6;
  }
  return 0;
}
