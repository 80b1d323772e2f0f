// surfacelora.hpp -- the mitigation trainer. Joint objective: utility
// cross-entropy on full SFT sequences plus a discriminator cross-entropy on
// the designated exported artifact, wired through gradient reversal, plus an
// optional cross-covariance penalty. One combined backward per micro-batch, a
// strict 1:1 SFT/adversarial batch ratio, and a single shared AdamW step over
// adapters and discriminator. All sampling and dropout randomness is derived
// from (seed, step, micro, branch), so a resumed run is bit-identical to an
// uninterrupted one and a lambda=0 run reduces to plain SFT exactly.
#pragma once

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <type_traits>
#include <vector>

#include "vaudit/artifacts.hpp"
#include "vaudit/governance.hpp"
#include "vaudit/metrics.hpp"
#include "vaudit/probes.hpp"

namespace vaudit {

struct TrainConfig {
  double lambda = 0.0;
  int64_t steps = 2000;
  double lr = 2e-4;
  int64_t batch = 4;
  int64_t accum = 32;
  int64_t eval_every = 200;
  ArtifactKind target{Pooling::lasttok, LayerSpec::last};
  std::string disc = "linear";  // or "mlp"
  int64_t disc_hidden = 128;
  double xcov_beta = 0.0;
  uint64_t seed = 1;
  int64_t eval_rouge_n = 256;  // fixed validation sample for sweep-time ROUGE
  int64_t eval_max_new = 24;

  void check() const {
    if (lambda < 0.0) fail("E_CONFIG", "lambda must be nonnegative");
    if (steps <= 0 || batch <= 0 || accum <= 0 || eval_every <= 0)
      fail("E_CONFIG", "training sizes must be positive");
    if (steps % eval_every != 0)
      fail("E_CONFIG", "steps must be a multiple of the eval interval");
    if (disc != "linear" && disc != "mlp")
      fail("E_CONFIG", "discriminator must be linear or mlp");
    if (target.layer != LayerSpec::last)
      fail("E_CONFIG", "training target must be a last-block artifact");
    if (xcov_beta < 0.0) fail("E_CONFIG", "xcov beta must be nonnegative");
  }
};

// ------------------------------------------------------------- discriminator

// parameters live in the same trainable store as the adapters so one shared
// optimizer steps both
template <class S>
void add_discriminator(ParamStore<S>& store, const ModelConfig& mc,
                       const TrainConfig& tc, int64_t k) {
  Rng rng(derive_seed(tc.seed, 0xd15cull));
  auto normal = [&](std::vector<int64_t> shape, double scale) {
    Tensor<S> t(std::move(shape));
    for (auto& v : t.data) v = static_cast<S>(rng.next_normal() * scale);
    return t;
  };
  if (tc.disc == "linear") {
    store.add("disc.w", normal({k, mc.d_model}, 0.02), true);
    store.add("disc.b", Tensor<S>({k}), true);
  } else {
    store.add("disc.w1",
              normal({tc.disc_hidden, mc.d_model},
                     std::sqrt(2.0 / static_cast<double>(mc.d_model))),
              true);
    store.add("disc.b1", Tensor<S>({tc.disc_hidden}), true);
    store.add("disc.w2",
              normal({k, tc.disc_hidden},
                     std::sqrt(2.0 / static_cast<double>(tc.disc_hidden))),
              true);
    store.add("disc.b2", Tensor<S>({k}), true);
  }
}

template <class S>
Var disc_logits(Tape<S>& t, const TrainConfig& tc, const BoundParams<S>& tr,
                Var z) {
  auto get = [&](const char* k) {
    auto it = tr.find(k);
    if (it == tr.end()) fail("E_STATE", std::string("missing parameter ") + k);
    return it->second;
  };
  if (tc.disc == "linear")
    return t.add_rowbias(t.matmul(z, get("disc.w"), false, true), get("disc.b"));
  Var h = t.relu(
      t.add_rowbias(t.matmul(z, get("disc.w1"), false, true), get("disc.b1")));
  return t.add_rowbias(t.matmul(h, get("disc.w2"), false, true), get("disc.b2"));
}

// ------------------------------------------------------- combined micro loss

struct MicroLosses {
  double sft = 0.0, adv = 0.0, xcov = 0.0, total = 0.0;
};

struct MicroParts {
  bool sft = true;
  bool adv = true;
  bool reverse = true;  // false: plain discriminator CE without reversal
};

namespace train_detail {

inline void check_adv_labels(const std::vector<int32_t>& labels, int64_t k) {
  for (int32_t c : labels)
    if (c < 0 || c >= k) fail("E_DATA", "adversarial label out of range");
}

template <class S>
Tensor<S> onehot(const std::vector<int32_t>& labels, int64_t k) {
  Tensor<S> y({static_cast<int64_t>(labels.size()), k});
  for (size_t i = 0; i < labels.size(); ++i)
    y.at(static_cast<int64_t>(i), labels[i]) = S(1);
  return y;
}

}  // namespace train_detail

// one micro-batch: build both branches on one tape, backward once, accumulate
// raw gradients for every trainable parameter into acc
template <class S>
MicroLosses micro_backward(const ModelConfig& mc, const TrainConfig& tc,
                           const ParamStore<S>& frozen, const ParamStore<S>& train,
                           const Batch* sft_batch, const Batch* adv_batch,
                           const std::vector<int32_t>* adv_labels, int64_t k,
                           int64_t step, int64_t micro, GradMap<S>& acc,
                           const MicroParts& parts = {}) {
  Tape<S> t;
  BoundParams<S> fr = bind_params(t, frozen);
  BoundParams<S> tr = bind_params(t, train);

  MicroLosses out;
  Var total;
  bool have = false;
  auto accumulate = [&](Var v) {
    total = have ? t.add(total, v) : v;
    have = true;
  };

  if (parts.sft) {
    if (!sft_batch) fail("E_STATE", "sft branch requested without a batch");
    Rng drop(derive_seed(tc.seed, 0x5f70ull, static_cast<uint64_t>(step),
                         static_cast<uint64_t>(micro)));
    ForwardOpts fo;
    fo.train = true;
    fo.dropout_rng = &drop;
    ForwardOut<S> fwd = forward_model(t, mc, fr, &tr, *sft_batch, fo);
    Var sft = lm_loss(t, mc, fr, fwd, *sft_batch);
    out.sft = static_cast<double>(t.val(sft).data[0]);
    accumulate(sft);
  }
  if (parts.adv) {
    if (!adv_batch || !adv_labels)
      fail("E_STATE", "adversarial branch requested without a batch");
    train_detail::check_adv_labels(*adv_labels, k);
    Rng drop(derive_seed(tc.seed, 0xadc0ull, static_cast<uint64_t>(step),
                         static_cast<uint64_t>(micro)));
    ForwardOpts fo;
    fo.train = true;
    fo.dropout_rng = &drop;
    ForwardOut<S> fwd = forward_model(t, mc, fr, &tr, *adv_batch, fo);
    Var z = artifact_on_tape(t, fwd, *adv_batch, tc.target);
    Var zin = parts.reverse ? t.grad_reverse(z, static_cast<S>(tc.lambda)) : z;
    Var logits = disc_logits(t, tc, tr, zin);
    Var adv = t.ce_mean(logits, *adv_labels,
                        std::vector<uint8_t>(adv_labels->size(), 1));
    out.adv = static_cast<double>(t.val(adv).data[0]);
    accumulate(adv);
    // the decorrelation term belongs to the intervention: a lambda-0 run is
    // the untreated baseline and must feel plain sft regardless of beta
    if (tc.lambda > 0.0 && tc.xcov_beta > 0.0) {
      Var xc = t.scale(
          t.xcov_half_sqfro(z, train_detail::onehot<S>(*adv_labels, k)),
          static_cast<S>(tc.xcov_beta));
      out.xcov = static_cast<double>(t.val(xc).data[0]);
      accumulate(xc);
    }
  }
  if (!have) fail("E_STATE", "no loss branch selected");
  out.total = static_cast<double>(t.val(total).data[0]);
  t.backward(total);
  for (const auto& e : train.entries) {
    if (!e.trainable) continue;
    auto it = acc.find(e.name);
    if (it == acc.end())
      it = acc.emplace(e.name, Tensor<S>::zeros(e.value.shape)).first;
    it->second.add_inplace(t.grad(tr.at(e.name)));
  }
  return out;
}

// ----------------------------------------------------- standalone operations

// discriminator cross-entropy of the target artifact on prompt-only forwards
template <class S>
double adversarial_loss(const ModelConfig& mc, const TrainConfig& tc,
                        const ParamStore<S>& frozen, const ParamStore<S>& train,
                        const Vocab& vocab, const std::string& instruction,
                        const std::vector<Record>& records, int64_t k) {
  if (records.empty()) fail("E_DATA", "no adversarial records");
  std::vector<std::vector<int32_t>> rows;
  std::vector<int32_t> labels;
  for (const auto& r : records) {
    rows.push_back(render_prompt(vocab, instruction, r.context, true, mc.max_prompt));
    labels.push_back(r.label);
  }
  train_detail::check_adv_labels(labels, k);
  Batch b = make_batch(rows);
  Tape<S> t;
  BoundParams<S> fr = bind_params(t, frozen);
  BoundParams<S> tr = bind_params(t, train);
  ForwardOut<S> fwd = forward_model(t, mc, fr, &tr, b);
  Var z = artifact_on_tape(t, fwd, b, tc.target);
  Var logits = disc_logits(t, tc, tr, z);
  Var ce = t.ce_mean(logits, labels, std::vector<uint8_t>(labels.size(), 1));
  return static_cast<double>(t.val(ce).data[0]);
}

// beta * 0.5 ||(1/n) Zc^T Yc||_F^2 as a plain number, for audits and tests
inline double xcov_penalty(const Tensor<float>& z, const std::vector<int32_t>& labels,
                           int64_t k, double beta) {
  if (z.rows() < 2) fail("E_DATA", "cross-covariance needs at least two rows");
  Tape<float> t;
  Var zv = t.leaf(z, false);
  double half = static_cast<double>(
      t.val(t.xcov_half_sqfro(zv, train_detail::onehot<float>(labels, k))).data[0]);
  return beta * half;
}

// -------------------------------------------------------------- train state

template <class S = float>
struct TrainState {
  ModelConfig mc;
  TrainConfig tc;
  int64_t k = 0;
  ParamStore<S> frozen;
  ParamStore<S> train;  // adapters + discriminator
  AdamW<S> opt;
  int64_t step_done = 0;
};

template <class S = float>
TrainState<S> init_train(const ModelConfig& mc, const TrainConfig& tc,
                         const ParamStore<S>& frozen, int64_t k) {
  mc.check();
  tc.check();
  if (k < 2 || k > kMaxClasses) fail("E_CONFIG", "class count out of range");
  typename AdamW<S>::Config oc;
  oc.lr = tc.lr;
  TrainState<S> st{mc, tc, k, frozen, init_adapters<S>(mc, tc.seed), AdamW<S>(oc), 0};
  add_discriminator(st.train, mc, tc, k);
  return st;
}

struct TrainEnv {
  const Vocab* vocab = nullptr;
  std::string instruction;
  const std::vector<Record>* train_records = nullptr;  // utility split
  const std::vector<Record>* bal_train = nullptr;      // adversary + probe fit
  const std::vector<Record>* bal_val = nullptr;        // probe evaluation
  const std::vector<Record>* val_records = nullptr;    // sweep-time ROUGE

  void check() const {
    if (!vocab || !train_records || !bal_train || !bal_val || !val_records)
      fail("E_STATE", "train environment incomplete");
    if (train_records->empty() || bal_train->empty() || bal_val->empty() ||
        val_records->empty())
      fail("E_DATA", "empty training splits");
  }
};

namespace train_detail {

// stateless cycling order: epoch e is a seeded reshuffle, the cursor is pure
// position, so seeking to any step replays the identical stream
struct CyclingSampler {
  int64_t n = 0;
  uint64_t seed = 0, tag = 0;
  int64_t cursor = 0;
  int64_t cached_epoch = -1;
  std::vector<int64_t> order;

  CyclingSampler(int64_t n_, uint64_t seed_, uint64_t tag_)
      : n(n_), seed(seed_), tag(tag_) {}

  void ensure(int64_t epoch) {
    if (epoch == cached_epoch) return;
    order.resize(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    Rng rng(derive_seed(seed, tag, static_cast<uint64_t>(epoch)));
    rng.shuffle(order);
    cached_epoch = epoch;
  }
  std::vector<int64_t> take(int64_t m) {
    std::vector<int64_t> out;
    out.reserve(static_cast<size_t>(m));
    for (int64_t i = 0; i < m; ++i, ++cursor) {
      ensure(cursor / n);
      out.push_back(order[static_cast<size_t>(cursor % n)]);
    }
    return out;
  }
  void seek(int64_t c) { cursor = c; }
};

inline std::string fmt_g(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

inline void warn_if_imbalanced(const std::vector<Record>& bal, int64_t k) {
  std::vector<int64_t> cnt(static_cast<size_t>(k), 0);
  for (const auto& r : bal)
    if (r.label >= 0 && r.label < k) cnt[static_cast<size_t>(r.label)]++;
  for (int64_t c = 1; c < k; ++c)
    if (cnt[static_cast<size_t>(c)] != cnt[0]) {
      std::cerr << "warning: adversarial subset is class-imbalanced\n";
      return;
    }
}

}  // namespace train_detail

// ------------------------------------------------------------------- eval

inline double eval_rouge_l(const TrainState<float>& st, const TrainEnv& env) {
  const auto& val = *env.val_records;
  std::vector<int64_t> idx(val.size());
  for (size_t i = 0; i < val.size(); ++i) idx[i] = static_cast<int64_t>(i);
  Rng rng(derive_seed(st.tc.seed, 0xe0a1ull));
  rng.shuffle(idx);
  int64_t n = std::min<int64_t>(st.tc.eval_rouge_n, static_cast<int64_t>(idx.size()));
  std::vector<std::vector<int32_t>> prompts;
  std::vector<std::string> refs;
  for (int64_t i = 0; i < n; ++i) {
    const Record& r = val[static_cast<size_t>(idx[static_cast<size_t>(i)])];
    prompts.push_back(render_prompt(*env.vocab, env.instruction, r.context, true,
                                    st.mc.max_prompt));
    refs.push_back(r.target);
  }
  auto gen = greedy_decode(st.mc, st.frozen, &st.train, prompts, st.tc.eval_max_new);
  double sum = 0.0;
  for (size_t i = 0; i < gen.size(); ++i)
    sum += rouge(env.vocab->decode(gen[i]), refs[i]).rl.f1;
  return 100.0 * sum / static_cast<double>(n);
}

// sweep-time validation audit: fresh linear probe on the target artifact
inline CheckpointRecord eval_checkpoint(const TrainState<float>& st,
                                        const TrainEnv& env, int64_t step) {
  CheckpointRecord rec;
  rec.run_id = "lambda=" + train_detail::fmt_g(st.tc.lambda);
  rec.lambda = st.tc.lambda;
  rec.step = step;
  rec.kind = st.tc.target.str();
  rec.val_rouge_l = eval_rouge_l(st, env);

  ArtifactSet tr = extract_dataset(st.mc, st.frozen, &st.train, *env.vocab,
                                   env.instruction, *env.bal_train, st.tc.target);
  ArtifactSet va = extract_dataset(st.mc, st.frozen, &st.train, *env.vocab,
                                   env.instruction, *env.bal_val, st.tc.target);
  auto to_i32 = [](const std::vector<uint32_t>& v) {
    std::vector<int32_t> out(v.size());
    for (size_t i = 0; i < v.size(); ++i) out[i] = static_cast<int32_t>(v[i]);
    return out;
  };
  LinearProbeSpec spec;
  spec.seed = derive_seed(st.tc.seed, 0x9e0bull, static_cast<uint64_t>(step));
  LinearProbe probe = fit_linear_probe(tr.x, to_i32(tr.labels), st.k, spec);
  ProbeReport rep = evaluate_scores(probe.scores(va.x), to_i32(va.labels), st.k);
  rec.val_lr_acc = rep.accuracy;
  rec.val_gap = rep.gap;
  return rec;
}

// ------------------------------------------------------------- checkpoints

struct VlraArrays {
  std::string role;
  int64_t step = 0;
  std::string config_echo;
  std::vector<std::pair<std::string, Tensor<float>>> arrays;
};

inline void write_vlra(const std::string& path, const VlraArrays& v) {
  BinWriter w(path);
  w.magic("VLRA");
  w.u32(1);
  w.str(v.role);
  w.u64(static_cast<uint64_t>(v.step));
  w.str(v.config_echo);
  w.u32(static_cast<uint32_t>(v.arrays.size()));
  for (const auto& [name, ten] : v.arrays) {
    w.str(name);
    w.u32(static_cast<uint32_t>(ten.shape.size()));
    for (int64_t dim : ten.shape) w.u64(static_cast<uint64_t>(dim));
    w.f32s(ten.data.data(), ten.data.size());
  }
  w.close();
}

inline VlraArrays read_vlra(const std::string& path) {
  BinReader r(path);
  r.expect_magic("VLRA");
  if (r.u32() != 1) fail("E_IO", path + ": unsupported version");
  VlraArrays v;
  v.role = r.str(64);
  if (v.role != "frozen" && v.role != "adapter")
    fail("E_IO", path + ": unknown role " + v.role);
  v.step = static_cast<int64_t>(r.u64());
  v.config_echo = r.str(1 << 20);
  uint32_t n = r.u32();
  for (uint32_t i = 0; i < n; ++i) {
    std::string name = r.str(4096);
    uint32_t nd = r.u32();
    if (nd == 0 || nd > 4) fail("E_IO", path + ": bad array rank");
    std::vector<int64_t> shape;
    int64_t numel = 1;
    for (uint32_t j = 0; j < nd; ++j) {
      int64_t dim = static_cast<int64_t>(r.u64());
      if (dim <= 0 || numel > (int64_t{1} << 32) / dim)
        fail("E_IO", path + ": bad array shape");
      shape.push_back(dim);
      numel *= dim;
    }
    Tensor<float> ten(shape);
    r.f32s(ten.data.data(), ten.data.size());
    for (float x : ten.data)
      if (!std::isfinite(x)) fail("E_IO", path + ": non-finite value in " + name);
    v.arrays.emplace_back(std::move(name), std::move(ten));
  }
  if (!r.at_eof()) fail("E_IO", path + ": trailing bytes");
  return v;
}

inline void save_frozen_checkpoint(const std::string& path,
                                   const ParamStore<float>& frozen,
                                   const std::string& config_echo = "") {
  VlraArrays v;
  v.role = "frozen";
  v.step = 0;
  v.config_echo = config_echo;
  for (const auto& e : frozen.entries) v.arrays.emplace_back(e.name, e.value);
  write_vlra(path, v);
}

inline ParamStore<float> load_frozen_checkpoint(const std::string& path) {
  VlraArrays v = read_vlra(path);
  if (v.role != "frozen") fail("E_STATE", path + ": expected a frozen checkpoint");
  ParamStore<float> ps;
  for (auto& [name, ten] : v.arrays) ps.add(name, std::move(ten), false);
  return ps;
}

// adapter + discriminator values with optimizer moments, for exact resume
inline void save_train_checkpoint(const std::string& path,
                                  const TrainState<float>& st,
                                  const std::string& config_echo = "") {
  VlraArrays v;
  v.role = "adapter";
  v.step = st.step_done;
  v.config_echo = config_echo;
  auto& state = const_cast<AdamW<float>&>(st.opt).state();
  for (const auto& e : st.train.entries) {
    if (!e.trainable) continue;
    v.arrays.emplace_back(e.name, e.value);
    auto it = state.find(e.name);
    if (it != state.end() && it->second.m.numel() > 0) {
      v.arrays.emplace_back("m@" + e.name, it->second.m);
      v.arrays.emplace_back("v@" + e.name, it->second.v);
    } else {
      v.arrays.emplace_back("m@" + e.name, Tensor<float>::zeros(e.value.shape));
      v.arrays.emplace_back("v@" + e.name, Tensor<float>::zeros(e.value.shape));
    }
  }
  write_vlra(path, v);
}

inline void load_train_checkpoint(TrainState<float>& st, const std::string& path) {
  VlraArrays v = read_vlra(path);
  if (v.role != "adapter") fail("E_STATE", path + ": expected an adapter checkpoint");
  auto& state = st.opt.state();
  for (auto& [name, ten] : v.arrays) {
    if (name.rfind("m@", 0) == 0 || name.rfind("v@", 0) == 0) {
      std::string pname = name.substr(2);
      if (!st.train.has(pname)) fail("E_STATE", path + ": moment for unknown " + pname);
      auto& mo = state[pname];
      if (name[0] == 'm') mo.m = std::move(ten);
      else mo.v = std::move(ten);
    } else {
      Tensor<float>& dst = st.train.get(name);
      if (!dst.same_shape(ten)) fail("E_STATE", path + ": shape mismatch for " + name);
      dst = std::move(ten);
    }
  }
  st.opt.set_step_count(v.step);
  st.step_done = v.step;
}

// ------------------------------------------------------------ training loop

struct StepLog {
  int64_t step = 0;
  double sft = 0.0, adv = 0.0, xcov = 0.0, total = 0.0;
  double grad_norm = 0.0;
};

inline std::string manifest_line(const CheckpointRecord& r) {
  char buf[768];
  std::snprintf(buf, sizeof buf,
                "{\"run_id\":\"%s\",\"lambda\":%.17g,\"step\":%lld,"
                "\"val_rouge_l\":%.17g,\"val_lr_acc\":%.17g,\"val_gap\":%.17g,"
                "\"kind\":\"%s\",\"path\":\"%s\"}",
                r.run_id.c_str(), r.lambda, static_cast<long long>(r.step),
                r.val_rouge_l, r.val_lr_acc, r.val_gap, r.kind.c_str(),
                r.path.c_str());
  return buf;
}

// runs from st.step_done + 1 through tc.steps; evaluates and checkpoints at
// every eval interval; appends manifest rows (and JSON lines if a stream is
// given); returns per-step loss logs
template <class S = float>
std::vector<StepLog> train_run(TrainState<S>& st, const TrainEnv& env,
                               const std::string& ckpt_dir = "",
                               std::vector<CheckpointRecord>* manifest = nullptr,
                               std::ostream* manifest_stream = nullptr,
                               const std::string& config_echo = "") {
  env.check();
  train_detail::warn_if_imbalanced(*env.bal_train, st.k);
  if (!ckpt_dir.empty()) ensure_dir(ckpt_dir);

  train_detail::CyclingSampler sft_sampler(
      static_cast<int64_t>(env.train_records->size()), st.tc.seed, 0x5a3aull);
  train_detail::CyclingSampler adv_sampler(
      static_cast<int64_t>(env.bal_train->size()), st.tc.seed, 0xa3b1ull);
  sft_sampler.seek(st.step_done * st.tc.accum * st.tc.batch);
  adv_sampler.seek(st.step_done * st.tc.accum * st.tc.batch);

  std::vector<StepLog> logs;
  for (int64_t step = st.step_done + 1; step <= st.tc.steps; ++step) {
    GradMap<S> grads;
    StepLog log;
    log.step = step;
    for (int64_t micro = 0; micro < st.tc.accum; ++micro) {
      auto sft_idx = sft_sampler.take(st.tc.batch);
      auto adv_idx = adv_sampler.take(st.tc.batch);
      std::vector<std::vector<int32_t>> sft_rows;
      std::vector<int64_t> loss_from;
      for (int64_t i : sft_idx) {
        const Record& r = (*env.train_records)[static_cast<size_t>(i)];
        auto [tokens, plen] = render_sft(*env.vocab, env.instruction, r.context,
                                         r.target, true, st.mc);
        sft_rows.push_back(std::move(tokens));
        loss_from.push_back(plen);
      }
      Batch sft_b = make_batch(sft_rows, loss_from);
      std::vector<std::vector<int32_t>> adv_rows;
      std::vector<int32_t> adv_labels;
      for (int64_t i : adv_idx) {
        const Record& r = (*env.bal_train)[static_cast<size_t>(i)];
        adv_rows.push_back(render_prompt(*env.vocab, env.instruction, r.context,
                                         true, st.mc.max_prompt));
        adv_labels.push_back(r.label);
      }
      Batch adv_b = make_batch(adv_rows);
      MicroLosses ml = micro_backward(st.mc, st.tc, st.frozen, st.train, &sft_b,
                                      &adv_b, &adv_labels, st.k, step, micro, grads);
      log.sft += ml.sft;
      log.adv += ml.adv;
      log.xcov += ml.xcov;
      log.total += ml.total;
    }
    double inv = 1.0 / static_cast<double>(st.tc.accum);
    for (auto& [name, g] : grads) g.scale_inplace(static_cast<S>(inv));
    log.sft *= inv;
    log.adv *= inv;
    log.xcov *= inv;
    log.total *= inv;
    if (!std::isfinite(log.total)) fail("E_STATE", "non-finite training loss");
    log.grad_norm = clip_global_norm(grads, 1.0);
    st.opt.step(st.train, grads);
    st.step_done = step;
    logs.push_back(log);

    if (step % st.tc.eval_every == 0) {
      if constexpr (std::is_same_v<S, float>) {
        CheckpointRecord rec = eval_checkpoint(st, env, step);
        if (!ckpt_dir.empty()) {
          char name[64];
          std::snprintf(name, sizeof name, "step_%06lld.vlra",
                        static_cast<long long>(step));
          rec.path = ckpt_dir + "/" + name;
          save_train_checkpoint(rec.path, st, config_echo);
        }
        if (manifest) manifest->push_back(rec);
        if (manifest_stream) *manifest_stream << manifest_line(rec) << "\n";
      }
    }
  }
  return logs;
}

// sequential sweep: one run per lambda, shared frozen backbone, per-run
// manifest files under out_dir/lambda_<value>/
template <class S = float>
std::vector<CheckpointRecord> run_sweep(const ModelConfig& mc,
                                        const TrainConfig& base,
                                        const std::vector<double>& lambdas,
                                        const ParamStore<S>& frozen,
                                        const TrainEnv& env,
                                        const std::string& out_dir = "",
                                        const std::string& config_echo = "") {
  if (lambdas.empty()) fail("E_CONFIG", "empty lambda list");
  std::vector<CheckpointRecord> records;
  for (double lam : lambdas) {
    TrainConfig tc = base;
    tc.lambda = lam;
    TrainState<S> st = init_train(mc, tc, frozen, [&] {
      int64_t k = 0;
      for (const auto& r : *env.bal_train)
        k = std::max<int64_t>(k, r.label + 1);
      return k;
    }());
    std::string dir;
    std::ofstream stream;
    if (!out_dir.empty()) {
      dir = out_dir + "/lambda_" + train_detail::fmt_g(lam);
      ensure_dir(dir);
      stream.open(dir + "/manifest.jsonl", std::ios::app);
      if (!stream) fail("E_IO", "cannot open manifest in " + dir);
    }
    train_run(st, env, dir, &records,
              out_dir.empty() ? nullptr : &stream, config_echo);
  }
  return records;
}

}  // namespace vaudit
