// model.hpp -- decoder-only causal transformer with low-rank adapters on the
// attention q/v projections. Pre-norm blocks, learned positions derived from
// the padding mask (left padding does not shift real positions), untied
// unembedding. Block outputs are the residual stream after each block; the
// final layernorm belongs to the LM head.
#pragma once

#include "vaudit/autodiff.hpp"
#include "vaudit/optim.hpp"
#include "vaudit/vocab.hpp"

namespace vaudit {

struct ModelConfig {
  int64_t vocab_size = 0;
  int64_t d_model = 64;
  int64_t n_layers = 4;
  int64_t n_heads = 4;
  int64_t d_ffn = 256;
  int64_t max_pos = 192;
  int64_t lora_r = 16;
  double lora_alpha = 32.0;
  double lora_dropout = 0.05;
  int64_t max_prompt = 1024;
  int64_t max_total = 1536;

  void check() const {
    if (d_model % n_heads != 0)
      fail("E_CONFIG", "d_model must be divisible by n_heads");
    if (vocab_size <= 0) fail("E_CONFIG", "vocab_size unset");
    if (max_total <= max_prompt / 8)
      fail("E_CONFIG", "max_total too small for prompts");
  }
};

// ------------------------------------------------------------ initialization

template <class S = float>
ParamStore<S> init_backbone(const ModelConfig& cfg, uint64_t seed) {
  cfg.check();
  ParamStore<S> ps;
  Rng rng(derive_seed(seed, 0xb0d1));
  auto normal2 = [&](std::vector<int64_t> shape) {
    Tensor<S> t(std::move(shape));
    for (auto& v : t.data) v = static_cast<S>(rng.next_normal() * 0.02);
    return t;
  };
  auto ones = [](std::vector<int64_t> shape) {
    Tensor<S> t(std::move(shape));
    t.fill(S(1));
    return t;
  };
  ps.add("tok_emb", normal2({cfg.vocab_size, cfg.d_model}), false);
  ps.add("pos_emb", normal2({cfg.max_pos, cfg.d_model}), false);
  for (int64_t l = 0; l < cfg.n_layers; ++l) {
    std::string p = "blk" + std::to_string(l) + ".";
    ps.add(p + "ln1.g", ones({cfg.d_model}), false);
    ps.add(p + "ln1.b", Tensor<S>({cfg.d_model}), false);
    ps.add(p + "wq", normal2({cfg.d_model, cfg.d_model}), false);
    ps.add(p + "wk", normal2({cfg.d_model, cfg.d_model}), false);
    ps.add(p + "wv", normal2({cfg.d_model, cfg.d_model}), false);
    ps.add(p + "wo", normal2({cfg.d_model, cfg.d_model}), false);
    ps.add(p + "ln2.g", ones({cfg.d_model}), false);
    ps.add(p + "ln2.b", Tensor<S>({cfg.d_model}), false);
    ps.add(p + "w1", normal2({cfg.d_ffn, cfg.d_model}), false);
    ps.add(p + "w2", normal2({cfg.d_model, cfg.d_ffn}), false);
  }
  ps.add("lnf.g", ones({cfg.d_model}), false);
  ps.add("lnf.b", Tensor<S>({cfg.d_model}), false);
  ps.add("unembed", normal2({cfg.vocab_size, cfg.d_model}), false);
  return ps;
}

// A starts small uniform, B starts zero, so adapters are initially inert
template <class S = float>
ParamStore<S> init_adapters(const ModelConfig& cfg, uint64_t seed) {
  ParamStore<S> ps;
  Rng rng(derive_seed(seed, 0x10a4));
  for (int64_t l = 0; l < cfg.n_layers; ++l) {
    std::string p = "blk" + std::to_string(l) + ".";
    for (const char* which : {"lora_q.", "lora_v."}) {
      Tensor<S> a({cfg.lora_r, cfg.d_model});
      for (auto& v : a.data) v = static_cast<S>(rng.next_range(-0.05, 0.05));
      ps.add(p + which + "A", std::move(a), true);
      ps.add(p + which + "B", Tensor<S>({cfg.d_model, cfg.lora_r}), true);
    }
  }
  return ps;
}

// ------------------------------------------------------------------ batching

struct Batch {
  int64_t B = 0, T = 0;
  std::vector<int32_t> tokens;    // B*T, left padded with PAD
  std::vector<uint8_t> mask;      // 1 = real token
  std::vector<int32_t> pos;       // count of real tokens before this one
  std::vector<int64_t> last_real; // flat index of each row's final real token
  std::vector<int32_t> targets;   // next-token ids (loss rows only)
  std::vector<uint8_t> tweight;   // 1 where loss applies
};

// rows are full sequences; loss_from[r] marks the position from which
// next-token prediction is scored (sequence index of the first target token)
inline Batch make_batch(const std::vector<std::vector<int32_t>>& rows,
                        const std::vector<int64_t>& loss_from = {}) {
  Batch b;
  b.B = static_cast<int64_t>(rows.size());
  for (const auto& r : rows)
    b.T = std::max(b.T, static_cast<int64_t>(r.size()));
  if (b.B == 0 || b.T == 0) fail("E_DATA", "empty batch");
  b.tokens.assign(static_cast<size_t>(b.B * b.T), Vocab::PAD);
  b.mask.assign(static_cast<size_t>(b.B * b.T), 0);
  b.pos.assign(static_cast<size_t>(b.B * b.T), 0);
  b.targets.assign(static_cast<size_t>(b.B * b.T), 0);
  b.tweight.assign(static_cast<size_t>(b.B * b.T), 0);
  b.last_real.assign(static_cast<size_t>(b.B), 0);
  for (int64_t r = 0; r < b.B; ++r) {
    int64_t n = static_cast<int64_t>(rows[r].size());
    int64_t off = b.T - n;  // left padding
    for (int64_t i = 0; i < n; ++i) {
      b.tokens[r * b.T + off + i] = rows[r][i];
      b.mask[r * b.T + off + i] = 1;
      b.pos[r * b.T + off + i] = static_cast<int32_t>(i);
    }
    b.last_real[r] = r * b.T + b.T - 1;
    if (!loss_from.empty()) {
      for (int64_t i = 0; i + 1 < n; ++i) {
        if (i + 1 >= loss_from[r]) {
          b.targets[r * b.T + off + i] = rows[r][i + 1];
          b.tweight[r * b.T + off + i] = 1;
        }
      }
    }
  }
  return b;
}

// ----------------------------------------------------------------- rendering

// BOS SYS_OPEN instr SYS_CLOSE USER_OPEN context USER_CLOSE [ASSIST]
// with keep-last truncation applied to the context token run
inline std::vector<int32_t> render_prompt(const Vocab& vocab,
                                          const std::string& instruction,
                                          const std::string& context,
                                          bool after_header, int64_t max_prompt) {
  std::vector<int32_t> instr = vocab.encode(instruction);
  std::vector<int32_t> ctx = vocab.encode(context);
  int64_t overhead = 2 + static_cast<int64_t>(instr.size()) + 2 + 1 + (after_header ? 1 : 0);
  int64_t budget = max_prompt - overhead;
  if (budget < 0) fail("E_DATA", "instruction alone exceeds the prompt budget");
  if (static_cast<int64_t>(ctx.size()) > budget)
    ctx.erase(ctx.begin(), ctx.end() - budget);  // keep the most recent context
  std::vector<int32_t> out;
  out.reserve(static_cast<size_t>(overhead + static_cast<int64_t>(ctx.size())));
  out.push_back(Vocab::BOS);
  out.push_back(Vocab::SYS_OPEN);
  out.insert(out.end(), instr.begin(), instr.end());
  out.push_back(Vocab::SYS_CLOSE);
  out.push_back(Vocab::USER_OPEN);
  out.insert(out.end(), ctx.begin(), ctx.end());
  out.push_back(Vocab::USER_CLOSE);
  if (after_header) out.push_back(Vocab::ASSIST);
  return out;
}

// prompt ++ target ++ EOS capped at max_total by shrinking the context
inline std::pair<std::vector<int32_t>, int64_t> render_sft(
    const Vocab& vocab, const std::string& instruction, const std::string& context,
    const std::string& target, bool after_header, const ModelConfig& cfg) {
  std::vector<int32_t> tgt = vocab.encode(target);
  int64_t budget = std::min<int64_t>(
      cfg.max_prompt, cfg.max_total - static_cast<int64_t>(tgt.size()) - 1);
  std::vector<int32_t> prompt =
      render_prompt(vocab, instruction, context, after_header, budget);
  int64_t plen = static_cast<int64_t>(prompt.size());
  prompt.insert(prompt.end(), tgt.begin(), tgt.end());
  prompt.push_back(Vocab::EOS);
  return {std::move(prompt), plen};
}

// ------------------------------------------------------------------- forward

template <class S = float>
using BoundParams = std::map<std::string, Var>;

// register every parameter of the store as a tape leaf
template <class S>
BoundParams<S> bind_params(Tape<S>& t, const ParamStore<S>& ps) {
  BoundParams<S> out;
  for (const auto& e : ps.entries) out[e.name] = t.leaf(e.value, e.trainable);
  return out;
}

struct ForwardOpts {
  bool train = false;      // enables adapter-path dropout
  Rng* dropout_rng = nullptr;
};

template <class S>
struct ForwardOut {
  std::vector<Var> blocks;  // residual stream after each block
  Var final_norm;           // lnf(x), input to the unembedding
};

template <class S>
ForwardOut<S> forward_model(Tape<S>& t, const ModelConfig& cfg,
                            const BoundParams<S>& fr, const BoundParams<S>* ad,
                            const Batch& batch, const ForwardOpts& opts = {}) {
  if (batch.T > cfg.max_pos) fail("E_DATA", "sequence exceeds max_pos");
  auto get = [&](const BoundParams<S>& m, const std::string& k) {
    auto it = m.find(k);
    if (it == m.end()) fail("E_STATE", "missing bound parameter " + k);
    return it->second;
  };
  S lora_scale = static_cast<S>(cfg.lora_alpha / static_cast<double>(cfg.lora_r));

  Var x = t.add(t.embed_rows(get(fr, "tok_emb"), batch.tokens),
                t.embed_rows(get(fr, "pos_emb"), batch.pos));
  ForwardOut<S> out;
  for (int64_t l = 0; l < cfg.n_layers; ++l) {
    std::string p = "blk" + std::to_string(l) + ".";
    Var h = t.layernorm(x, get(fr, p + "ln1.g"), get(fr, p + "ln1.b"));
    auto proj = [&](const char* w, const char* lora) {
      Var base = t.matmul(h, get(fr, p + w), false, true);
      if (!ad) return base;
      Var hin = h;
      if (opts.train && cfg.lora_dropout > 0.0) {
        if (!opts.dropout_rng) fail("E_STATE", "train forward needs a dropout rng");
        hin = t.dropout(h, cfg.lora_dropout, *opts.dropout_rng);
      }
      Var u = t.matmul(hin, get(*ad, p + lora + std::string(".A")), false, true);
      Var delta = t.matmul(u, get(*ad, p + lora + std::string(".B")), false, true);
      return t.add_scaled(base, delta, lora_scale);
    };
    Var q = proj("wq", "lora_q");
    Var k = t.matmul(h, get(fr, p + "wk"), false, true);
    Var v = proj("wv", "lora_v");
    Var att = t.attention(q, k, v, batch.B, batch.T, cfg.n_heads, batch.mask);
    x = t.add(x, t.matmul(att, get(fr, p + "wo"), false, true));
    Var h2 = t.layernorm(x, get(fr, p + "ln2.g"), get(fr, p + "ln2.b"));
    Var f = t.matmul(t.gelu(t.matmul(h2, get(fr, p + "w1"), false, true)),
                     get(fr, p + "w2"), false, true);
    x = t.add(x, f);
    out.blocks.push_back(x);
  }
  out.final_norm = t.layernorm(x, get(fr, "lnf.g"), get(fr, "lnf.b"));
  return out;
}

// mean next-token cross entropy over the batch's loss positions; logits are
// materialized only at those positions
template <class S>
Var lm_loss(Tape<S>& t, const ModelConfig& cfg, const BoundParams<S>& fr,
            const ForwardOut<S>& fwd, const Batch& batch) {
  std::vector<int64_t> rows;
  std::vector<int32_t> tg;
  for (int64_t i = 0; i < batch.B * batch.T; ++i)
    if (batch.tweight[i]) {
      rows.push_back(i);
      tg.push_back(batch.targets[i]);
    }
  if (rows.empty()) fail("E_DATA", "batch has no loss positions");
  Var sel = t.rows_select(fwd.final_norm, rows);
  Var logits = t.matmul(sel, fr.at("unembed"), false, true);
  return t.ce_mean(logits, tg, std::vector<uint8_t>(tg.size(), 1));
}

// ------------------------------------------------------------------ decoding

// greedy, argmax ties resolved to the lowest id, stops on EOS or max_new
template <class S>
std::vector<std::vector<int32_t>> greedy_decode(
    const ModelConfig& cfg, const ParamStore<S>& frozen, const ParamStore<S>* adapters,
    const std::vector<std::vector<int32_t>>& prompts, int64_t max_new) {
  std::vector<std::vector<int32_t>> seqs = prompts;
  std::vector<std::vector<int32_t>> gen(prompts.size());
  std::vector<uint8_t> done(prompts.size(), 0);
  for (int64_t step = 0; step < max_new; ++step) {
    bool all_done = true;
    for (auto d : done) all_done &= d != 0;
    if (all_done) break;
    Tape<S> t;
    BoundParams<S> fr = bind_params(t, frozen);
    BoundParams<S> ad;
    if (adapters) ad = bind_params(t, *adapters);
    Batch b = make_batch(seqs);
    ForwardOut<S> fwd = forward_model(t, cfg, fr, adapters ? &ad : nullptr, b);
    Var sel = t.rows_select(fwd.final_norm, b.last_real);
    Var logits = t.matmul(sel, fr.at("unembed"), false, true);
    const Tensor<S>& lg = t.val(logits);
    for (size_t r = 0; r < seqs.size(); ++r) {
      if (done[r]) continue;
      const S* row = lg.row_ptr(static_cast<int64_t>(r));
      int32_t best = 0;
      for (int64_t j = 1; j < cfg.vocab_size; ++j)
        if (row[j] > row[best]) best = static_cast<int32_t>(j);
      if (best == Vocab::EOS) {
        done[r] = 1;
        continue;
      }
      gen[r].push_back(best);
      seqs[r].push_back(best);
      if (static_cast<int64_t>(seqs[r].size()) >= cfg.max_pos) done[r] = 1;
    }
  }
  return gen;
}

}  // namespace vaudit
