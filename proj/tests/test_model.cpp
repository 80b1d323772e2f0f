#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "support/oracles.hpp"
#include "vaudit/model.hpp"

using namespace vaudit;

namespace {

Vocab test_vocab() {
  return Vocab({"the", "patient", "reports", "pain", "stable", "summary",
                "cardiac", "renal", "votary", "quell", "brief", "course"});
}

ModelConfig tiny_cfg(const Vocab& v) {
  ModelConfig cfg;
  cfg.vocab_size = v.size();
  cfg.d_model = 16;
  cfg.n_layers = 2;
  cfg.n_heads = 2;
  cfg.d_ffn = 24;
  cfg.max_pos = 48;
  cfg.lora_r = 4;
  cfg.lora_alpha = 8.0;
  cfg.lora_dropout = 0.0;
  cfg.max_prompt = 40;
  cfg.max_total = 46;
  return cfg;
}

}  // namespace

TEST_CASE("tokenizer round-trips single-space text and uses byte fallback") {
  Vocab v = test_vocab();
  std::string text = "the patient zq9 reports pain";
  auto ids = v.encode(text);
  REQUIRE(v.decode(ids) == text);
  // unknown word becomes exactly its bytes
  auto unk = v.encode("zq9");
  REQUIRE(unk.size() == 3);
  for (auto id : unk) {
    REQUIRE(id >= Vocab::BYTE_BASE);
    REQUIRE(id < Vocab::WORD_BASE);
  }
}

TEST_CASE("text tokenizer never produces reserved control ids") {
  Vocab v = test_vocab();
  Rng rng(5);
  for (int rep = 0; rep < 50; ++rep) {
    std::string s;
    for (int i = 0; i < 20; ++i) {
      int c = static_cast<int>(rng.next_below(96)) + 32;
      s += static_cast<char>(c);
    }
    for (int32_t id : v.encode(s)) REQUIRE(id >= Vocab::BYTE_BASE);
  }
  // whitespace-only input encodes to nothing
  REQUIRE(v.encode("  \t \n ").empty());
}

TEST_CASE("prompt rendering emits the delimiter layout and keeps recent context") {
  Vocab v = test_vocab();
  auto ids = render_prompt(v, "summary", "the patient", true, 64);
  std::vector<int32_t> want = {Vocab::BOS,       Vocab::SYS_OPEN,
                               v.encode("summary")[0], Vocab::SYS_CLOSE,
                               Vocab::USER_OPEN, v.encode("the")[0],
                               v.encode("patient")[0], Vocab::USER_CLOSE,
                               Vocab::ASSIST};
  REQUIRE(ids == want);

  SECTION("keep-last truncation drops the oldest context tokens") {
    // context of 6 words, budget forces keeping only the final 2
    std::string ctx = "the patient reports pain stable summary";
    auto full = render_prompt(v, "brief", ctx, false, 64);
    auto cut = render_prompt(v, "brief", ctx, false, static_cast<int64_t>(full.size()) - 4);
    REQUIRE(cut.size() == full.size() - 4);
    std::vector<int32_t> tail(cut.end() - 3, cut.end());
    std::vector<int32_t> want_tail = {v.encode("stable")[0], v.encode("summary")[0],
                                      Vocab::USER_CLOSE};
    REQUIRE(tail == want_tail);
    REQUIRE(cut[0] == Vocab::BOS);
  }

  SECTION("boundary flag changes the render") {
    auto a = render_prompt(v, "brief", "pain", true, 64);
    auto b = render_prompt(v, "brief", "pain", false, 64);
    REQUIRE(a != b);
    REQUIRE(a.back() == Vocab::ASSIST);
    REQUIRE(b.back() == Vocab::USER_CLOSE);
  }
}

TEST_CASE("rendering is injective over instruction, context, and boundary") {
  Vocab v = test_vocab();
  std::vector<std::string> instrs = {"summary", "brief course", "quell"};
  std::vector<std::string> ctxs = {"the patient", "patient the", "the patient pain",
                                   "votary", ""};
  std::set<std::vector<int32_t>> seen;
  int count = 0;
  for (const auto& ins : instrs)
    for (const auto& ctx : ctxs)
      for (bool hdr : {false, true}) {
        seen.insert(render_prompt(v, ins, ctx, hdr, 64));
        ++count;
      }
  REQUIRE(static_cast<int>(seen.size()) == count);
}

TEST_CASE("sft rendering appends target and EOS and caps total length") {
  Vocab v = test_vocab();
  ModelConfig cfg = tiny_cfg(v);
  auto [seq, plen] = render_sft(v, "brief", "the patient reports pain", "stable course",
                                true, cfg);
  REQUIRE(seq.back() == Vocab::EOS);
  REQUIRE(seq[plen] == v.encode("stable")[0]);
  REQUIRE(static_cast<int64_t>(seq.size()) <= cfg.max_total);

  // long context gets squeezed from the front, never the target
  std::string long_ctx;
  for (int i = 0; i < 60; ++i) long_ctx += "pain ";
  auto [seq2, plen2] = render_sft(v, "brief", long_ctx, "stable course", true, cfg);
  REQUIRE(static_cast<int64_t>(seq2.size()) <= cfg.max_total);
  REQUIRE(seq2[seq2.size() - 2] == v.encode("course")[0]);
}

TEST_CASE("batches left-pad, mask pads, and derive positions from the mask") {
  Batch b = make_batch({{9, 10, 11}, {9, 10, 11, 12, 13}});
  REQUIRE(b.T == 5);
  REQUIRE(b.tokens[0] == Vocab::PAD);
  REQUIRE(b.tokens[1] == Vocab::PAD);
  REQUIRE(b.mask[0] == 0);
  REQUIRE(b.mask[2] == 1);
  REQUIRE(b.pos[2] == 0);   // first real token of the padded row
  REQUIRE(b.pos[4] == 2);
  REQUIRE(b.pos[5] == 0);   // second row starts at position 0
  REQUIRE(b.last_real[0] == 4);
  REQUIRE(b.last_real[1] == 9);

  Batch s = make_batch({{1, 9, 10, 11, 2}}, {2});
  // loss on predicting indices >= 2: positions 1..3 predict tokens 10,11,EOS
  REQUIRE(s.tweight == std::vector<uint8_t>({0, 1, 1, 1, 0}));
  REQUIRE(s.targets[1] == 10);
  REQUIRE(s.targets[3] == 2);
}

TEST_CASE("forward pass is invariant to left padding") {
  Vocab v = test_vocab();
  ModelConfig cfg = tiny_cfg(v);
  auto frozen = init_backbone<float>(cfg, 7);
  auto adapters = init_adapters<float>(cfg, 8);
  // make adapters non-trivial so the invariance covers the adapter path
  for (auto& e : adapters.entries)
    if (e.name.find(".B") != std::string::npos) {
      Rng r(3);
      for (auto& x : e.value.data) x = static_cast<float>(r.next_range(-0.1, 0.1));
    }

  auto ids = render_prompt(v, "brief", "the patient reports pain", true, 40);
  int64_t n = static_cast<int64_t>(ids.size());

  Tape<float> t1;
  auto fr1 = bind_params(t1, frozen);
  auto ad1 = bind_params(t1, adapters);
  Batch alone = make_batch({ids});
  auto out1 = forward_model(t1, cfg, fr1, &ad1, alone);

  std::vector<int32_t> longer = render_prompt(
      v, "brief", "the patient reports pain stable summary cardiac renal", true, 40);
  Tape<float> t2;
  auto fr2 = bind_params(t2, frozen);
  auto ad2 = bind_params(t2, adapters);
  Batch padded = make_batch({ids, longer});
  auto out2 = forward_model(t2, cfg, fr2, &ad2, padded);

  int64_t off = padded.T - n;
  for (size_t l = 0; l < out1.blocks.size(); ++l) {
    const auto& a = t1.val(out1.blocks[l]);
    const auto& b = t2.val(out2.blocks[l]);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < cfg.d_model; ++j)
        REQUIRE(b.at(off + i, j) == Catch::Approx(a.at(i, j)).margin(1e-5));
  }
}

TEST_CASE("causal masking: changing a token leaves earlier positions untouched") {
  Vocab v = test_vocab();
  ModelConfig cfg = tiny_cfg(v);
  auto frozen = init_backbone<float>(cfg, 7);

  auto ids = render_prompt(v, "brief", "the patient reports pain stable", true, 40);
  auto mutated = ids;
  size_t flip = ids.size() - 3;
  mutated[flip] = v.encode("quell")[0];

  Tape<float> ta, tb;
  auto fa = bind_params(ta, frozen);
  auto fb = bind_params(tb, frozen);
  auto oa = forward_model(ta, cfg, fa, nullptr, make_batch({ids}));
  auto ob = forward_model(tb, cfg, fb, nullptr, make_batch({mutated}));
  for (size_t l = 0; l < oa.blocks.size(); ++l) {
    const auto& a = ta.val(oa.blocks[l]);
    const auto& b = tb.val(ob.blocks[l]);
    for (size_t i = 0; i < flip; ++i)
      for (int64_t j = 0; j < cfg.d_model; ++j)
        REQUIRE(a.at(static_cast<int64_t>(i), j) == b.at(static_cast<int64_t>(i), j));
    bool differs = false;
    for (int64_t j = 0; j < cfg.d_model; ++j)
      differs |= a.at(static_cast<int64_t>(flip), j) != b.at(static_cast<int64_t>(flip), j);
    REQUIRE(differs);
  }
}

TEST_CASE("zero unembedding gives lm loss of exactly ln V") {
  Vocab v = test_vocab();
  ModelConfig cfg = tiny_cfg(v);
  auto frozen = init_backbone<float>(cfg, 7);
  frozen.get("unembed").fill(0.0f);

  auto [seq, plen] = render_sft(v, "brief", "the patient", "stable", true, cfg);
  Tape<float> t;
  auto fr = bind_params(t, frozen);
  Batch b = make_batch({seq}, {plen});
  auto fwd = forward_model(t, cfg, fr, nullptr, b);
  Var loss = lm_loss(t, cfg, fr, fwd, b);
  REQUIRE(t.val(loss).at(0) ==
          Catch::Approx(std::log(static_cast<float>(cfg.vocab_size))).margin(1e-6));
}

TEST_CASE("inert adapters (B = 0) reproduce the base forward exactly") {
  Vocab v = test_vocab();
  ModelConfig cfg = tiny_cfg(v);
  auto frozen = init_backbone<float>(cfg, 7);
  auto adapters = init_adapters<float>(cfg, 8);

  auto ids = render_prompt(v, "brief", "the patient reports", true, 40);
  Tape<float> ta, tb;
  auto fa = bind_params(ta, frozen);
  auto fb = bind_params(tb, frozen);
  auto ab = bind_params(tb, adapters);
  auto oa = forward_model(ta, cfg, fa, nullptr, make_batch({ids}));
  auto ob = forward_model(tb, cfg, fb, &ab, make_batch({ids}));
  REQUIRE(ta.val(oa.final_norm).data == tb.val(ob.final_norm).data);
}

TEST_CASE("adapter path in eval mode equals a dense effective weight") {
  Vocab v = test_vocab();
  ModelConfig cfg = tiny_cfg(v);
  cfg.n_layers = 1;
  auto frozen = init_backbone<float>(cfg, 7);
  auto adapters = init_adapters<float>(cfg, 8);
  Rng r(9);
  for (auto& e : adapters.entries)
    for (auto& x : e.value.data) x = static_cast<float>(r.next_range(-0.2, 0.2));

  // fold W_eff = W + (alpha/r) B A into a copy of the backbone
  auto folded = frozen;
  float sc = static_cast<float>(cfg.lora_alpha / static_cast<double>(cfg.lora_r));
  for (const char* which : {"q", "v"}) {
    Tensor<float>& w = folded.get(std::string("blk0.w") + which);
    const Tensor<float>& A = adapters.get(std::string("blk0.lora_") + which + ".A");
    const Tensor<float>& B = adapters.get(std::string("blk0.lora_") + which + ".B");
    for (int64_t o = 0; o < cfg.d_model; ++o)
      for (int64_t i = 0; i < cfg.d_model; ++i) {
        float acc = 0;
        for (int64_t rr = 0; rr < cfg.lora_r; ++rr) acc += B.at(o, rr) * A.at(rr, i);
        w.at(o, i) += sc * acc;
      }
  }

  auto ids = render_prompt(v, "brief", "the patient reports pain", true, 40);
  Tape<float> ta, tb;
  auto fa = bind_params(ta, frozen);
  auto aa = bind_params(ta, adapters);
  auto fb = bind_params(tb, folded);
  auto oa = forward_model(ta, cfg, fa, &aa, make_batch({ids}));
  auto ob = forward_model(tb, cfg, fb, nullptr, make_batch({ids}));
  const auto& x = ta.val(oa.final_norm);
  const auto& y = tb.val(ob.final_norm);
  for (int64_t i = 0; i < x.numel(); ++i)
    REQUIRE(x.at(i) == Catch::Approx(y.at(i)).margin(1e-5));
}

TEST_CASE("model gradients through adapters match finite differences") {
  Vocab v = test_vocab();
  ModelConfig cfg = tiny_cfg(v);
  auto frozen = init_backbone<double>(cfg, 7);
  auto adapters = init_adapters<double>(cfg, 8);
  Rng r(10);
  for (auto& e : adapters.entries)
    for (auto& x : e.value.data) x = r.next_range(-0.1, 0.1);

  auto [s1, p1] = render_sft(v, "brief", "the patient reports pain", "stable", true, cfg);
  auto [s2, p2] = render_sft(v, "brief", "cardiac renal votary", "quell course", true, cfg);
  Batch b = make_batch({s1, s2}, {p1, p2});

  auto loss_of = [&](const ParamStore<double>& ad) {
    Tape<double> t;
    auto fr = bind_params(t, frozen);
    auto av = bind_params(t, ad);
    auto fwd = forward_model(t, cfg, fr, &av, b);
    return t.val(lm_loss(t, cfg, fr, fwd, b)).at(0);
  };

  Tape<double> t;
  auto fr = bind_params(t, frozen);
  auto av = bind_params(t, adapters);
  auto fwd = forward_model(t, cfg, fr, &av, b);
  Var loss = lm_loss(t, cfg, fr, fwd, b);
  t.backward(loss);

  for (const std::string name : {"blk0.lora_q.A", "blk0.lora_v.B", "blk1.lora_q.B"}) {
    const Tensor<double>& g = t.grad(av.at(name));
    Tensor<double> fd(g.shape);
    auto pert = adapters;
    Tensor<double>& tv = pert.get(name);
    const double h = 1e-5;
    for (int64_t i = 0; i < tv.numel(); ++i) {
      double keep = tv.at(i);
      tv.at(i) = keep + h;
      double up = loss_of(pert);
      tv.at(i) = keep - h;
      double dn = loss_of(pert);
      tv.at(i) = keep;
      fd.at(i) = (up - dn) / (2 * h);
    }
    REQUIRE(oracles::rel_err(g, fd) < 1e-6);
  }
}

TEST_CASE("greedy decode stops on EOS and resolves argmax ties to lowest id") {
  Vocab v = test_vocab();
  ModelConfig cfg = tiny_cfg(v);
  auto frozen = init_backbone<float>(cfg, 7);
  auto prompt = render_prompt(v, "brief", "the patient", true, 40);

  SECTION("all-equal logits emit the lowest id repeatedly") {
    frozen.get("unembed").fill(0.0f);
    auto gen = greedy_decode<float>(cfg, frozen, nullptr, {prompt}, 3);
    REQUIRE(gen[0] == std::vector<int32_t>({0, 0, 0}));
  }
  SECTION("a dominant EOS forces an immediate stop") {
    frozen.get("unembed").fill(0.0f);
    // bias the EOS row so its logit is strictly largest everywhere
    for (int64_t j = 0; j < cfg.d_model; ++j)
      frozen.get("unembed").at(Vocab::EOS, j) = 10.0f;
    auto gen = greedy_decode<float>(cfg, frozen, nullptr, {prompt}, 5);
    REQUIRE(gen[0].empty());
  }
}

TEST_CASE("decode batches mixed prompt lengths deterministically") {
  Vocab v = test_vocab();
  ModelConfig cfg = tiny_cfg(v);
  auto frozen = init_backbone<float>(cfg, 7);
  auto p1 = render_prompt(v, "brief", "the patient reports pain", true, 40);
  auto p2 = render_prompt(v, "brief", "cardiac", true, 40);
  auto g1 = greedy_decode<float>(cfg, frozen, nullptr, {p1, p2}, 6);
  auto g2 = greedy_decode<float>(cfg, frozen, nullptr, {p1, p2}, 6);
  REQUIRE(g1 == g2);
  // batch composition does not change an individual row's output
  auto solo = greedy_decode<float>(cfg, frozen, nullptr, {p1}, 6);
  REQUIRE(solo[0] == g1[0]);
}
