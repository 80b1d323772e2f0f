// artifacts.hpp -- exported prompt-vector artifacts. Six kinds: {lasttok,
// meanpool} pooling over {last block, second-to-last block, mean of the last
// four blocks}. Pooling happens after the optional layer average and never
// changes dimensionality. The tape-side builder and the value-side extractor
// follow the same summation order, so the training-time adversary and the
// post-hoc audit see bitwise-identical vectors for the same forward pass.
#pragma once

#include <array>
#include <string>
#include <vector>

#include "vaudit/autodiff.hpp"
#include "vaudit/corpus.hpp"
#include "vaudit/model.hpp"

namespace vaudit {

enum class Pooling : int32_t { lasttok = 0, meanpool = 1 };
enum class LayerSpec : int32_t { last = 0, second_last = 1, last4_mean = 2 };

struct ArtifactKind {
  Pooling pool = Pooling::lasttok;
  LayerSpec layer = LayerSpec::last;

  std::string str() const {
    std::string p = pool == Pooling::lasttok ? "lasttok" : "meanpool";
    const char* l = layer == LayerSpec::last        ? "L-1"
                    : layer == LayerSpec::second_last ? "L-2"
                                                      : "L-4mean";
    return p + "_" + l;
  }
  bool operator==(const ArtifactKind& o) const {
    return pool == o.pool && layer == o.layer;
  }
};

inline const std::array<ArtifactKind, 6>& all_artifact_kinds() {
  static const std::array<ArtifactKind, 6> k = {{
      {Pooling::lasttok, LayerSpec::last},
      {Pooling::lasttok, LayerSpec::second_last},
      {Pooling::lasttok, LayerSpec::last4_mean},
      {Pooling::meanpool, LayerSpec::last},
      {Pooling::meanpool, LayerSpec::second_last},
      {Pooling::meanpool, LayerSpec::last4_mean},
  }};
  return k;
}

inline ArtifactKind parse_artifact_kind(const std::string& s) {
  for (const auto& k : all_artifact_kinds())
    if (k.str() == s) return k;
  fail("E_CONFIG", "unknown artifact kind: " + s);
}

// ------------------------------------------------------------- tape builder

// pooled artifact as a differentiable node; used by the adversarial branch
template <class S>
Var artifact_on_tape(Tape<S>& t, const ForwardOut<S>& fwd, const Batch& b,
                     ArtifactKind kind) {
  int64_t L = static_cast<int64_t>(fwd.blocks.size());
  Var src;
  switch (kind.layer) {
    case LayerSpec::last: src = fwd.blocks[L - 1]; break;
    case LayerSpec::second_last:
      if (L < 2) fail("E_CONFIG", "layer spec L-2 needs at least 2 blocks");
      src = fwd.blocks[L - 2];
      break;
    case LayerSpec::last4_mean: {
      if (L < 4) fail("E_CONFIG", "layer spec L-4mean needs at least 4 blocks");
      Var acc = t.add(fwd.blocks[L - 4], fwd.blocks[L - 3]);
      acc = t.add(acc, fwd.blocks[L - 2]);
      acc = t.add(acc, fwd.blocks[L - 1]);
      src = t.scale(acc, S(0.25));
      break;
    }
  }
  if (kind.pool == Pooling::lasttok) return t.rows_select(src, b.last_real);
  return t.masked_mean_rows(src, b.mask, b.B, b.T);
}

// ------------------------------------------------------- value-side extract

// reference pooling over raw block states; blocks[l] is [B*T, d]
template <class S>
Tensor<S> extract_artifact(const std::vector<Tensor<S>>& blocks, const Batch& b,
                           ArtifactKind kind) {
  int64_t L = static_cast<int64_t>(blocks.size());
  int64_t d = blocks[0].cols();
  Tensor<S> src;
  switch (kind.layer) {
    case LayerSpec::last: src = blocks[L - 1]; break;
    case LayerSpec::second_last:
      if (L < 2) fail("E_CONFIG", "layer spec L-2 needs at least 2 blocks");
      src = blocks[L - 2];
      break;
    case LayerSpec::last4_mean: {
      if (L < 4) fail("E_CONFIG", "layer spec L-4mean needs at least 4 blocks");
      src = blocks[L - 4];
      for (int64_t l = L - 3; l < L; ++l)
        for (int64_t i = 0; i < src.numel(); ++i) src.data[i] += blocks[l].data[i];
      for (int64_t i = 0; i < src.numel(); ++i) src.data[i] *= S(0.25);
      break;
    }
  }
  Tensor<S> out = Tensor<S>::zeros({b.B, d});
  for (int64_t r = 0; r < b.B; ++r) {
    if (kind.pool == Pooling::lasttok) {
      const S* p = src.row_ptr(b.last_real[r]);
      if (!b.mask[static_cast<size_t>(b.last_real[r])])
        fail("E_DATA", "artifact extraction on an all-pad row");
      for (int64_t j = 0; j < d; ++j) out.at(r, j) = p[j];
    } else {
      int64_t c = 0;
      for (int64_t i = 0; i < b.T; ++i)
        if (b.mask[static_cast<size_t>(r * b.T + i)]) {
          const S* p = src.row_ptr(r * b.T + i);
          for (int64_t j = 0; j < d; ++j) out.at(r, j) += p[j];
          ++c;
        }
      if (c == 0) fail("E_DATA", "artifact extraction on an all-pad row");
      for (int64_t j = 0; j < d; ++j) out.at(r, j) /= S(c);
    }
  }
  return out;
}

// --------------------------------------------------------------- vector sets

struct ArtifactSet {
  std::string kind;
  int64_t d = 0;
  Tensor<float> x;  // [n, d]
  std::vector<uint32_t> labels;
  std::vector<uint64_t> subject_ids;

  int64_t n() const { return static_cast<int64_t>(labels.size()); }
};

// full-corpus extraction with prompt-only forwards, batched
inline ArtifactSet extract_dataset(const ModelConfig& cfg,
                                   const ParamStore<float>& frozen,
                                   const ParamStore<float>* adapters,
                                   const Vocab& vocab,
                                   const std::string& instruction,
                                   const std::vector<Record>& records,
                                   ArtifactKind kind, int64_t batch_size = 8) {
  if (records.empty()) fail("E_DATA", "no records to extract from");
  ArtifactSet out;
  out.kind = kind.str();
  out.d = cfg.d_model;
  out.x = Tensor<float>::zeros({static_cast<int64_t>(records.size()), cfg.d_model});
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
    ForwardOut<float> fwd =
        forward_model<float>(t, cfg, fr, adapters ? &ad : nullptr, b);
    Var z = artifact_on_tape(t, fwd, b, kind);
    const Tensor<float>& zv = t.val(z);
    for (int64_t r = 0; r < b.B; ++r, ++row)
      for (int64_t j = 0; j < cfg.d_model; ++j) out.x.at(row, j) = zv.at(r, j);
    for (size_t i = at; i < hi; ++i) {
      if (records[i].label < 0) fail("E_DATA", "record with negative label");
      out.labels.push_back(static_cast<uint32_t>(records[i].label));
      out.subject_ids.push_back(records[i].subject_id);
    }
  }
  return out;
}

// ----------------------------------------------------------------- VAUD file

// magic "VAUD", u32 version=1, kind string, u32 d, u64 n,
// n*d little-endian f32 rows, n u32 labels, n u64 subject_ids
inline void write_vaud(const std::string& path, const ArtifactSet& a) {
  if (a.x.rows() != a.n() ||
      static_cast<int64_t>(a.subject_ids.size()) != a.n() ||
      (a.n() > 0 && a.x.cols() != a.d))
    fail("E_STATE", "inconsistent artifact set");
  BinWriter w(path);
  w.magic("VAUD");
  w.u32(1);
  w.str(a.kind);
  w.u32(static_cast<uint32_t>(a.d));
  w.u64(static_cast<uint64_t>(a.n()));
  w.f32s(a.x.data.data(), static_cast<size_t>(a.n() * a.d));
  w.u32s(a.labels.data(), a.labels.size());
  w.u64s(a.subject_ids.data(), a.subject_ids.size());
  w.close();
}

inline ArtifactSet read_vaud(const std::string& path) {
  BinReader r(path);
  r.expect_magic("VAUD");
  uint32_t version = r.u32();
  if (version != 1)
    fail("E_IO", path + ": unsupported vector file version " + std::to_string(version));
  ArtifactSet a;
  a.kind = r.str();
  parse_artifact_kind(a.kind);
  a.d = static_cast<int64_t>(r.u32());
  uint64_t n = r.u64();
  a.x = Tensor<float>::zeros({static_cast<int64_t>(n), a.d});
  r.f32s(a.x.data.data(), static_cast<size_t>(n) * static_cast<size_t>(a.d));
  a.labels.resize(n);
  a.subject_ids.resize(n);
  if (n) {
    r.u32s(a.labels.data(), n);
    r.u64s(a.subject_ids.data(), n);
  }
  if (!r.at_eof()) fail("E_IO", path + ": trailing bytes after vector data");
  for (float v : a.x.data)
    if (!std::isfinite(v)) fail("E_IO", path + ": non-finite vector entry");
  return a;
}

}  // namespace vaudit
