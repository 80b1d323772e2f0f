// autodiff.hpp -- define-by-run reverse-mode tape over dense tensors.
// Nodes are created by tape methods; backward() replays registered closures
// in reverse creation order. Scalar type is a template parameter so tests can
// instantiate double against finite differences while pipelines run float.
#pragma once

#include <cmath>
#include <functional>
#include <memory>

#include "vaudit/tensor.hpp"

namespace vaudit {

struct Var {
  int32_t id = -1;
};

template <class S = float>
class Tape {
 public:
  // ------------------------------------------------------------- plumbing
  Var leaf(Tensor<S> v, bool needs_grad = false) {
    return push(std::move(v), needs_grad, nullptr);
  }
  Var constant(Tensor<S> v) { return leaf(std::move(v), false); }

  const Tensor<S>& val(Var v) const { return nodes_[v.id].val; }
  bool needs_grad(Var v) const { return nodes_[v.id].needs; }

  // zero tensor if the node never received gradient
  const Tensor<S>& grad(Var v) {
    ensure_grad(v.id);
    return nodes_[v.id].grad;
  }

  void backward(Var loss) {
    if (nodes_[loss.id].val.numel() != 1)
      fail("E_STATE", "backward expects a scalar loss");
    ensure_grad(loss.id);
    nodes_[loss.id].grad.data[0] = S(1);
    for (int32_t i = loss.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.back && n.needs && n.grad_init) n.back(*this, i);
    }
  }

  size_t size() const { return nodes_.size(); }

  // ------------------------------------------------------------- arithmetic
  Var add(Var a, Var b) {
    const auto &av = val(a), &bv = val(b);
    Tensor<S> out = av;
    out.add_inplace(bv);
    return push(std::move(out), needs(a, b), [a, b](Tape& t, int32_t self) {
      const auto& g = t.nodes_[self].grad;
      if (t.needs_grad(a)) t.grad_buf(a).add_inplace(g);
      if (t.needs_grad(b)) t.grad_buf(b).add_inplace(g);
    });
  }

  // a + c * b
  Var add_scaled(Var a, Var b, S c) {
    const auto &av = val(a), &bv = val(b);
    Tensor<S> out = av;
    for (int64_t i = 0; i < out.numel(); ++i) out.at(i) += c * bv.at(i);
    return push(std::move(out), needs(a, b), [a, b, c](Tape& t, int32_t self) {
      const auto& g = t.nodes_[self].grad;
      if (t.needs_grad(a)) t.grad_buf(a).add_inplace(g);
      if (t.needs_grad(b)) {
        auto& gb = t.grad_buf(b);
        for (int64_t i = 0; i < gb.numel(); ++i) gb.at(i) += c * g.at(i);
      }
    });
  }

  Var scale(Var a, S c) {
    Tensor<S> out = val(a);
    out.scale_inplace(c);
    return push(std::move(out), needs(a), [a, c](Tape& t, int32_t self) {
      const auto& g = t.nodes_[self].grad;
      if (!t.needs_grad(a)) return;
      auto& ga = t.grad_buf(a);
      for (int64_t i = 0; i < ga.numel(); ++i) ga.at(i) += c * g.at(i);
    });
  }

  // y (N,M) = x (N,M) + bias (M) per row
  Var add_rowbias(Var x, Var bias) {
    const auto &xv = val(x), &bv = val(bias);
    Tensor<S> out = xv;
    int64_t n = xv.rows(), m = xv.cols();
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < m; ++j) out.at(i, j) += bv.at(j);
    return push(std::move(out), needs(x, bias), [x, bias, n, m](Tape& t, int32_t self) {
      const auto& g = t.nodes_[self].grad;
      if (t.needs_grad(x)) t.grad_buf(x).add_inplace(g);
      if (t.needs_grad(bias)) {
        auto& gb = t.grad_buf(bias);
        for (int64_t i = 0; i < n; ++i)
          for (int64_t j = 0; j < m; ++j) gb.at(j) += g.at(i, j);
      }
    });
  }

  // op(a) * op(b); shapes inferred from ta/tb
  Var matmul(Var a, Var b, bool ta = false, bool tb = false) {
    const auto &av = val(a), &bv = val(b);
    int64_t n = ta ? av.shape[1] : av.shape[0];
    int64_t k = ta ? av.shape[0] : av.shape[1];
    int64_t kb = tb ? bv.shape[1] : bv.shape[0];
    int64_t m = tb ? bv.shape[0] : bv.shape[1];
    if (k != kb) fail("E_STATE", "matmul inner dim mismatch");
    Tensor<S> out({n, m});
    gemm_acc(ta, tb, n, m, k, av.data.data(), bv.data.data(), out.data.data());
    return push(std::move(out), needs(a, b), [a, b, ta, tb, n, m, k](Tape& t, int32_t self) {
      const auto& g = t.nodes_[self].grad;
      const auto &av2 = t.val(a), &bv2 = t.val(b);
      if (t.needs_grad(a)) {
        auto& ga = t.grad_buf(a);
        if (!ta)  // dA = dY * op(B)^T
          gemm_acc(false, !tb, n, k, m, g.data.data(), bv2.data.data(), ga.data.data());
        else      // A used transposed: dA^T = op(B) * dY^T -> dA = (dY * op(B)^T)^T
          gemm_acc(tb, true, k, n, m, bv2.data.data(), g.data.data(), ga.data.data());
      }
      if (t.needs_grad(b)) {
        auto& gb = t.grad_buf(b);
        if (!tb)  // dB = op(A)^T * dY
          gemm_acc(!ta, false, k, m, n, av2.data.data(), g.data.data(), gb.data.data());
        else      // dB = dY^T * op(A)
          gemm_acc(true, ta, m, k, n, g.data.data(), av2.data.data(), gb.data.data());
      }
    });
  }

  // ------------------------------------------------------------ activations
  Var gelu(Var a) {
    const auto& av = val(a);
    Tensor<S> out = av;
    for (auto& v : out.data) v = gelu_fwd(v);
    return push(std::move(out), needs(a), [a](Tape& t, int32_t self) {
      if (!t.needs_grad(a)) return;
      const auto& g = t.nodes_[self].grad;
      const auto& xin = t.val(a);
      auto& ga = t.grad_buf(a);
      for (int64_t i = 0; i < ga.numel(); ++i)
        ga.at(i) += g.at(i) * gelu_bwd(xin.at(i));
    });
  }

  Var relu(Var a) {
    const auto& av = val(a);
    Tensor<S> out = av;
    for (auto& v : out.data)
      if (v < S(0)) v = S(0);
    return push(std::move(out), needs(a), [a](Tape& t, int32_t self) {
      if (!t.needs_grad(a)) return;
      const auto& g = t.nodes_[self].grad;
      const auto& xin = t.val(a);
      auto& ga = t.grad_buf(a);
      for (int64_t i = 0; i < ga.numel(); ++i)
        if (xin.at(i) > S(0)) ga.at(i) += g.at(i);
    });
  }

  // y = gain (.) xhat + bias per row; xhat = (x - mu) / sqrt(var + eps)
  Var layernorm(Var x, Var gain, Var bias, S eps = S(1e-5)) {
    const auto &xv = val(x), &gv = val(gain), &bv = val(bias);
    int64_t n = xv.rows(), d = xv.cols();
    auto xhat = std::make_shared<Tensor<S>>(std::vector<int64_t>{n, d});
    auto istd = std::make_shared<std::vector<S>>(static_cast<size_t>(n));
    Tensor<S> out({n, d});
    for (int64_t i = 0; i < n; ++i) {
      S mu = 0;
      for (int64_t j = 0; j < d; ++j) mu += xv.at(i, j);
      mu /= S(d);
      S var = 0;
      for (int64_t j = 0; j < d; ++j) {
        S c = xv.at(i, j) - mu;
        var += c * c;
      }
      var /= S(d);
      S is = S(1) / std::sqrt(var + eps);
      (*istd)[i] = is;
      for (int64_t j = 0; j < d; ++j) {
        S xh = (xv.at(i, j) - mu) * is;
        xhat->at(i, j) = xh;
        out.at(i, j) = gv.at(j) * xh + bv.at(j);
      }
    }
    return push(std::move(out), needs(x, gain, bias),
                [x, gain, bias, xhat, istd, n, d](Tape& t, int32_t self) {
      const auto& g = t.nodes_[self].grad;
      const auto& gv2 = t.val(gain);
      if (t.needs_grad(gain)) {
        auto& gg = t.grad_buf(gain);
        for (int64_t i = 0; i < n; ++i)
          for (int64_t j = 0; j < d; ++j) gg.at(j) += g.at(i, j) * xhat->at(i, j);
      }
      if (t.needs_grad(bias)) {
        auto& gb = t.grad_buf(bias);
        for (int64_t i = 0; i < n; ++i)
          for (int64_t j = 0; j < d; ++j) gb.at(j) += g.at(i, j);
      }
      if (t.needs_grad(x)) {
        auto& gx = t.grad_buf(x);
        for (int64_t i = 0; i < n; ++i) {
          S m1 = 0, m2 = 0;
          for (int64_t j = 0; j < d; ++j) {
            S dy = g.at(i, j) * gv2.at(j);
            m1 += dy;
            m2 += dy * xhat->at(i, j);
          }
          m1 /= S(d);
          m2 /= S(d);
          for (int64_t j = 0; j < d; ++j) {
            S dy = g.at(i, j) * gv2.at(j);
            gx.at(i, j) += (dy - m1 - xhat->at(i, j) * m2) * (*istd)[i];
          }
        }
      }
    });
  }

  // inverted dropout; p == 0 returns the input node unchanged
  Var dropout(Var x, double p, Rng& rng) {
    if (p <= 0.0) return x;
    const auto& xv = val(x);
    auto mask = std::make_shared<std::vector<uint8_t>>(xv.data.size());
    S keep = S(1.0 - p);
    Tensor<S> out = xv;
    for (size_t i = 0; i < out.data.size(); ++i) {
      bool on = rng.next_f64() >= p;
      (*mask)[i] = on;
      out.data[i] = on ? out.data[i] / keep : S(0);
    }
    return push(std::move(out), needs(x), [x, mask, keep](Tape& t, int32_t self) {
      if (!t.needs_grad(x)) return;
      const auto& g = t.nodes_[self].grad;
      auto& gx = t.grad_buf(x);
      for (int64_t i = 0; i < gx.numel(); ++i)
        if ((*mask)[i]) gx.at(i) += g.at(i) / keep;
    });
  }

  // identity forward; multiplies upstream gradient by -lambda
  Var grad_reverse(Var x, S lambda) {
    Tensor<S> out = val(x);
    return push(std::move(out), needs(x), [x, lambda](Tape& t, int32_t self) {
      if (!t.needs_grad(x)) return;
      const auto& g = t.nodes_[self].grad;
      auto& gx = t.grad_buf(x);
      for (int64_t i = 0; i < gx.numel(); ++i) gx.at(i) += -lambda * g.at(i);
    });
  }

  // ------------------------------------------------------------- structure
  // gather rows of an embedding table; ids < 0 produce zero rows
  Var embed_rows(Var table, std::vector<int32_t> ids) {
    const auto& ev = val(table);
    int64_t d = ev.cols(), n = static_cast<int64_t>(ids.size());
    Tensor<S> out({n, d});
    for (int64_t i = 0; i < n; ++i) {
      if (ids[i] < 0) continue;
      const S* src = ev.row_ptr(ids[i]);
      S* dst = out.row_ptr(i);
      for (int64_t j = 0; j < d; ++j) dst[j] = src[j];
    }
    auto idp = std::make_shared<std::vector<int32_t>>(std::move(ids));
    return push(std::move(out), needs(table), [table, idp, d](Tape& t, int32_t self) {
      if (!t.needs_grad(table)) return;
      const auto& g = t.nodes_[self].grad;
      auto& gt = t.grad_buf(table);
      for (size_t i = 0; i < idp->size(); ++i) {
        if ((*idp)[i] < 0) continue;
        S* dst = gt.row_ptr((*idp)[i]);
        const S* src = g.row_ptr(static_cast<int64_t>(i));
        for (int64_t j = 0; j < d; ++j) dst[j] += src[j];
      }
    });
  }

  Var rows_select(Var x, std::vector<int64_t> idx) {
    const auto& xv = val(x);
    int64_t d = xv.cols(), n = static_cast<int64_t>(idx.size());
    Tensor<S> out({n, d});
    for (int64_t i = 0; i < n; ++i) {
      const S* src = xv.row_ptr(idx[i]);
      for (int64_t j = 0; j < d; ++j) out.at(i, j) = src[j];
    }
    auto ip = std::make_shared<std::vector<int64_t>>(std::move(idx));
    return push(std::move(out), needs(x), [x, ip, d](Tape& t, int32_t self) {
      if (!t.needs_grad(x)) return;
      const auto& g = t.nodes_[self].grad;
      auto& gx = t.grad_buf(x);
      for (size_t i = 0; i < ip->size(); ++i) {
        S* dst = gx.row_ptr((*ip)[i]);
        for (int64_t j = 0; j < d; ++j) dst[j] += g.at(static_cast<int64_t>(i), j);
      }
    });
  }

  // per batch element: mean over rows with mask==1 (B,T layout flattened)
  Var masked_mean_rows(Var x, std::vector<uint8_t> mask, int64_t B, int64_t T) {
    const auto& xv = val(x);
    int64_t d = xv.cols();
    Tensor<S> out({B, d});
    auto counts = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(B), 0);
    auto mp = std::make_shared<std::vector<uint8_t>>(std::move(mask));
    for (int64_t b = 0; b < B; ++b) {
      int64_t c = 0;
      for (int64_t i = 0; i < T; ++i)
        if ((*mp)[b * T + i]) {
          const S* src = xv.row_ptr(b * T + i);
          for (int64_t j = 0; j < d; ++j) out.at(b, j) += src[j];
          ++c;
        }
      (*counts)[b] = c;
      if (c > 0)
        for (int64_t j = 0; j < d; ++j) out.at(b, j) /= S(c);
    }
    return push(std::move(out), needs(x), [x, mp, counts, B, T, d](Tape& t, int32_t self) {
      if (!t.needs_grad(x)) return;
      const auto& g = t.nodes_[self].grad;
      auto& gx = t.grad_buf(x);
      for (int64_t b = 0; b < B; ++b) {
        if ((*counts)[b] == 0) continue;
        S inv = S(1) / S((*counts)[b]);
        for (int64_t i = 0; i < T; ++i)
          if ((*mp)[b * T + i]) {
            S* dst = gx.row_ptr(b * T + i);
            for (int64_t j = 0; j < d; ++j) dst[j] += g.at(b, j) * inv;
          }
      }
    });
  }

  // causal multi-head attention with key-side padding mask. q,k,v are
  // (B*T, d) with d = H*hd. Pad queries emit zero rows.
  Var attention(Var q, Var k, Var v, int64_t B, int64_t T, int64_t H,
                std::vector<uint8_t> mask) {
    const auto &qv = val(q), &kv = val(k), &vv = val(v);
    int64_t d = qv.cols(), hd = d / H;
    if (hd * H != d) fail("E_STATE", "attention: head count does not divide width");
    S sc = S(1) / std::sqrt(S(hd));
    auto mp = std::make_shared<std::vector<uint8_t>>(std::move(mask));
    auto probs = std::make_shared<std::vector<S>>(static_cast<size_t>(B * H * T * T), S(0));
    Tensor<S> out({B * T, d});
    for (int64_t b = 0; b < B; ++b)
      for (int64_t h = 0; h < H; ++h) {
        S* pb = probs->data() + (b * H + h) * T * T;
        for (int64_t i = 0; i < T; ++i) {
          if (!(*mp)[b * T + i]) continue;
          const S* qi = qv.row_ptr(b * T + i) + h * hd;
          S mx = -std::numeric_limits<S>::infinity();
          for (int64_t j = 0; j <= i; ++j) {
            if (!(*mp)[b * T + j]) continue;
            const S* kj = kv.row_ptr(b * T + j) + h * hd;
            S s = 0;
            for (int64_t c = 0; c < hd; ++c) s += qi[c] * kj[c];
            s *= sc;
            pb[i * T + j] = s;
            if (s > mx) mx = s;
          }
          S z = 0;
          for (int64_t j = 0; j <= i; ++j) {
            if (!(*mp)[b * T + j]) continue;
            S e = std::exp(pb[i * T + j] - mx);
            pb[i * T + j] = e;
            z += e;
          }
          S* oi = out.row_ptr(b * T + i) + h * hd;
          for (int64_t j = 0; j <= i; ++j) {
            if (!(*mp)[b * T + j]) continue;
            S p = pb[i * T + j] / z;
            pb[i * T + j] = p;
            const S* vj = vv.row_ptr(b * T + j) + h * hd;
            for (int64_t c = 0; c < hd; ++c) oi[c] += p * vj[c];
          }
        }
      }
    return push(std::move(out), needs(q, k) || needs(v),
                [q, k, v, B, T, H, hd, sc, mp, probs](Tape& t, int32_t self) {
      const auto& g = t.nodes_[self].grad;
      const auto &qv2 = t.val(q), &kv2 = t.val(k), &vv2 = t.val(v);
      bool nq = t.needs_grad(q), nk = t.needs_grad(k), nv = t.needs_grad(v);
      Tensor<S>* gq = nq ? &t.grad_buf(q) : nullptr;
      Tensor<S>* gk = nk ? &t.grad_buf(k) : nullptr;
      Tensor<S>* gv = nv ? &t.grad_buf(v) : nullptr;
      std::vector<S> dp(static_cast<size_t>(T));
      for (int64_t b = 0; b < B; ++b)
        for (int64_t h = 0; h < H; ++h) {
          const S* pb = probs->data() + (b * H + h) * T * T;
          for (int64_t i = 0; i < T; ++i) {
            if (!(*mp)[b * T + i]) continue;
            const S* go = g.row_ptr(b * T + i) + h * hd;
            const S* qi = qv2.row_ptr(b * T + i) + h * hd;
            S common = 0;
            for (int64_t j = 0; j <= i; ++j) {
              if (!(*mp)[b * T + j]) continue;
              const S* vj = vv2.row_ptr(b * T + j) + h * hd;
              S dpj = 0;
              for (int64_t c = 0; c < hd; ++c) dpj += go[c] * vj[c];
              dp[j] = dpj;
              common += pb[i * T + j] * dpj;
              if (nv) {
                S* gvj = gv->row_ptr(b * T + j) + h * hd;
                S p = pb[i * T + j];
                for (int64_t c = 0; c < hd; ++c) gvj[c] += p * go[c];
              }
            }
            if (!nq && !nk) continue;
            for (int64_t j = 0; j <= i; ++j) {
              if (!(*mp)[b * T + j]) continue;
              S ds = pb[i * T + j] * (dp[j] - common) * sc;
              if (ds == S(0)) continue;
              const S* kj = kv2.row_ptr(b * T + j) + h * hd;
              if (nq) {
                S* gqi = gq->row_ptr(b * T + i) + h * hd;
                for (int64_t c = 0; c < hd; ++c) gqi[c] += ds * kj[c];
              }
              if (nk) {
                S* gkj = gk->row_ptr(b * T + j) + h * hd;
                for (int64_t c = 0; c < hd; ++c) gkj[c] += ds * qi[c];
              }
            }
          }
        }
    });
  }

  // mean token-level cross entropy over rows with weight 1
  Var ce_mean(Var logits, std::vector<int32_t> targets, std::vector<uint8_t> weights) {
    const auto& lv = val(logits);
    int64_t n = lv.rows(), vdim = lv.cols();
    auto tp = std::make_shared<std::vector<int32_t>>(std::move(targets));
    auto wp = std::make_shared<std::vector<uint8_t>>(std::move(weights));
    auto probs = std::make_shared<Tensor<S>>(std::vector<int64_t>{n, vdim});
    int64_t m = 0;
    double loss = 0;
    for (int64_t i = 0; i < n; ++i) {
      if (!(*wp)[i]) continue;
      ++m;
      const S* row = lv.row_ptr(i);
      S mx = row[0];
      for (int64_t j = 1; j < vdim; ++j)
        if (row[j] > mx) mx = row[j];
      S z = 0;
      for (int64_t j = 0; j < vdim; ++j) z += std::exp(row[j] - mx);
      S lse = mx + std::log(z);
      loss += static_cast<double>(lse - row[(*tp)[i]]);
      S* pr = probs->row_ptr(i);
      for (int64_t j = 0; j < vdim; ++j) pr[j] = std::exp(row[j] - lse);
    }
    if (m == 0) fail("E_STATE", "ce_mean: no weighted rows");
    Tensor<S> out = Tensor<S>::scalar(static_cast<S>(loss / m));
    return push(std::move(out), needs(logits),
                [logits, tp, wp, probs, m, n, vdim](Tape& t, int32_t self) {
      if (!t.needs_grad(logits)) return;
      S g = t.nodes_[self].grad.data[0];
      auto& gl = t.grad_buf(logits);
      S inv = g / S(m);
      for (int64_t i = 0; i < n; ++i) {
        if (!(*wp)[i]) continue;
        const S* pr = probs->row_ptr(i);
        S* gr = gl.row_ptr(i);
        for (int64_t j = 0; j < vdim; ++j) gr[j] += inv * pr[j];
        gr[(*tp)[i]] -= inv;
      }
    });
  }

  // scalar sum_i x_i * w_i against a fixed tensor
  Var dot_const(Var x, const Tensor<S>& w) {
    const auto& xv = val(x);
    S s = 0;
    for (int64_t i = 0; i < xv.numel(); ++i) s += xv.at(i) * w.at(i);
    auto wp = std::make_shared<Tensor<S>>(w);
    return push(Tensor<S>::scalar(s), needs(x), [x, wp](Tape& t, int32_t self) {
      if (!t.needs_grad(x)) return;
      S g = t.nodes_[self].grad.data[0];
      auto& gx = t.grad_buf(x);
      for (int64_t i = 0; i < gx.numel(); ++i) gx.at(i) += g * wp->at(i);
    });
  }

  // 0.5 * ||C||_F^2 with C = (1/n) Zc^T Yc; y given as one-hot rows
  Var xcov_half_sqfro(Var z, const Tensor<S>& y_onehot) {
    const auto& zv = val(z);
    int64_t n = zv.rows(), d = zv.cols(), kk = y_onehot.cols();
    auto yc = std::make_shared<Tensor<S>>(y_onehot);
    for (int64_t j = 0; j < kk; ++j) {
      S mu = 0;
      for (int64_t i = 0; i < n; ++i) mu += yc->at(i, j);
      mu /= S(n);
      for (int64_t i = 0; i < n; ++i) yc->at(i, j) -= mu;
    }
    Tensor<S> zc = zv;
    for (int64_t j = 0; j < d; ++j) {
      S mu = 0;
      for (int64_t i = 0; i < n; ++i) mu += zc.at(i, j);
      mu /= S(n);
      for (int64_t i = 0; i < n; ++i) zc.at(i, j) -= mu;
    }
    auto c = std::make_shared<Tensor<S>>(std::vector<int64_t>{d, kk});
    gemm_acc(true, false, d, kk, n, zc.data.data(), yc->data.data(), c->data.data());
    c->scale_inplace(S(1) / S(n));
    S half_sq = 0;
    for (auto cv : c->data) half_sq += cv * cv;
    half_sq *= S(0.5);
    return push(Tensor<S>::scalar(half_sq), needs(z), [z, yc, c, n, d, kk](Tape& t, int32_t self) {
      if (!t.needs_grad(z)) return;
      S g = t.nodes_[self].grad.data[0];
      // dZc = (1/n) Yc C^T, then column-center to undo the mean subtraction
      Tensor<S> dzc({n, d});
      gemm_acc(false, true, n, d, kk, yc->data.data(), c->data.data(), dzc.data.data());
      dzc.scale_inplace(g / S(n));
      auto& gz = t.grad_buf(z);
      for (int64_t j = 0; j < d; ++j) {
        S mu = 0;
        for (int64_t i = 0; i < n; ++i) mu += dzc.at(i, j);
        mu /= S(n);
        for (int64_t i = 0; i < n; ++i) gz.at(i, j) += dzc.at(i, j) - mu;
      }
    });
  }

 private:
  struct Node {
    Tensor<S> val;
    Tensor<S> grad;
    bool needs = false;
    bool grad_init = false;
    std::function<void(Tape&, int32_t)> back;
  };

  static S gelu_fwd(S x) {
    const S c = S(0.7978845608028654);  // sqrt(2/pi)
    S u = c * (x + S(0.044715) * x * x * x);
    return S(0.5) * x * (S(1) + std::tanh(u));
  }
  static S gelu_bwd(S x) {
    const S c = S(0.7978845608028654);
    S x2 = x * x;
    S u = c * (x + S(0.044715) * x * x2);
    S th = std::tanh(u);
    S du = c * (S(1) + S(3) * S(0.044715) * x2);
    return S(0.5) * (S(1) + th) + S(0.5) * x * (S(1) - th * th) * du;
  }

  bool needs(Var a) const { return nodes_[a.id].needs; }
  bool needs(Var a, Var b) const { return nodes_[a.id].needs || nodes_[b.id].needs; }
  bool needs(Var a, Var b, Var c) const { return needs(a, b) || nodes_[c.id].needs; }

  Tensor<S>& grad_buf(Var v) {
    ensure_grad(v.id);
    return nodes_[v.id].grad;
  }
  void ensure_grad(int32_t id) {
    Node& n = nodes_[id];
    if (!n.grad_init) {
      n.grad = Tensor<S>::zeros(n.val.shape);
      n.grad_init = true;
    }
  }

  Var push(Tensor<S> v, bool needs_grad, std::function<void(Tape&, int32_t)> back) {
    Node n;
    n.val = std::move(v);
    n.needs = needs_grad;
    n.back = needs_grad ? std::move(back) : nullptr;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int32_t>(nodes_.size() - 1)};
  }

  std::vector<Node> nodes_;
};

}  // namespace vaudit
