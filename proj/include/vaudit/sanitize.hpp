// sanitize.hpp -- post-hoc linear sanitizers on cached vectors: INLP,
// one-shot supervised removal, PCA removal, and random-subspace removal
// under the matched-dimension protocol. Every projector is built as
// P = I - U U^T from an accumulated orthonormal basis, which makes symmetry,
// idempotency, and rank(P) = d - k hold by construction. Fitting reads only
// training (and, for INLP's stop rule, balanced-validation) labels; apply is
// label-free. This header is the only Eigen user in the library.
#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "vaudit/io.hpp"
#include "vaudit/probes.hpp"
#include "vaudit/tensor.hpp"

namespace vaudit {

struct LinearSanitizer {
  std::string method;        // inlp | oneshot | pca | random
  int64_t k = 0;             // removed dimensions
  int64_t d = 0;
  std::vector<double> mean;  // nonzero only for pca
  Tensor<double> p;          // d x d projector

  static LinearSanitizer identity(const std::string& method, int64_t d) {
    LinearSanitizer s;
    s.method = method;
    s.d = d;
    s.mean.assign(static_cast<size_t>(d), 0.0);
    s.p = Tensor<double>::zeros({d, d});
    for (int64_t i = 0; i < d; ++i) s.p.at(i, i) = 1.0;
    return s;
  }
};

namespace sanitize_detail {

inline Eigen::MatrixXd to_eigen(const Tensor<double>& t) {
  Eigen::MatrixXd m(t.rows(), t.cols());
  for (int64_t i = 0; i < t.rows(); ++i)
    for (int64_t j = 0; j < t.cols(); ++j) m(i, j) = t.at(i, j);
  return m;
}

// P = I - U U^T for orthonormal columns U
inline LinearSanitizer from_basis(const std::string& method, int64_t d,
                                  const Eigen::MatrixXd& u) {
  LinearSanitizer s = LinearSanitizer::identity(method, d);
  s.k = u.cols();
  for (int64_t i = 0; i < d; ++i)
    for (int64_t j = 0; j < d; ++j) {
      double acc = 0.0;
      for (int64_t c = 0; c < u.cols(); ++c) acc += u(i, c) * u(j, c);
      s.p.at(i, j) -= acc;
    }
  return s;
}

// Gram-Schmidt append of new directions against an accumulated basis;
// returns how many survived
inline int64_t accumulate_directions(Eigen::MatrixXd& basis,
                                     const Eigen::MatrixXd& dirs) {
  int64_t d = dirs.rows(), added = 0;
  for (int64_t c = 0; c < dirs.cols(); ++c) {
    Eigen::VectorXd v = dirs.col(c);
    for (int pass = 0; pass < 2; ++pass)
      if (basis.cols() > 0) v -= basis * (basis.transpose() * v);
    double nrm = v.norm();
    if (nrm < 1e-8) continue;
    v /= nrm;
    basis.conservativeResize(d, basis.cols() + 1);
    basis.col(basis.cols() - 1) = v;
    ++added;
  }
  return added;
}

// right-singular directions of a K x d weight matrix with sigma > 1e-6
inline Eigen::MatrixXd weight_row_space(const Tensor<double>& w) {
  Eigen::MatrixXd wm = to_eigen(w);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(wm, Eigen::ComputeThinV);
  int64_t rank = 0;
  for (int64_t i = 0; i < svd.singularValues().size(); ++i)
    if (svd.singularValues()(i) > 1e-6) ++rank;
  return svd.matrixV().leftCols(rank);
}

inline Tensor<float> project(const LinearSanitizer& s, const Tensor<float>& x) {
  int64_t n = x.rows(), d = x.cols();
  Tensor<float> out = Tensor<float>::zeros({n, d});
  for (int64_t i = 0; i < n; ++i) {
    const float* xi = x.row_ptr(i);
    for (int64_t j = 0; j < d; ++j) {
      double acc = 0.0;
      const double* pj = s.p.row_ptr(j);
      for (int64_t c = 0; c < d; ++c)
        acc += pj[c] * (static_cast<double>(xi[c]) - s.mean[static_cast<size_t>(c)]);
      out.at(i, j) = static_cast<float>(acc + s.mean[static_cast<size_t>(j)]);
    }
  }
  return out;
}

inline void check_labels(const std::vector<int32_t>& y) {
  std::set<int32_t> uniq(y.begin(), y.end());
  if (uniq.size() < 2) fail("E_DATA", "sanitizer fit needs at least two classes");
}

}  // namespace sanitize_detail

// row-vector application X' = (X - mean) P^T + mean; never sees labels
inline Tensor<float> apply_sanitizer(const LinearSanitizer& s, const Tensor<float>& x) {
  if (x.cols() != s.d) fail("E_DATA", "sanitizer dimension mismatch");
  return sanitize_detail::project(s, x);
}

// ------------------------------------------------------------------ one-shot

// removal subspace from one classifier's weight row space
inline LinearSanitizer removal_from_weights(const Tensor<double>& w, int64_t d) {
  Eigen::MatrixXd basis(d, 0);
  sanitize_detail::accumulate_directions(basis, sanitize_detail::weight_row_space(w));
  return sanitize_detail::from_basis("oneshot", d, basis);
}

inline LinearSanitizer fit_oneshot_removal(const Tensor<float>& xtr,
                                           const std::vector<int32_t>& ytr,
                                           int64_t k_classes,
                                           const LinearProbeSpec& spec = {}) {
  sanitize_detail::check_labels(ytr);
  auto probe = fit_linear_probe(xtr, ytr, k_classes, spec);
  return removal_from_weights(probe.w, xtr.cols());
}

// ---------------------------------------------------------------------- INLP

struct InlpIter {
  int64_t iter = 0;      // 1-based
  int64_t removed = 0;   // directions removed this iteration
  int64_t k_total = 0;   // accumulated removed dimensionality
  double val_gap = 0.0;  // gap of this iteration's probe on projected val
};

struct InlpResult {
  LinearSanitizer sanitizer;
  std::vector<InlpIter> log;
};

// iterative nullspace projection: fit probe on projected train, remove its
// weight row space, repeat; stop when the probe's balanced-validation gap
// falls to 0.003 or after max_iters rounds
inline InlpResult fit_inlp(const Tensor<float>& xtr, const std::vector<int32_t>& ytr,
                           const Tensor<float>& xval, const std::vector<int32_t>& yval,
                           int64_t k_classes, int64_t max_iters = 20,
                           double stop_gap = 0.003, uint64_t seed = 0) {
  sanitize_detail::check_labels(ytr);
  int64_t d = xtr.cols();
  Eigen::MatrixXd basis(d, 0);
  InlpResult res;
  res.sanitizer = LinearSanitizer::identity("inlp", d);
  for (int64_t t = 1; t <= max_iters; ++t) {
    Tensor<float> ptr = sanitize_detail::project(res.sanitizer, xtr);
    Tensor<float> pval = sanitize_detail::project(res.sanitizer, xval);
    LinearProbeSpec spec;
    spec.seed = derive_seed(seed, 0x171cull, static_cast<uint64_t>(t));
    auto probe = fit_linear_probe(ptr, ytr, k_classes, spec);
    double gap = evaluate_scores(probe.scores(pval), yval, k_classes).gap;
    int64_t added = sanitize_detail::accumulate_directions(
        basis, sanitize_detail::weight_row_space(probe.w));
    LinearSanitizer next = sanitize_detail::from_basis("inlp", d, basis);
    next.mean = res.sanitizer.mean;
    res.sanitizer = std::move(next);
    res.log.push_back({t, added, res.sanitizer.k, gap});
    if (gap <= stop_gap) break;
  }
  return res;
}

// ----------------------------------------------------------------------- PCA

// remove the top-k principal components of the (centered) fit data; the fit
// mean is stored and re-applied around the projection
inline LinearSanitizer fit_pca_removal(const Tensor<float>& xtr, int64_t k) {
  int64_t n = xtr.rows(), d = xtr.cols();
  if (k < 0 || k > d) fail("E_CONFIG", "pca removal rank out of range");
  if (n == 0) fail("E_DATA", "pca removal needs data");
  std::vector<double> mean(static_cast<size_t>(d), 0.0);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < d; ++j)
      mean[static_cast<size_t>(j)] += static_cast<double>(xtr.at(i, j));
  for (auto& v : mean) v /= static_cast<double>(n);

  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
  for (int64_t i = 0; i < n; ++i) {
    Eigen::VectorXd c(d);
    for (int64_t j = 0; j < d; ++j)
      c(j) = static_cast<double>(xtr.at(i, j)) - mean[static_cast<size_t>(j)];
    cov += c * c.transpose();
  }
  cov /= static_cast<double>(n);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  // eigenvalues ascending; take the k largest
  Eigen::MatrixXd u = es.eigenvectors().rightCols(k);
  Eigen::MatrixXd basis(d, 0);
  sanitize_detail::accumulate_directions(basis, u);
  LinearSanitizer s = sanitize_detail::from_basis("pca", d, basis);
  s.mean = std::move(mean);
  return s;
}

// -------------------------------------------------------------------- random

inline LinearSanitizer fit_random_removal(int64_t d, int64_t k, uint64_t seed) {
  if (k < 0 || k > d) fail("E_CONFIG", "random removal rank out of range");
  Rng rng(derive_seed(seed, 0x2a4dull));
  Eigen::MatrixXd g(d, k);
  for (int64_t i = 0; i < d; ++i)
    for (int64_t j = 0; j < k; ++j) g(i, j) = rng.next_normal();
  Eigen::MatrixXd basis(d, 0);
  if (k > 0) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(d, k);
    sanitize_detail::accumulate_directions(basis, q);
  }
  return sanitize_detail::from_basis("random", d, basis);
}

// ----------------------------------------------------------------- matched k

// PCA/random removal dimensionality matched to INLP; when INLP removed
// nothing, fall back to the one-shot rank
inline int64_t matched_k(int64_t inlp_k, int64_t oneshot_rank) {
  return inlp_k > 0 ? inlp_k : oneshot_rank;
}

// ----------------------------------------------------------------- VSAN file

// magic "VSAN", method string, u32 k, u32 d, d f32 mean, d*d f32 projector
inline void write_vsan(const std::string& path, const LinearSanitizer& s) {
  BinWriter w(path);
  w.magic("VSAN");
  w.str(s.method);
  w.u32(static_cast<uint32_t>(s.k));
  w.u32(static_cast<uint32_t>(s.d));
  for (double v : s.mean) w.f32(static_cast<float>(v));
  for (double v : s.p.data) w.f32(static_cast<float>(v));
  w.close();
}

inline LinearSanitizer read_vsan(const std::string& path) {
  BinReader r(path);
  r.expect_magic("VSAN");
  LinearSanitizer s;
  s.method = r.str();
  s.k = static_cast<int64_t>(r.u32());
  s.d = static_cast<int64_t>(r.u32());
  std::vector<float> buf(static_cast<size_t>(s.d));
  r.f32s(buf.data(), buf.size());
  s.mean.assign(buf.begin(), buf.end());
  buf.resize(static_cast<size_t>(s.d * s.d));
  r.f32s(buf.data(), buf.size());
  s.p = Tensor<double>::zeros({s.d, s.d});
  for (size_t i = 0; i < buf.size(); ++i) s.p.data[i] = static_cast<double>(buf[i]);
  if (!r.at_eof()) fail("E_IO", path + ": trailing bytes after projector");
  return s;
}

}  // namespace vaudit
