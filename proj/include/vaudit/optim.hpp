// optim.hpp -- named parameter store, global-norm gradient clipping, and
// decoupled-weight-decay Adam. The optimizer owns first/second moments keyed
// by parameter name so checkpoints can carry them for exact resume.
#pragma once

#include <map>
#include <string>

#include "vaudit/tensor.hpp"

namespace vaudit {

template <class S = float>
struct ParamStore {
  struct Entry {
    std::string name;
    Tensor<S> value;
    bool trainable = false;
  };
  std::vector<Entry> entries;
  std::map<std::string, size_t> index;

  Tensor<S>& add(const std::string& name, Tensor<S> v, bool trainable) {
    if (index.count(name)) fail("E_STATE", "duplicate parameter " + name);
    index[name] = entries.size();
    entries.push_back({name, std::move(v), trainable});
    return entries.back().value;
  }
  bool has(const std::string& name) const { return index.count(name) != 0; }
  Tensor<S>& get(const std::string& name) {
    auto it = index.find(name);
    if (it == index.end()) fail("E_STATE", "unknown parameter " + name);
    return entries[it->second].value;
  }
  const Tensor<S>& get(const std::string& name) const {
    return const_cast<ParamStore*>(this)->get(name);
  }
  std::vector<std::string> trainable_names() const {
    std::vector<std::string> out;
    for (const auto& e : entries)
      if (e.trainable) out.push_back(e.name);
    return out;
  }
  int64_t total_params() const {
    int64_t n = 0;
    for (const auto& e : entries) n += e.value.numel();
    return n;
  }
};

template <class S = float>
using GradMap = std::map<std::string, Tensor<S>>;

// Scales gradients in place so the global L2 norm is at most max_norm.
// Returns the pre-clip norm. Norm accumulated in double for stability.
template <class S>
double clip_global_norm(GradMap<S>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, g] : grads)
    for (S v : g.data) sq += static_cast<double>(v) * static_cast<double>(v);
  double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    S f = static_cast<S>(max_norm / norm);
    for (auto& [name, g] : grads) g.scale_inplace(f);
  }
  return norm;
}

template <class S = float>
class AdamW {
 public:
  struct Config {
    double lr = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;        // added after the square root
    double weight_decay = 0.01;  // decoupled
  };

  explicit AdamW(Config cfg) : cfg_(cfg) {}

  void step(ParamStore<S>& params, const GradMap<S>& grads) {
    ++t_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (const auto& [name, g] : grads) {
      Tensor<S>& p = params.get(name);
      if (!p.same_shape(g)) fail("E_STATE", "gradient shape mismatch for " + name);
      auto& st = state_[name];
      if (st.m.numel() == 0) {
        st.m = Tensor<S>::zeros(p.shape);
        st.v = Tensor<S>::zeros(p.shape);
      }
      S b1 = static_cast<S>(cfg_.beta1), b2 = static_cast<S>(cfg_.beta2);
      S lr = static_cast<S>(cfg_.lr), eps = static_cast<S>(cfg_.eps);
      S wd = static_cast<S>(cfg_.weight_decay);
      S ib1 = static_cast<S>(1.0 / bc1), ib2 = static_cast<S>(1.0 / bc2);
      for (int64_t i = 0; i < p.numel(); ++i) {
        S gi = g.at(i);
        st.m.at(i) = b1 * st.m.at(i) + (S(1) - b1) * gi;
        st.v.at(i) = b2 * st.v.at(i) + (S(1) - b2) * gi * gi;
        S mh = st.m.at(i) * ib1;
        S vh = st.v.at(i) * ib2;
        p.at(i) -= lr * (mh / (std::sqrt(vh) + eps) + wd * p.at(i));
      }
    }
  }

  int64_t step_count() const { return t_; }
  void set_step_count(int64_t t) { t_ = t; }

  struct Moments {
    Tensor<S> m, v;
  };
  std::map<std::string, Moments>& state() { return state_; }
  const Config& config() const { return cfg_; }

 private:
  Config cfg_;
  std::map<std::string, Moments> state_;
  int64_t t_ = 0;
};

}  // namespace vaudit
