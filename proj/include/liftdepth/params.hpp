#pragma once

#include <cstring>
#include <functional>
#include <unordered_map>

#include "liftdepth/ops.hpp"

namespace liftdepth {

// Named store of learnable tensors with deterministic iteration order
// (registration order). All parameters require grad.
class ParamStore {
 public:
  Tensor add(const std::string& name, Tensor t) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    t.set_requires_grad(true);
    index_[name] = entries_.size();
    entries_.emplace_back(name, t);
    return t;
  }

  // Uniform init in [-sqrt(1/fan_in), +sqrt(1/fan_in)].
  Tensor add_uniform(const std::string& name, Shape shape, int fan_in, Rng& rng) {
    if (fan_in <= 0) throw ConfigError("fan_in must be positive for " + name);
    double bound = std::sqrt(1.0 / fan_in);
    Tensor t = Tensor::zeros(shape);
    for (int i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
    return add(name, t);
  }

  Tensor add_zeros(const std::string& name, Shape shape) {
    return add(name, Tensor::zeros(std::move(shape)));
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  Tensor get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return entries_[it->second].second;
  }

  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }

  std::size_t count() const { return entries_.size(); }

  std::size_t total_scalars() const {
    std::size_t n = 0;
    for (const auto& [name, t] : entries_) n += std::size_t(t.size());
    return n;
  }

  void zero_grads() {
    for (auto& [name, t] : entries_) t.zero_grad();
  }

  // Test hook: overwrite every parameter entry with one constant value.
  void fill_all(double value) {
    for (auto& [name, t] : entries_)
      std::fill(t.values().begin(), t.values().end(), value);
  }

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  int worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_err = 0.0;
  std::string worst_param;
  double tol = 1e-4;
  bool deterministic = true;

  bool pass() const { return deterministic && max_rel_err < tol; }
};

// Compares reverse-mode gradients of f (a scalar-tensor-valued function of
// the current parameter values) against central differences
// (f(p+eps) - f(p-eps)) / (2 eps), entry by entry. Relative error uses a
// small denominator floor so that honest near-zero gradients do not blow up
// the ratio; non-determinism is flagged by a bitwise re-evaluation mismatch.
inline GradCheckReport finite_diff_check(const std::function<Tensor()>& f,
                                         ParamStore& params, double eps = 1e-5,
                                         double tol = 1e-4) {
  if (eps <= 0.0) throw ConfigError("finite_diff_check: eps must be positive");
  GradCheckReport report;
  report.tol = tol;

  double base = f().item();
  double base2 = f().item();
  if (std::memcmp(&base, &base2, sizeof(double)) != 0) {
    report.deterministic = false;
    return report;
  }

  // analytic pass
  std::vector<std::vector<double>> analytic;
  {
    params.zero_grads();
    Graph graph;
    Tensor loss = f();
    graph.backward(loss);
    for (const auto& [name, t] : params.entries()) analytic.push_back(t.grad());
  }

  std::size_t pi = 0;
  for (const auto& [name, t0] : params.entries()) {
    Tensor t = t0;  // handle copy; shares storage
    GradCheckEntry entry;
    entry.name = name;
    for (int i = 0; i < t.size(); ++i) {
      double saved = t[i];
      t[i] = saved + eps;
      double fp = f().item();
      t[i] = saved - eps;
      double fm = f().item();
      t[i] = saved;
      double fd = (fp - fm) / (2.0 * eps);
      double ad = analytic[pi][std::size_t(i)];
      double denom = std::max({std::abs(ad), std::abs(fd), 1e-6});
      double rel = std::abs(ad - fd) / denom;
      if (std::abs(ad) < 1e-12 && std::abs(fd) < 1e-12) rel = 0.0;
      if (rel > entry.max_rel_err) {
        entry.max_rel_err = rel;
        entry.worst_index = i;
        entry.analytic = ad;
        entry.numeric = fd;
      }
    }
    if (entry.max_rel_err >= report.max_rel_err) {
      report.max_rel_err = entry.max_rel_err;
      report.worst_param = name;
    }
    report.entries.push_back(entry);
    ++pi;
  }
  return report;
}

}  // namespace liftdepth
