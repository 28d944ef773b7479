#pragma once

#include "liftdepth/params.hpp"

// Small learned building blocks. Each module registers its tensors in a
// ParamStore under a hierarchical name at construction and is a thin value
// type afterwards (copies share parameters).

namespace liftdepth {
namespace nn {

// y = W x + b for a rank-1 input.
class Linear {
 public:
  Linear() = default;
  Linear(ParamStore& ps, const std::string& name, int in, int out, Rng& rng)
      : weight_(ps.add_uniform(name + ".w", {out, in}, in, rng)),
        bias_(ps.add_zeros(name + ".b", {out})) {}

  Tensor operator()(const Tensor& x) const {
    Tensor col = reshape(x, {x.size(), 1});
    return add(reshape(matmul(weight_, col), {weight_.dim(0)}), bias_);
  }

  // Applies the layer to every row of a (R, in) matrix.
  Tensor rows(const Tensor& x) const {
    return add_rowvec(matmul(x, transpose(weight_)), bias_);
  }

  Tensor weight() const { return weight_; }
  Tensor bias() const { return bias_; }

  // Test hook: zero the layer so its output is identically zero.
  void zero() {
    std::fill(weight_.values().begin(), weight_.values().end(), 0.0);
    std::fill(bias_.values().begin(), bias_.values().end(), 0.0);
  }

 private:
  Tensor weight_, bias_;
};

// Two-layer perceptron with ReLU between.
class Mlp {
 public:
  Mlp() = default;
  Mlp(ParamStore& ps, const std::string& name, int in, int hidden, int out, Rng& rng)
      : l1_(ps, name + ".l1", in, hidden, rng), l2_(ps, name + ".l2", hidden, out, rng) {}

  Tensor operator()(const Tensor& x) const { return l2_(relu(l1_(x))); }
  Tensor rows(const Tensor& x) const { return l2_.rows(relu(l1_.rows(x))); }

  Linear& first() { return l1_; }
  Linear& second() { return l2_; }

 private:
  Linear l1_, l2_;
};

class Conv {
 public:
  Conv() = default;
  Conv(ParamStore& ps, const std::string& name, int in, int out, int k, Rng& rng,
       int stride = 1, int pad = -1)
      : kernel_(ps.add_uniform(name + ".w", {out, in, k, k}, in * k * k, rng)),
        bias_(ps.add_zeros(name + ".b", {out})),
        stride_(stride),
        pad_(pad < 0 ? k / 2 : pad) {}

  Tensor operator()(const Tensor& x) const {
    return conv2d(x, kernel_, bias_, stride_, pad_);
  }

  Tensor kernel() const { return kernel_; }
  Tensor bias() const { return bias_; }

  void zero() {
    std::fill(kernel_.values().begin(), kernel_.values().end(), 0.0);
    std::fill(bias_.values().begin(), bias_.values().end(), 0.0);
  }

 private:
  Tensor kernel_, bias_;
  int stride_ = 1, pad_ = 0;
};

// Group normalization with learned per-channel affine.
class GroupNorm {
 public:
  GroupNorm() = default;
  GroupNorm(ParamStore& ps, const std::string& name, int channels, int group_size,
            double eps = 1e-5)
      : gamma_(ps.add(name + ".gamma", Tensor::full({channels}, 1.0))),
        beta_(ps.add_zeros(name + ".beta", {channels})),
        group_size_(group_size),
        eps_(eps) {
    if (channels % group_size != 0)
      throw ConfigError("GroupNorm: group size " + std::to_string(group_size) +
                        " does not divide " + std::to_string(channels));
  }

  Tensor operator()(const Tensor& x) const {
    return channel_affine(group_norm_raw(x, group_size_, eps_), gamma_, beta_);
  }

  Tensor gamma() const { return gamma_; }
  Tensor beta() const { return beta_; }

 private:
  Tensor gamma_, beta_;
  int group_size_ = 1;
  double eps_ = 1e-5;
};

// Piecewise-linear activation max(a1*x+b1, a2*x+b2) with per-channel
// coefficients predicted from the pooled input. The coefficient head is
// zero-initialized, so the activation starts as a plain ReLU.
inline Tensor dyrelu_apply(const Tensor& x, const Tensor& a1, const Tensor& b1,
                           const Tensor& a2, const Tensor& b2) {
  return max_elem(channel_affine(x, a1, b1), channel_affine(x, a2, b2));
}

class DyRelu {
 public:
  DyRelu() = default;
  DyRelu(ParamStore& ps, const std::string& name, int channels, Rng& rng)
      : channels_(channels),
        l1_(ps, name + ".ctx.l1", channels, std::max(2, channels / 4), rng),
        l2_(ps, name + ".ctx.l2", std::max(2, channels / 4), 4 * channels, rng) {
    l2_.zero();  // coefficients start at (1,0,0,0): identity-to-ReLU
  }

  Tensor operator()(const Tensor& x) const {
    Tensor ctx = global_avg_pool(x);
    Tensor raw = l2_(relu(l1_(ctx)));
    Tensor a1 = affine_const(slice_front(raw, 0, channels_), 1.0, 1.0);
    Tensor b1 = slice_front(raw, channels_, 2 * channels_);
    Tensor a2 = slice_front(raw, 2 * channels_, 3 * channels_);
    Tensor b2 = slice_front(raw, 3 * channels_, 4 * channels_);
    return dyrelu_apply(x, a1, b1, a2, b2);
  }

 private:
  int channels_ = 0;
  Linear l1_, l2_;
};

}  // namespace nn
}  // namespace liftdepth
