#pragma once

#include "liftdepth/nn.hpp"

namespace liftdepth {

// Two learned feature-space directions (edge / non-edge) matching the channel
// width of the decoder level that owns them. Each level has its own instance.
class EdgeSubspace {
 public:
  EdgeSubspace() = default;
  EdgeSubspace(ParamStore& ps, const std::string& name, int channels, Rng& rng)
      : edge_(ps.add_uniform(name + ".edge", {channels}, channels, rng)),
        nonedge_(ps.add_uniform(name + ".nonedge", {channels}, channels, rng)) {}

  // Test surface: explicit vectors.
  static EdgeSubspace from_vectors(Tensor edge, Tensor nonedge) {
    if (edge.rank() != 1 || nonedge.rank() != 1 || edge.dim(0) != nonedge.dim(0))
      throw ShapeError("EdgeSubspace: vectors must be same-length rank-1");
    EdgeSubspace s;
    s.edge_ = edge;
    s.nonedge_ = nonedge;
    return s;
  }

  Tensor edge() const { return edge_; }
  Tensor nonedge() const { return nonedge_; }
  int dim() const { return edge_.dim(0); }

 private:
  Tensor edge_, nonedge_;
};

// Per-pixel blend weights: alpha1 in [0,1], alpha2 = 1 - alpha1 exactly.
struct EdgeCoefficients {
  Tensor alpha1;  // (1, H, W)
  Tensor alpha2;  // (1, H, W)
};

// Lifts decoder depth features into the two-vector edge subspace and fuses
// the result back additively. The blend weight is the probability mass of
// the first half of the channels after a softmax over the output of a
// three-layer 3x3 convolution block.
class EdgeLift {
 public:
  EdgeLift() = default;

  EdgeLift(ParamStore& ps, const std::string& name, int channels, Rng& rng)
      : channels_(channels),
        subspace_(ps, name + ".basis", channels, rng),
        conv1_(ps, name + ".cp.conv1", channels, channels, 3, rng),
        conv2_(ps, name + ".cp.conv2", channels, channels, 3, rng),
        conv3_(ps, name + ".cp.conv3", channels, channels, 3, rng) {
    if (channels % 2 != 0)
      throw ConfigError("EdgeLift: channel count " + std::to_string(channels) +
                        " must be even");
  }

  const EdgeSubspace& subspace() const { return subspace_; }

  EdgeCoefficients coefficients(const Tensor& x) const {
    check_input(x);
    Tensor logits = conv3_(relu(conv2_(relu(conv1_(x)))));
    Tensor probs = softmax_channels(logits);
    Tensor alpha1 = sum_channels(slice_front(probs, 0, channels_ / 2));
    Tensor alpha2 = affine_const(alpha1, -1.0, 1.0);
    return EdgeCoefficients{alpha1, alpha2};
  }

  // F_e = alpha1 * edge + alpha2 * nonedge per pixel, then fused additively.
  static Tensor transform(const Tensor& x, const EdgeSubspace& subspace,
                          const EdgeCoefficients& coeffs) {
    if (subspace.dim() != x.dim(0))
      throw ShapeError("EdgeLift: subspace dimension " + std::to_string(subspace.dim()) +
                       " vs " + std::to_string(x.dim(0)) + " feature channels");
    Tensor fe = add(plane_times_vec(coeffs.alpha1, subspace.edge()),
                    plane_times_vec(coeffs.alpha2, subspace.nonedge()));
    return add(x, fe);
  }

  Tensor operator()(const Tensor& x) const {
    return transform(x, subspace_, coefficients(x));
  }

 private:
  void check_input(const Tensor& x) const {
    detail::check_rank(x, 3, "EdgeLift");
    if (x.dim(0) != channels_)
      throw ShapeError("EdgeLift: input has " + std::to_string(x.dim(0)) +
                       " channels, expected " + std::to_string(channels_));
  }

  int channels_ = 0;
  EdgeSubspace subspace_;
  nn::Conv conv1_, conv2_, conv3_;
};

}  // namespace liftdepth
