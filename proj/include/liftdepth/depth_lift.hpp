#pragma once

#include "liftdepth/frame.hpp"

namespace liftdepth {

// Per-group projection coefficients of a feature map onto the frame:
// maps has shape (groups, per_group, H, W).
struct DepthCoefficients {
  Tensor maps;
  int groups = 0;
  int per_group = 0;
};

// Identity overrides for the learned submodules of DepthLift; they make the
// projection algebra directly assertable in tests. Identity choices require
// the affected dimensions to agree (e.g. in_channels == frame dim).
struct LiftHooks {
  bool identity_feature_mlp = false;  // f on the image-feature path
  bool identity_vector_mlp = false;   // f on the frame-vector path
  bool identity_norm = false;
  bool identity_group_conv = false;
  bool identity_fuse = false;  // feed-forward after the group sum
  bool identity_skip = false;  // transform of the added input
};

// Lifts encoder image features into the depth-feature space spanned by the
// shared frame. Per group j the input is projected through a two-layer MLP
// (1x1 convs), matched against the MLP-transformed group vectors by a
// per-pixel inner product, and the coefficients recombine the original group
// vectors. Group outputs are normalized, mixed by a 1x1 conv and summed;
// a feed-forward head and a transformed input skip produce the output.
class DepthLift {
 public:
  using Hooks = LiftHooks;

  DepthLift() = default;

  DepthLift(ParamStore& ps, const std::string& name, std::shared_ptr<FrameSubspace> frame,
            int in_channels, int out_channels, Rng& rng, Hooks hooks = Hooks())
      : frame_(std::move(frame)),
        hooks_(hooks),
        in_channels_(in_channels),
        out_channels_(out_channels) {
    int c = frame_->dim();
    int r = frame_->group_count();
    for (int j = 0; j < r; ++j) {
      std::string g = name + ".g" + std::to_string(j);
      if (!hooks_.identity_feature_mlp) {
        feature_l1_.emplace_back(ps, g + ".feat.l1", in_channels, c, 1, rng);
        feature_l2_.emplace_back(ps, g + ".feat.l2", c, c, 1, rng);
      }
      if (!hooks_.identity_vector_mlp) vector_mlp_.emplace_back(ps, g + ".vec", c, c, c, rng);
      if (!hooks_.identity_norm) norm_.emplace_back(ps, g + ".norm", c, c);
      if (!hooks_.identity_group_conv) group_conv_.emplace_back(ps, g + ".mix", c, c, 1, rng);
    }
    if (!hooks_.identity_fuse) {
      fuse_l1_ = nn::Conv(ps, name + ".fuse.l1", c, 2 * c, 1, rng);
      fuse_l2_ = nn::Conv(ps, name + ".fuse.l2", 2 * c, out_channels, 1, rng);
    }
    if (!hooks_.identity_skip) skip_ = nn::Conv(ps, name + ".skip", in_channels, out_channels, 1, rng);
  }

  const FrameSubspace& frame() const { return *frame_; }
  std::shared_ptr<FrameSubspace> frame_ptr() const { return frame_; }
  int out_channels() const { return out_channels_; }

  // Projection coefficients alpha_{i,j} = <f_feat_j(x), f_vec_j(e_{i,j})>.
  DepthCoefficients coefficients(const Tensor& x) const {
    check_input(x);
    int r = frame_->group_count(), c = frame_->dim();
    std::vector<Tensor> per_group;
    per_group.reserve(std::size_t(r));
    for (int j = 0; j < r; ++j) per_group.push_back(group_coefficients(x, j));
    Tensor stacked = concat_channels(per_group);  // (r*c, H, W)
    DepthCoefficients out;
    out.maps = reshape(stacked, {r, c, x.dim(1), x.dim(2)});
    out.groups = r;
    out.per_group = c;
    return out;
  }

  Tensor operator()(const Tensor& x) const {
    check_input(x);
    int r = frame_->group_count(), c = frame_->dim();
    Tensor acc;
    for (int j = 0; j < r; ++j) {
      Tensor alpha = group_coefficients(x, j);  // (c, H, W)
      // recombine the original group vectors: sum_i alpha_i * e_{i,j}
      Tensor basis = reshape(transpose(frame_->group(j)), {c, c, 1, 1});
      Tensor recon = conv2d(alpha, basis);
      Tensor normed = hooks_.identity_norm ? recon : norm_[std::size_t(j)](recon);
      Tensor mixed = hooks_.identity_group_conv ? normed : group_conv_[std::size_t(j)](normed);
      acc = acc.defined() ? add(acc, mixed) : mixed;
    }
    Tensor fused = hooks_.identity_fuse ? acc : fuse_l2_(relu(fuse_l1_(acc)));
    Tensor skip = hooks_.identity_skip ? x : skip_(x);
    return add(fused, skip);
  }

 private:
  void check_input(const Tensor& x) const {
    detail::check_rank(x, 3, "DepthLift");
    if (x.dim(0) != in_channels_)
      throw ShapeError("DepthLift: input has " + std::to_string(x.dim(0)) +
                       " channels, expected " + std::to_string(in_channels_));
  }

  Tensor group_coefficients(const Tensor& x, int j) const {
    int c = frame_->dim();
    Tensor feat = x;
    if (!hooks_.identity_feature_mlp)
      feat = feature_l2_[std::size_t(j)](relu(feature_l1_[std::size_t(j)](x)));
    Tensor vecs = frame_->group(j);  // (c, c)
    if (!hooks_.identity_vector_mlp) vecs = vector_mlp_[std::size_t(j)].rows(vecs);
    // per-pixel inner products against each transformed vector
    return conv2d(feat, reshape(vecs, {c, c, 1, 1}));
  }

  std::shared_ptr<FrameSubspace> frame_;
  Hooks hooks_;
  int in_channels_ = 0, out_channels_ = 0;
  std::vector<nn::Conv> feature_l1_, feature_l2_;
  std::vector<nn::Mlp> vector_mlp_;
  std::vector<nn::GroupNorm> norm_;
  std::vector<nn::Conv> group_conv_;
  nn::Conv fuse_l1_, fuse_l2_, skip_;
};

// One decoder stage: concatenates the upsampled previous depth feature with
// the lifted feature of the current scale and applies two 3x3 convolutions
// with the piecewise-linear dynamic activation.
class DecoderBlock {
 public:
  DecoderBlock() = default;

  DecoderBlock(ParamStore& ps, const std::string& name, int prev_channels,
               int lift_channels, int out_channels, Rng& rng)
      : conv1_(ps, name + ".conv1", prev_channels + lift_channels, out_channels, 3, rng),
        act1_(ps, name + ".act1", out_channels, rng),
        conv2_(ps, name + ".conv2", out_channels, out_channels, 3, rng),
        act2_(ps, name + ".act2", out_channels, rng) {}

  Tensor operator()(const Tensor& prev_upsampled, const Tensor& lifted) const {
    if (prev_upsampled.dim(1) != lifted.dim(1) || prev_upsampled.dim(2) != lifted.dim(2))
      throw ShapeError("DecoderBlock: spatial mismatch " + shape_str(prev_upsampled.shape()) +
                       " vs " + shape_str(lifted.shape()));
    Tensor x = concat_channels(prev_upsampled, lifted);
    x = act1_(conv1_(x));
    x = act2_(conv2_(x));
    return x;
  }

 private:
  nn::Conv conv1_;
  nn::DyRelu act1_;
  nn::Conv conv2_;
  nn::DyRelu act2_;
};

}  // namespace liftdepth
