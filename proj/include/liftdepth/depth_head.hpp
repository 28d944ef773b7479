#pragma once

#include <array>

#include "liftdepth/nn.hpp"

namespace liftdepth {

// Pyramid-pooled global context. The input is pooled at grid sizes
// {1,2,3,6} (clamped to the input extents), each branch is projected with a
// 1x1 convolution and bilinearly resampled back, everything is concatenated
// with the input and fused to out_channels. Serves as the initial decoder
// feature at the coarsest scale.
class PyramidContext {
 public:
  PyramidContext() = default;

  PyramidContext(ParamStore& ps, const std::string& name, int channels, int out_channels,
                 Rng& rng)
      : channels_(channels), branch_channels_(std::max(1, channels / 4)) {
    for (std::size_t i = 0; i < kGrids.size(); ++i)
      project_.emplace_back(ps, name + ".p" + std::to_string(kGrids[i]), channels,
                            branch_channels_, 1, rng);
    fuse_ = nn::Conv(ps, name + ".fuse", channels + int(kGrids.size()) * branch_channels_,
                     out_channels, 1, rng);
  }

  Tensor operator()(const Tensor& x) const {
    detail::check_rank(x, 3, "PyramidContext");
    if (x.dim(0) != channels_)
      throw ShapeError("PyramidContext: input has " + std::to_string(x.dim(0)) +
                       " channels, expected " + std::to_string(channels_));
    int h = x.dim(1), w = x.dim(2);
    std::vector<Tensor> parts{x};
    for (std::size_t i = 0; i < kGrids.size(); ++i) {
      int gh = std::min(kGrids[i], h), gw = std::min(kGrids[i], w);
      Tensor pooled = adaptive_avg_pool(x, gh, gw);
      Tensor projected = project_[i](pooled);
      parts.push_back(bilinear_resize(projected, h, w));
    }
    return fuse_(concat_channels(parts));
  }

 private:
  static constexpr std::array<int, 4> kGrids{1, 2, 3, 6};
  int channels_ = 0, branch_channels_ = 0;
  std::vector<nn::Conv> project_;
  nn::Conv fuse_;
};

// Adaptive partition of [d_min, d_max] into bins: softmax-normalized widths
// and the centres derived from them.
struct BinPartition {
  double d_min = 0.0;
  double d_max = 0.0;
  Tensor widths;   // (n_bins), nonnegative, sums to 1
  Tensor centres;  // (n_bins), strictly increasing for positive widths

  double delta() const { return d_max - d_min; }
};

// Predicts per-image bin widths from the pooled coarsest-scale depth feature.
class BinWidthHead {
 public:
  BinWidthHead() = default;

  BinWidthHead(ParamStore& ps, const std::string& name, int channels, int n_bins, Rng& rng)
      : mlp_(ps, name + ".mlp", channels, channels, n_bins, rng) {}

  Tensor widths(const Tensor& coarse_feature) const {
    return softmax(mlp_(global_avg_pool(coarse_feature)));
  }

  BinPartition partition(const Tensor& coarse_feature, double d_min, double d_max) const {
    BinPartition p;
    p.d_min = d_min;
    p.d_max = d_max;
    p.widths = widths(coarse_feature);
    p.centres = bin_centres(p.widths, d_min, d_max);
    return p;
  }

  nn::Mlp& mlp() { return mlp_; }

 private:
  nn::Mlp mlp_;
};

// d_i = sum_k p_ik * centre_k per pixel. The probability volume must be
// normalized (per-pixel sums within 1e-4 of one).
inline Tensor depth_from_probs(const Tensor& probs, const Tensor& centres) {
  detail::check_rank(probs, 3, "depth_from_probs");
  detail::check_rank(centres, 1, "depth_from_probs");
  if (probs.dim(0) != centres.dim(0))
    throw ShapeError("depth_from_probs: " + std::to_string(probs.dim(0)) +
                     " probability channels vs " + std::to_string(centres.dim(0)) + " centres");
  int n = probs.dim(0), plane = probs.dim(1) * probs.dim(2);
  for (int i = 0; i < plane; ++i) {
    double total = 0.0;
    for (int k = 0; k < n; ++k) {
      double p = probs[k * plane + i];
      if (p < 0.0) throw ValueError("depth_from_probs: negative probability");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-4)
      throw ValueError("depth_from_probs: probabilities sum to " + std::to_string(total) +
                       " at pixel " + std::to_string(i));
  }
  return conv2d(probs, reshape(centres, {1, n, 1, 1}));
}

// Constants of the scale-invariant log loss.
struct LossParams {
  double alpha = 10.0;
  double lambda = 0.85;
};

}  // namespace liftdepth
