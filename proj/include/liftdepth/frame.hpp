#pragma once

#include <memory>

#include "liftdepth/nn.hpp"

namespace liftdepth {

// Eigenvalues of a dense symmetric matrix (row-major, n x n) by cyclic Jacobi
// rotations; returned ascending. Sizes here are tiny (frame dimension), so no
// external solver is needed.
inline std::vector<double> symmetric_eigenvalues(std::vector<double> a, int n) {
  if (int(a.size()) != n * n) throw ShapeError("symmetric_eigenvalues: bad matrix size");
  auto at = [&](int i, int j) -> double& { return a[std::size_t(i) * n + j]; };
  for (int sweep = 0; sweep < 128; ++sweep) {
    double off = 0.0, diag = 0.0;
    for (int i = 0; i < n; ++i) {
      diag += std::abs(at(i, i));
      for (int j = i + 1; j < n; ++j) off += at(i, j) * at(i, j);
    }
    if (off <= 1e-30 * std::max(1.0, diag * diag)) break;
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        double apq = at(p, q);
        if (std::abs(apq) < 1e-300) continue;
        double theta = (at(q, q) - at(p, p)) / (2.0 * apq);
        double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        double c = 1.0 / std::sqrt(t * t + 1.0);
        double s = t * c;
        double app = at(p, p), aqq = at(q, q);
        at(p, p) = app - t * apq;
        at(q, q) = aqq + t * apq;
        at(p, q) = 0.0;
        at(q, p) = 0.0;
        for (int i = 0; i < n; ++i) {
          if (i == p || i == q) continue;
          double aip = at(i, p), aiq = at(i, q);
          at(i, p) = c * aip - s * aiq;
          at(p, i) = at(i, p);
          at(i, q) = s * aip + c * aiq;
          at(q, i) = at(i, q);
        }
      }
    }
  }
  std::vector<double> eig(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) eig[std::size_t(i)] = at(i, i);
  std::sort(eig.begin(), eig.end());
  return eig;
}

// A learned frame of the depth-feature space: `count` vectors of dimension
// `dim`, partitioned into count/dim groups of dim vectors each. The vectors
// are latent embeddings independent of image content; one instance is shared
// by every scale of the decoder.
class FrameSubspace {
 public:
  // Seeded construction registering the vectors as a learnable parameter.
  static std::shared_ptr<FrameSubspace> create(ParamStore& ps, const std::string& name,
                                               int count, int dim, Rng& rng) {
    if (count <= 0 || dim <= 0 || count % dim != 0)
      throw ConfigError("FrameSubspace: vector dimension " + std::to_string(dim) +
                        " must divide vector count " + std::to_string(count));
    Tensor vecs = Tensor::zeros({count, dim});
    double bound = std::sqrt(1.0 / dim);
    for (int i = 0; i < vecs.size(); ++i) vecs[i] = rng.uniform(-bound, bound);
    auto fs = std::shared_ptr<FrameSubspace>(new FrameSubspace(ps.add(name, vecs), count / dim));
    fs->check_group_rank();
    return fs;
  }

  // Test surface: wrap explicit vectors (orthonormal overrides, degenerate
  // frames) without registering a parameter. Rank is not enforced here.
  static std::shared_ptr<FrameSubspace> from_vectors(Tensor vectors, int group_count) {
    if (vectors.rank() != 2) throw ShapeError("FrameSubspace: vectors must be (count, dim)");
    if (group_count <= 0 || vectors.dim(0) % group_count != 0)
      throw ConfigError("FrameSubspace: group count must divide vector count");
    return std::shared_ptr<FrameSubspace>(new FrameSubspace(vectors, group_count));
  }

  int count() const { return vectors_.dim(0); }
  int dim() const { return vectors_.dim(1); }
  int group_count() const { return groups_; }
  int vectors_per_group() const { return count() / groups_; }

  Tensor vectors() const { return vectors_; }

  // Differentiable view of group j (rows [j*per_group, (j+1)*per_group)).
  Tensor group(int j) const {
    if (j < 0 || j >= groups_) throw ShapeError("FrameSubspace: group index out of range");
    int per = vectors_per_group();
    return slice_front(vectors_, j * per, (j + 1) * per);
  }

 private:
  FrameSubspace(Tensor vectors, int groups) : vectors_(std::move(vectors)), groups_(groups) {}

  // Every group must span the full dim-dimensional space at initialization
  // (singular values above 1e-8).
  void check_group_rank() const {
    int per = vectors_per_group(), d = dim();
    if (per != d) return;  // square groups by construction; guard anyway
    for (int j = 0; j < groups_; ++j) {
      std::vector<double> gram(std::size_t(d) * d, 0.0);
      const double* base = vectors_.data() + std::size_t(j) * per * d;
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) {
          double acc = 0.0;
          for (int k = 0; k < per; ++k) acc += base[std::size_t(k) * d + a] * base[std::size_t(k) * d + b];
          gram[std::size_t(a) * d + b] = acc;
        }
      std::vector<double> eig = symmetric_eigenvalues(std::move(gram), d);
      if (std::sqrt(std::max(0.0, eig.front())) <= 1e-8)
        throw ConfigError("FrameSubspace: group " + std::to_string(j) +
                          " is rank-deficient at initialization");
    }
  }

  Tensor vectors_;
  int groups_;
};

struct FrameBounds {
  double lower = 0.0;  // A: smallest eigenvalue of the frame operator
  double upper = 0.0;  // B: largest eigenvalue
};

// Frame operator S = sum_k e_k e_k^T; its eigenvalue extremes are the frame
// bounds. A > 0 iff the vectors span the space.
inline FrameBounds frame_bounds(const FrameSubspace& fs) {
  int n = fs.count(), d = fs.dim();
  const double* v = fs.vectors().data();
  std::vector<double> s(std::size_t(d) * d, 0.0);
  for (int k = 0; k < n; ++k) {
    const double* row = v + std::size_t(k) * d;
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b) s[std::size_t(a) * d + b] += row[a] * row[b];
  }
  std::vector<double> eig = symmetric_eigenvalues(std::move(s), d);
  return FrameBounds{eig.front(), eig.back()};
}

// The linear map g tying frame directions to the bin centres of one image:
// bin k is paired with vector e_{k mod count}, and g acts on a formal
// combination sum_k w_k e_(k) by linearity, g(sum w_k e_(k)) = sum w_k bin_k.
// When the bin count equals the per-group vector count the pairing runs over
// exactly one group; when it equals the total count it is one-to-one.
class LiftingMap {
 public:
  LiftingMap(std::shared_ptr<const FrameSubspace> frame, std::vector<double> bin_values)
      : frame_(std::move(frame)), bins_(std::move(bin_values)) {
    if (bins_.empty()) throw ConfigError("LiftingMap: no bin values");
  }

  int bin_count() const { return int(bins_.size()); }
  double bin_value(int k) const { return bins_[std::size_t(k)]; }

  // g evaluated by linearity on the combination described by `weights`.
  double apply(const std::vector<double>& weights) const {
    if (weights.size() != bins_.size())
      throw ShapeError("LiftingMap: weight count " + std::to_string(weights.size()) +
                       " vs bin count " + std::to_string(bins_.size()));
    double acc = 0.0;
    for (std::size_t k = 0; k < bins_.size(); ++k) acc += weights[k] * bins_[k];
    return acc;
  }

  // The combination vector sum_k w_k e_(k) materialized in frame space.
  std::vector<double> combine(const std::vector<double>& weights) const {
    if (weights.size() != bins_.size()) throw ShapeError("LiftingMap: weight count mismatch");
    int d = frame_->dim(), n = frame_->count();
    const double* v = frame_->vectors().data();
    std::vector<double> out(std::size_t(d), 0.0);
    for (std::size_t k = 0; k < weights.size(); ++k) {
      const double* row = v + (std::size_t(int(k) % n)) * d;
      for (int a = 0; a < d; ++a) out[std::size_t(a)] += weights[k] * row[a];
    }
    return out;
  }

  const FrameSubspace& frame() const { return *frame_; }

 private:
  std::shared_ptr<const FrameSubspace> frame_;
  std::vector<double> bins_;
};

}  // namespace liftdepth
