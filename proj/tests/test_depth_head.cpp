#include <catch2/catch_amalgamated.hpp>

#include "liftdepth/depth_head.hpp"
#include "oracles.hpp"

using namespace liftdepth;

namespace {

Tensor random_map(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t = Tensor::zeros(std::move(s));
  for (int i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("pyramid context: constant invariance and shape contract") {
  ParamStore ps;
  Rng rng(4);
  PyramidContext pqi(ps, "pqi", 4, 6, rng);

  Tensor flat = Tensor::full({4, 8, 8}, 0.37);
  Tensor out = pqi(flat);
  REQUIRE(out.shape() == Shape{6, 8, 8});
  for (int c = 0; c < 6; ++c)
    for (int i = 1; i < 64; ++i)
      CHECK(out[c * 64 + i] == Catch::Approx(out[c * 64]).margin(1e-12));

  // grids clamp for inputs smaller than 6x6
  Tensor tiny = random_map({4, 2, 2}, rng);
  CHECK(pqi(tiny).shape() == Shape{6, 2, 2});
  Tensor one = random_map({4, 1, 1}, rng);
  CHECK(pqi(one).shape() == Shape{6, 1, 1});
}

TEST_CASE("pyramid context matches the straight-line oracle") {
  for (int trial = 0; trial < 22; ++trial) {
    Rng rng(std::uint64_t(trial) * 17 + 3);
    int c = rng.uniform_int(2, 6);
    int h = rng.uniform_int(2, 9), w = rng.uniform_int(2, 9);
    ParamStore ps;
    PyramidContext pqi(ps, "pqi", c, c, rng);
    Tensor x = random_map({c, h, w}, rng);
    Tensor got = pqi(x);
    oracle::Map expect = oracle::pyramid_context(ps, "pqi", oracle::Map::from(x));
    REQUIRE(got.size() == int(expect.v.size()));
    for (int i = 0; i < got.size(); ++i)
      CHECK(got[i] == Catch::Approx(expect.v[std::size_t(i)]).margin(1e-10));
  }
}

TEST_CASE("bin width prediction: uniform at zero init, valid distribution, oracle") {
  ParamStore ps;
  Rng rng(6);
  BinWidthHead head(ps, "bcp", 3, 8, rng);
  head.mlp().second().zero();  // zero head -> zero logits -> uniform widths
  Tensor x = random_map({3, 4, 4}, rng);
  Tensor w0 = head.widths(x);
  for (int i = 0; i < 8; ++i) CHECK(w0[i] == Catch::Approx(0.125).margin(1e-12));

  ParamStore ps2;
  BinWidthHead learned(ps2, "bcp", 3, 5, rng);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor input = random_map({3, 3, 3}, rng, -2.0, 2.0);
    Tensor w = learned.widths(input);
    double total = 0.0;
    for (int i = 0; i < 5; ++i) {
      CHECK(w[i] >= 0.0);
      total += w[i];
    }
    CHECK(total == Catch::Approx(1.0).margin(1e-9));

    // straight-line oracle: pooling + mlp + softmax
    std::vector<double> pooled = oracle::global_avg_pool(oracle::Map::from(input));
    std::vector<double> expect = oracle::softmax(oracle::mlp_vec(ps2, "bcp.mlp", pooled));
    for (int i = 0; i < 5; ++i)
      CHECK(w[i] == Catch::Approx(expect[std::size_t(i)]).margin(1e-12));
  }
}

TEST_CASE("bin centres: hand evaluations") {
  Tensor single = bin_centres(Tensor::from({1}, {1.0}), 0.0, 10.0);
  CHECK(single[0] == 5.0);

  Tensor uniform4 = bin_centres(Tensor::full({4}, 0.25), 0.0, 80.0);
  CHECK(uniform4[0] == Catch::Approx(10.0).margin(1e-12));
  CHECK(uniform4[1] == Catch::Approx(30.0).margin(1e-12));
  CHECK(uniform4[2] == Catch::Approx(50.0).margin(1e-12));
  CHECK(uniform4[3] == Catch::Approx(70.0).margin(1e-12));

  Tensor halves = bin_centres(Tensor::from({2}, {0.5, 0.5}), 2.0, 4.0);
  CHECK(halves[0] == Catch::Approx(2.5).margin(1e-12));
  CHECK(halves[1] == Catch::Approx(3.5).margin(1e-12));

  CHECK_THROWS_AS(bin_centres(Tensor::from({2}, {1.2, -0.2}), 0.0, 1.0), ValueError);
  CHECK_THROWS_AS(bin_centres(Tensor::from({2}, {0.4, 0.4}), 0.0, 1.0), ValueError);
}

TEST_CASE("bin centres: monotone, in range, telescoping over random widths") {
  Rng rng(1234);
  for (int trial = 0; trial < 1000; ++trial) {
    int n = rng.uniform_int(2, 12);
    Tensor logits = random_map({n}, rng, -3.0, 3.0);
    Tensor widths = softmax(logits);
    double d_min = rng.uniform(0.1, 5.0);
    double d_max = d_min + rng.uniform(0.5, 80.0);
    Tensor centres = bin_centres(widths, d_min, d_max);
    double delta = d_max - d_min;

    for (int k = 0; k < n; ++k) {
      CHECK(centres[k] > d_min);
      CHECK(centres[k] < d_max);
      if (k > 0) CHECK(centres[k] > centres[k - 1]);
    }
    // midpoint telescoping: centre_{k+1} - centre_k = (b_k + b_{k+1}) * delta / 2
    for (int k = 0; k + 1 < n; ++k) {
      double gap = centres[k + 1] - centres[k];
      CHECK(gap == Catch::Approx((widths[k] + widths[k + 1]) * delta / 2.0).margin(1e-10));
    }
    // last centre sits half its width below the far end (up to softmax roundoff)
    CHECK(centres[n - 1] ==
          Catch::Approx(d_max - delta * widths[n - 1] / 2.0).margin(1e-9));
  }
}

TEST_CASE("depth from probabilities: vertex, symmetry, hand value, bounds") {
  Tensor centres = Tensor::from({3}, {1.0, 2.0, 4.0});

  Tensor onehot = Tensor::from({3, 1, 1}, {0, 0, 1});
  CHECK(depth_from_probs(onehot, centres)[0] == 4.0);

  Tensor uniform = Tensor::from({2, 1, 1}, {0.5, 0.5});
  Tensor two = Tensor::from({2}, {10.0, 30.0});
  CHECK(depth_from_probs(uniform, two)[0] == Catch::Approx(20.0).margin(1e-12));

  Tensor p = Tensor::from({3, 1, 1}, {0.2, 0.3, 0.5});
  CHECK(depth_from_probs(p, centres)[0] == Catch::Approx(2.8).margin(1e-12));

  Tensor bad = Tensor::from({2, 1, 1}, {0.6, 0.6});
  CHECK_THROWS_AS(depth_from_probs(bad, two), ValueError);

  // convex-combination bounds over random volumes
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    int n = rng.uniform_int(2, 6), h = rng.uniform_int(1, 4), w = rng.uniform_int(1, 4);
    Tensor logits = random_map({n, h, w}, rng, -4.0, 4.0);
    Tensor probs = softmax_channels(logits);
    Tensor cs = bin_centres(softmax(random_map({n}, rng, -2.0, 2.0)), 1.0, 10.0);
    Tensor d = depth_from_probs(probs, cs);
    double lo = cs[0], hi = cs[n - 1];
    for (int i = 0; i < d.size(); ++i) {
      CHECK(d[i] >= lo - 1e-12);
      CHECK(d[i] <= hi + 1e-12);
    }
  }
}

TEST_CASE("silog loss: zero residual, single-pixel hand value, lambda limits") {
  Tensor gt = Tensor::from({2, 2}, {1.0, 2.0, 4.0, 8.0});
  Tensor mask = Tensor::full({2, 2}, 1.0);
  CHECK(silog_loss(gt.clone(), gt, mask).item() == 0.0);

  // single pixel, pred = 2 gt: L = alpha |ln 2| sqrt(1 - lambda)
  Tensor p1 = Tensor::from({1, 1}, {6.0});
  Tensor g1 = Tensor::from({1, 1}, {3.0});
  Tensor m1 = Tensor::full({1, 1}, 1.0);
  double expect = 10.0 * std::log(2.0) * std::sqrt(0.15);
  CHECK(silog_loss(p1, g1, m1, 10.0, 0.85).item() == Catch::Approx(expect).margin(1e-6));

  // lambda = 1: invariant to global scaling, both directions
  Rng rng(3);
  Tensor pred = Tensor::zeros({3, 3});
  for (int i = 0; i < 9; ++i) pred[i] = rng.uniform(1.0, 9.0);
  Tensor gt2 = Tensor::zeros({3, 3});
  for (int i = 0; i < 9; ++i) gt2[i] = rng.uniform(1.0, 9.0);
  Tensor m = Tensor::full({3, 3}, 1.0);
  double base1 = silog_loss(pred, gt2, m, 10.0, 1.0).item();
  for (double c : {2.5, 0.3}) {
    Tensor scaled = affine_const(pred, c, 0.0);
    CHECK(silog_loss(scaled, gt2, m, 10.0, 1.0).item() ==
          Catch::Approx(base1).margin(1e-9));
  }
  // lambda = 0.85: scaling does change the loss
  double base085 = silog_loss(pred, gt2, m, 10.0, 0.85).item();
  Tensor scaled = affine_const(pred, 2.5, 0.0);
  CHECK(std::abs(silog_loss(scaled, gt2, m, 10.0, 0.85).item() - base085) > 1e-3);

  // pred = c * gt with lambda = 1 gives exactly zero
  Tensor prop = affine_const(gt2, 3.0, 0.0);
  CHECK(silog_loss(prop, gt2, m, 10.0, 1.0).item() == Catch::Approx(0.0).margin(1e-12));

  // error paths
  CHECK_THROWS_AS(silog_loss(pred, gt2, Tensor::zeros({3, 3})), ValueError);
  Tensor neg = pred.clone();
  neg[0] = -1.0;
  CHECK_THROWS_AS(silog_loss(neg, gt2, m), ValueError);
}

TEST_CASE("loss params defaults") {
  LossParams lp;
  CHECK(lp.alpha == 10.0);
  CHECK(lp.lambda == 0.85);
  CHECK(lp.alpha > 0.0);
  CHECK(lp.lambda >= 0.0);
  CHECK(lp.lambda <= 1.0);
}
