#include <catch2/catch_amalgamated.hpp>

#include "liftdepth/edge_lift.hpp"
#include "oracles.hpp"

using namespace liftdepth;

namespace {

Tensor random_map(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t = Tensor::zeros(std::move(s));
  for (int i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("edge coefficients: symmetry, saturation and brute-force softmax") {
  // constant logits across channels -> alpha1 = 0.5: zero all conv params so
  // f_ECN output is identically zero
  ParamStore ps;
  Rng rng(21);
  EdgeLift lift(ps, "er", 4, rng);
  for (const char* leaf : {"er.cp.conv1.w", "er.cp.conv1.b", "er.cp.conv2.w",
                           "er.cp.conv2.b", "er.cp.conv3.w", "er.cp.conv3.b"}) {
    Tensor t = ps.get(leaf);
    t.values().assign(std::size_t(t.size()), 0.0);
  }
  Tensor x = random_map({4, 3, 3}, rng);
  EdgeCoefficients sym = lift.coefficients(x);
  for (int i = 0; i < sym.alpha1.size(); ++i) {
    CHECK(sym.alpha1[i] == Catch::Approx(0.5).margin(1e-12));
    CHECK(sym.alpha2[i] == Catch::Approx(0.5).margin(1e-12));
  }

  // a dominant first-channel logit saturates alpha1 -> 1: steer conv3's bias
  Tensor b3 = ps.get("er.cp.conv3.b");
  b3[0] = 60.0;
  EdgeCoefficients sat = lift.coefficients(x);
  for (int i = 0; i < sat.alpha1.size(); ++i) {
    CHECK(sat.alpha1[i] == Catch::Approx(1.0).margin(1e-9));
    CHECK(sat.alpha2[i] == Catch::Approx(0.0).margin(1e-9));
  }

  // N=4 logits [ln2,0,0,0]: probs [2/5,1/5,1/5,1/5], alpha1 = p1+p2 = 3/5
  b3[0] = std::log(2.0);
  EdgeCoefficients hand = lift.coefficients(x);
  for (int i = 0; i < hand.alpha1.size(); ++i)
    CHECK(hand.alpha1[i] == Catch::Approx(0.6).margin(1e-12));
}

TEST_CASE("edge coefficients contract: range, exact complement, even channels") {
  ParamStore ps;
  Rng rng(31);
  EdgeLift lift(ps, "er", 6, rng);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor x = random_map({6, 4, 5}, rng, -3.0, 3.0);
    EdgeCoefficients c = lift.coefficients(x);
    for (int i = 0; i < c.alpha1.size(); ++i) {
      CHECK(c.alpha1[i] >= 0.0);
      CHECK(c.alpha1[i] <= 1.0);
      CHECK(c.alpha1[i] + c.alpha2[i] == 1.0);  // exact by construction
    }
  }
  ParamStore ps2;
  CHECK_THROWS_AS(EdgeLift(ps2, "er", 5, rng), ConfigError);
}

TEST_CASE("edge coefficients are invariant to per-pixel logit shifts") {
  Rng rng(77);
  int n = 6, h = 4, w = 4;
  Tensor logits = random_map({n, h, w}, rng, -4.0, 4.0);
  Tensor shift_plane = random_map({1, h, w}, rng, -20.0, 20.0);

  auto alpha_from = [&](const Tensor& lg) {
    return sum_channels(slice_front(softmax_channels(lg), 0, n / 2));
  };
  Tensor base = alpha_from(logits);

  Tensor shifted_logits = Tensor::zeros({n, h, w});
  for (int c = 0; c < n; ++c)
    for (int i = 0; i < h * w; ++i)
      shifted_logits[c * h * w + i] = logits[c * h * w + i] + shift_plane[i];
  Tensor shifted = alpha_from(shifted_logits);

  for (int i = 0; i < base.size(); ++i)
    CHECK(shifted[i] == Catch::Approx(base[i]).margin(1e-9));
}

TEST_CASE("edge transform hand cases and the segment invariant") {
  // identical endpoints: F_e = v regardless of alpha
  Tensor v = Tensor::from({2}, {1.5, -2.0});
  EdgeSubspace same = EdgeSubspace::from_vectors(v, v.clone());
  Tensor zero = Tensor::zeros({2, 2, 2});
  Rng rng(5);
  Tensor a1 = random_map({1, 2, 2}, rng, 0.0, 1.0);
  EdgeCoefficients coeffs{a1, affine_const(a1, -1.0, 1.0)};
  Tensor fused = EdgeLift::transform(zero, same, coeffs);
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < 4; ++i) CHECK(fused[c * 4 + i] == Catch::Approx(v[c]).margin(1e-15));

  // alpha1 = 1 everywhere: F_e = edge vector
  EdgeSubspace basis =
      EdgeSubspace::from_vectors(Tensor::from({2}, {4, 0}), Tensor::from({2}, {0, 4}));
  Tensor ones = Tensor::full({1, 1, 1}, 1.0);
  EdgeCoefficients vertex{ones, affine_const(ones, -1.0, 1.0)};
  Tensor fe1 = EdgeLift::transform(Tensor::zeros({2, 1, 1}), basis, vertex);
  CHECK(fe1[0] == 4.0);
  CHECK(fe1[1] == 0.0);

  // alpha1 = 0.25, e1=[4,0], e2=[0,4] -> F_e = [1,3]
  Tensor quarter = Tensor::full({1, 1, 1}, 0.25);
  EdgeCoefficients mix{quarter, affine_const(quarter, -1.0, 1.0)};
  Tensor fe = EdgeLift::transform(Tensor::zeros({2, 1, 1}), basis, mix);
  CHECK(fe[0] == Catch::Approx(1.0).margin(1e-15));
  CHECK(fe[1] == Catch::Approx(3.0).margin(1e-15));

  // dimension mismatch rejected
  CHECK_THROWS_AS(EdgeLift::transform(Tensor::zeros({3, 1, 1}), basis, mix), ShapeError);

  // segment invariant: F_e = e2 + alpha1 (e1 - e2) within 1e-12
  ParamStore ps;
  EdgeLift lift(ps, "er", 4, rng);
  Tensor x = random_map({4, 3, 3}, rng);
  EdgeCoefficients c = lift.coefficients(x);
  Tensor out = lift(x);
  Tensor e1 = lift.subspace().edge(), e2 = lift.subspace().nonedge();
  for (int ch = 0; ch < 4; ++ch)
    for (int i = 0; i < 9; ++i) {
      double fe_val = out[ch * 9 + i] - x[ch * 9 + i];
      double expect = e2[ch] + c.alpha1[i] * (e1[ch] - e2[ch]);
      CHECK(fe_val == Catch::Approx(expect).margin(1e-12));
    }
}

TEST_CASE("edge lift matches the straight-line oracle on random tiny configs") {
  for (int trial = 0; trial < 22; ++trial) {
    Rng rng(std::uint64_t(trial) * 53 + 11);
    int n = 2 * rng.uniform_int(1, 3);
    int h = rng.uniform_int(2, 5), w = rng.uniform_int(2, 5);
    ParamStore ps;
    EdgeLift lift(ps, "er", n, rng);
    Tensor x = random_map({n, h, w}, rng);
    Tensor got = lift(x);
    oracle::Map expect = oracle::edge_lift(ps, "er", oracle::Map::from(x));
    REQUIRE(got.size() == int(expect.v.size()));
    for (int i = 0; i < got.size(); ++i)
      CHECK(got[i] == Catch::Approx(expect.v[std::size_t(i)]).margin(1e-10));
  }
}

TEST_CASE("edge lift gradients pass the finite-difference check") {
  ParamStore ps;
  Rng rng(8);
  EdgeLift lift(ps, "er", 4, rng);
  Tensor x = random_map({4, 4, 4}, rng);
  Tensor weights = random_map({4, 4, 4}, rng);
  auto f = [&]() { return sum(mul(lift(x), weights)); };
  GradCheckReport r = finite_diff_check(f, ps, 1e-5, 1e-4);
  INFO("worst " << r.worst_param << " rel " << r.max_rel_err);
  CHECK(r.pass());
  bool saw_edge = false, saw_conv = false;
  for (const auto& e : r.entries) {
    if (e.name == "er.basis.edge" || e.name == "er.basis.nonedge") saw_edge = true;
    if (e.name.find(".cp.conv") != std::string::npos) saw_conv = true;
  }
  CHECK(saw_edge);
  CHECK(saw_conv);
}
