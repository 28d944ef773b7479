#include <catch2/catch_amalgamated.hpp>

#include "liftdepth/nn.hpp"

using namespace liftdepth;

TEST_CASE("tensor shape/data consistency is enforced") {
  CHECK_THROWS_AS(Tensor::from({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
  CHECK_THROWS_AS(Tensor::zeros({0, 3}), ShapeError);
  Tensor t = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.size() == 6);
  CHECK(t.all_finite());
}

TEST_CASE("inner_product basics") {
  Tensor e1 = Tensor::from({3}, {1, 0, 0});
  CHECK(inner_product(e1, e1).item() == 1.0);

  Tensor x = Tensor::from({3}, {4, -1, 7});
  Tensor z = Tensor::zeros({3});
  CHECK(inner_product(x, z).item() == 0.0);

  Tensor a = Tensor::from({3}, {1, 2, 3});
  Tensor b = Tensor::from({3}, {4, 5, 6});
  CHECK(inner_product(a, b).item() == 32.0);

  Tensor bad = Tensor::from({2}, {1, 2});
  CHECK_THROWS_AS(inner_product(a, bad), ShapeError);
}

TEST_CASE("softmax symmetry and hand values") {
  Tensor two = softmax(Tensor::from({2}, {0, 0}));
  CHECK(two[0] == Catch::Approx(0.5).margin(1e-12));
  CHECK(two[1] == Catch::Approx(0.5).margin(1e-12));

  Tensor four = softmax(Tensor::from({4}, {3.7, 3.7, 3.7, 3.7}));
  for (int i = 0; i < 4; ++i) CHECK(four[i] == Catch::Approx(0.25).margin(1e-12));

  Tensor p = softmax(Tensor::from({2}, {std::log(2.0), 0.0}));
  CHECK(p[0] == Catch::Approx(2.0 / 3.0).margin(1e-12));
  CHECK(p[1] == Catch::Approx(1.0 / 3.0).margin(1e-12));
}

TEST_CASE("softmax sums to one and shifts away") {
  Rng rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    int n = rng.uniform_int(2, 9);
    Tensor x = Tensor::zeros({n});
    for (int i = 0; i < n; ++i) x[i] = rng.uniform(-8, 8);
    Tensor p = softmax(x);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      total += p[i];
      CHECK(p[i] >= 0.0);
    }
    CHECK(std::abs(total - 1.0) < 1e-6);

    double c = rng.uniform(-30, 30);
    Tensor shifted = softmax(affine_const(x, 1.0, c));
    for (int i = 0; i < n; ++i) CHECK(std::abs(shifted[i] - p[i]) < 1e-6);
  }
}

TEST_CASE("conv2d identity, averaging and hand value") {
  Rng rng(7);
  Tensor x = Tensor::zeros({2, 4, 4});
  for (int i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1, 1);

  // 1x1 identity kernel per channel
  Tensor ident = Tensor::zeros({2, 2, 1, 1});
  ident[0 * 2 + 0] = 1.0;
  ident[1 * 2 + 1] = 1.0;
  Tensor y = conv2d(x, ident);
  REQUIRE(y.shape() == x.shape());
  for (int i = 0; i < x.size(); ++i) CHECK(y[i] == x[i]);

  // 3x3 uniform kernel keeps a constant image constant in the interior
  Tensor flat = Tensor::full({1, 5, 5}, 3.25);
  Tensor k9 = Tensor::full({1, 1, 3, 3}, 1.0 / 9.0);
  Tensor avg = conv2d(flat, k9, 1, 1);
  for (int yy = 1; yy < 4; ++yy)
    for (int xx = 1; xx < 4; ++xx)
      CHECK(avg[yy * 5 + xx] == Catch::Approx(3.25).margin(1e-12));

  Tensor small = Tensor::from({1, 2, 2}, {1, 2, 3, 4});
  Tensor k2 = Tensor::from({1, 1, 1, 1}, {2});
  Tensor doubled = conv2d(small, k2);
  CHECK(doubled.values() == std::vector<double>{2, 4, 6, 8});

  Tensor wrong = Tensor::zeros({3, 1, 1, 1});
  CHECK_THROWS_AS(conv2d(x, wrong), ShapeError);
  Tensor even = Tensor::zeros({1, 2, 2, 2});
  CHECK_THROWS_AS(conv2d(x, even), ShapeError);
}

TEST_CASE("backward on sum of squares and linear maps") {
  Tensor x = Tensor::from({2}, {1, 2}, true);
  {
    Graph g;
    Tensor loss = inner_product(x, x);
    g.backward(loss);
  }
  CHECK(x.grad()[0] == Catch::Approx(2.0));
  CHECK(x.grad()[1] == Catch::Approx(4.0));

  // constant loss: gradients stay zero
  Tensor w = Tensor::from({2}, {5, -3}, true);
  {
    Graph g;
    Tensor loss = Tensor::scalar(42.0, true);
    g.backward(loss);
  }
  CHECK_FALSE(w.has_grad());

  Tensor data = Tensor::from({2}, {3, 5});
  w.zero_grad();
  {
    Graph g;
    Tensor loss = inner_product(w, data);
    g.backward(loss);
  }
  CHECK(w.grad()[0] == 3.0);
  CHECK(w.grad()[1] == 5.0);

  Tensor vec = Tensor::from({2}, {1, 1}, true);
  Graph g;
  Tensor notscalar = add(vec, vec);
  CHECK_THROWS_AS(g.backward(notscalar), ShapeError);
}

TEST_CASE("gradients of unused parameters are zero after backward") {
  Tensor used = Tensor::from({2}, {1, 2}, true);
  Tensor unused = Tensor::from({2}, {3, 4}, true);
  Graph g;
  Tensor a = inner_product(used, used);
  Tensor b = inner_product(unused, unused);  // recorded but not reachable from loss
  Tensor loss = scale(a, 2.0);
  g.backward(loss);
  CHECK(used.grad()[0] == Catch::Approx(4.0));
  CHECK(unused.grad()[0] == 0.0);
  CHECK(b.item() == 25.0);
}

TEST_CASE("finite_diff_check on linear, quadratic and constant functions") {
  ParamStore ps;
  Rng rng(3);
  Tensor p = ps.add("p", Tensor::from({3}, {0.4, -1.2, 2.0}));
  Tensor c = Tensor::from({3}, {2, -1, 0.5});

  auto linear = [&]() { return inner_product(p, c); };
  GradCheckReport r1 = finite_diff_check(linear, ps, 1e-4, 1e-8);
  CHECK(r1.deterministic);
  CHECK(r1.max_rel_err < 1e-8);

  ParamStore ps2;
  Tensor q = ps2.add("q", Tensor::from({1}, {1.0}));
  auto quadratic = [&]() { return inner_product(q, q); };
  GradCheckReport r2 = finite_diff_check(quadratic, ps2, 1e-4, 1e-6);
  CHECK(r2.max_rel_err < 1e-6);

  ParamStore ps3;
  ps3.add("r", Tensor::from({2}, {1.0, 2.0}));
  auto constant = [&]() { return Tensor::scalar(3.5, true); };
  GradCheckReport r3 = finite_diff_check(constant, ps3, 1e-4, 1e-8);
  CHECK(r3.pass());
  CHECK(r3.max_rel_err == 0.0);
}

TEST_CASE("finite_diff_check flags a non-deterministic function") {
  ParamStore ps;
  Tensor p = ps.add("p", Tensor::from({1}, {1.0}));
  int calls = 0;
  auto noisy = [&]() {
    ++calls;
    return Tensor::scalar(double(calls), true);
  };
  GradCheckReport r = finite_diff_check(noisy, ps, 1e-4, 1e-4);
  CHECK_FALSE(r.deterministic);
  CHECK_FALSE(r.pass());
}

TEST_CASE("group normalization fixed point and hand case") {
  // input already zero-mean unit-variance, affine (1,0): unchanged within 1e-5
  Tensor x = Tensor::from({1, 1, 2}, {-1, 1});
  Tensor y = group_norm_raw(x, 1);
  CHECK(std::abs(y[0] - (-1.0)) < 1e-5);
  CHECK(std::abs(y[1] - 1.0) < 1e-5);

  // constant input: zeros before affine
  Tensor flat = Tensor::full({2, 3, 3}, 7.0);
  Tensor z = group_norm_raw(flat, 2);
  for (int i = 0; i < z.size(); ++i) CHECK(z[i] == 0.0);

  // [1,3] single group -> [-1,1] (up to the 1e-5 variance floor)
  Tensor pair = Tensor::from({2, 1, 1}, {1, 3});
  Tensor n = group_norm_raw(pair, 2);
  double expect = 1.0 / std::sqrt(1.0 + 1e-5);
  CHECK(n[0] == Catch::Approx(-expect).margin(1e-12));
  CHECK(n[1] == Catch::Approx(expect).margin(1e-12));

  CHECK_THROWS_AS(group_norm_raw(Tensor::zeros({3, 2, 2}), 2), ConfigError);
}

TEST_CASE("forward evaluation is bitwise deterministic") {
  Rng rng(11);
  Tensor x = Tensor::zeros({3, 6, 6});
  for (int i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1, 1);
  Tensor k = Tensor::zeros({2, 3, 3, 3});
  for (int i = 0; i < k.size(); ++i) k[i] = rng.uniform(-1, 1);

  auto run = [&]() {
    Tensor y = relu(conv2d(x, k, 1, 1));
    Tensor n = group_norm_raw(y, 2);
    return softmax(global_avg_pool(n));
  };
  Tensor a = run();
  Tensor b = run();
  REQUIRE(a.size() == b.size());
  for (int i = 0; i < a.size(); ++i) {
    CHECK(std::memcmp(&a.values()[std::size_t(i)], &b.values()[std::size_t(i)],
                      sizeof(double)) == 0);
  }
}

TEST_CASE("param store iterates in registration order and rejects duplicates") {
  ParamStore ps;
  Rng rng(1);
  ps.add_uniform("b.first", {2, 2}, 4, rng);
  ps.add_uniform("a.second", {3}, 3, rng);
  ps.add_zeros("c.third", {1});
  REQUIRE(ps.count() == 3);
  CHECK(ps.entries()[0].first == "b.first");
  CHECK(ps.entries()[1].first == "a.second");
  CHECK(ps.entries()[2].first == "c.third");
  CHECK(ps.total_scalars() == 8);
  CHECK_THROWS_AS(ps.add_zeros("b.first", {1}), ConfigError);
}

TEST_CASE("seeded initialization is reproducible and bounded") {
  auto build = [](std::uint64_t seed) {
    ParamStore ps;
    Rng rng(seed);
    ps.add_uniform("w", {16, 4}, 4, rng);
    return ps.get("w");
  };
  Tensor a = build(5), b = build(5), c = build(6);
  bool identical = true, differs = false;
  for (int i = 0; i < a.size(); ++i) {
    identical = identical && a[i] == b[i];
    differs = differs || a[i] != c[i];
    CHECK(std::abs(a[i]) <= 0.5);  // sqrt(1/4)
  }
  CHECK(identical);
  CHECK(differs);
}
