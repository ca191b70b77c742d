#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "poolgen/gradcheck.hpp"
#include "poolgen/pooling.hpp"
#include "poolgen/rng.hpp"

using namespace poolgen;

namespace {

const PoolGeometry kOne2x2{2, 2, 2, 0};

Tensor region_2x2(std::vector<double> vals) {
  return Tensor({1, 1, 2, 2}, std::move(vals));
}

Tensor ones_like(const Tensor& t) {
  Tensor w(t.shape());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = 1.0;
  return w;
}

// 2-level tree over 2x2 regions with explicit leaf filters and root mask.
TreeParams tree2(std::vector<double> v1, std::vector<double> v2,
                 std::vector<double> w3) {
  TreeParams p = TreeParams::init(2, Granularity::per_layer(), 4, 0.0, 0);
  std::copy(v1.begin(), v1.end(), p.leaves.begin());
  std::copy(v2.begin(), v2.end(), p.leaves.begin() + 4);
  std::copy(w3.begin(), w3.end(), p.masks.begin());
  return p;
}

double dot4(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (int i = 0; i < 4; ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST_CASE("2-level tree with zero mask averages the two leaf filters") {
  const std::vector<double> x{1, 2, 3, 4};
  const std::vector<double> v1{0.3, -0.1, 0.7, 0.2};
  const std::vector<double> v2{-0.5, 0.4, 0.1, 0.9};
  const TreeParams p = tree2(v1, v2, {0, 0, 0, 0});
  auto [out, cache] = tree_pool_forward(region_2x2(x), kOne2x2, p);
  CHECK(out[0] ==
        doctest::Approx(0.5 * (dot4(v1, x) + dot4(v2, x))).epsilon(1e-15));
}

TEST_CASE("saturated root gate reduces the tree to one learned filter") {
  const std::vector<double> x{1, 2, 3, 4};
  const std::vector<double> v1{1, 0, 0, 0};
  const std::vector<double> v2{0, 0, 0, 1};
  // w3 . x = 4 * 10 = 40: sigmoid saturates toward leaf 1.
  const TreeParams p = tree2(v1, v2, {4, 4, 4, 4});
  auto [out, cache] = tree_pool_forward(region_2x2(x), kOne2x2, p);
  CHECK(std::abs(out[0] - dot4(v1, x)) < 1e-12);
}

TEST_CASE("3-level tree with all-zero masks averages the four leaves") {
  TreeParams p = TreeParams::init(3, Granularity::per_layer(), 4, 0.0, 0);
  Rng rng(17);
  for (double& v : p.leaves) v = rng.normal(0.0, 1.0);
  const std::vector<double> x{1, 2, 3, 4};
  auto [out, cache] = tree_pool_forward(region_2x2(x), kOne2x2, p);
  double want = 0.0;
  for (int leaf = 0; leaf < 4; ++leaf) {
    const auto v = p.leaf(0, leaf);
    for (int i = 0; i < 4; ++i) want += 0.25 * v[i] * x[i];
  }
  CHECK(out[0] == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("2-level backward matches the closed-form leaf gradient") {
  const std::vector<double> x{1, 2, 3, 4};
  const TreeParams p = tree2({0.3, -0.1, 0.7, 0.2}, {-0.5, 0.4, 0.1, 0.9},
                             {0, 0, 0, 0});
  auto [out, cache] = tree_pool_forward(region_2x2(x), kOne2x2, p);
  TreeGrads g = tree_pool_backward(ones_like(out), cache, p);
  // sigma = 0.5: dE/dv1 = 0.5 * x.
  CHECK(g.leaves[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(g.leaves[1] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(g.leaves[2] == doctest::Approx(1.5).epsilon(1e-15));
  CHECK(g.leaves[3] == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("equal leaves kill the root mask gradient") {
  const std::vector<double> v{0.3, -0.1, 0.7, 0.2};
  const TreeParams p = tree2(v, v, {0.5, -0.2, 0.1, 0.4});
  auto [out, cache] =
      tree_pool_forward(region_2x2({1, 2, 3, 4}), kOne2x2, p);
  TreeGrads g = tree_pool_backward(ones_like(out), cache, p);
  for (int i = 0; i < 4; ++i) {
    CHECK(std::abs(g.masks[i]) < 1e-15);
  }
}

TEST_CASE("2-level input gradient with one-hot leaves") {
  // v1 = e0, v2 = e3, w3 = 0, delta = 1:
  //   gate term vanishes, grad_x = 0.5 v1 + 0.5 v2 = [0.5, 0, 0, 0.5].
  const TreeParams p = tree2({1, 0, 0, 0}, {0, 0, 0, 1}, {0, 0, 0, 0});
  auto [out, cache] =
      tree_pool_forward(region_2x2({1, 2, 3, 4}), kOne2x2, p);
  TreeGrads g = tree_pool_backward(ones_like(out), cache, p);
  CHECK(g.input[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(g.input[1] == 0.0);
  CHECK(g.input[2] == 0.0);
  CHECK(g.input[3] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("recursive and closed-form 2-level backwards agree bit for bit") {
  Rng rng(404);
  for (int trial = 0; trial < 30; ++trial) {
    const PoolGeometry g =
        trial % 2 ? PoolGeometry{3, 3, 1, 1} : PoolGeometry{2, 2, 2, 0};
    const Shape s{2, 2, 5, 5};
    const Tensor in = Tensor::gaussian(s, 0.0, 1.0, rng.next_u64());
    const Granularity gran =
        trial % 3 ? Granularity::per_layer()
                  : Granularity::per_layer_channel_region(
                        s.c, g.out_h(s.h), g.out_w(s.w));
    const TreeParams p =
        TreeParams::init(2, gran, g.region_len(), 0.5, rng.next_u64());
    auto [out, cache] = tree_pool_forward(in, g, p);
    const Tensor delta = Tensor::gaussian(out.shape(), 0.0, 1.0,
                                          rng.next_u64());
    const TreeGrads rec = tree_pool_backward(delta, cache, p);
    const TreeGrads ref = gradcheck::tree2_closed_form_backward(delta, cache, p);
    REQUIRE(rec.input.size() == ref.input.size());
    for (std::size_t i = 0; i < rec.input.size(); ++i) {
      CHECK(rec.input[i] == ref.input[i]);
    }
    CHECK(rec.leaves == ref.leaves);
    CHECK(rec.masks == ref.masks);
  }
}

TEST_CASE("tree parameter validation") {
  CHECK_THROWS_AS(TreeParams::init(1, Granularity::per_layer(), 4, 0.5, 0),
                  std::invalid_argument);
  TreeParams p = TreeParams::init(2, Granularity::per_layer(), 9, 0.5, 0);
  CHECK_THROWS_AS(
      tree_pool_forward(region_2x2({1, 2, 3, 4}), kOne2x2, p),
      std::invalid_argument);

  // Node bookkeeping for 3 levels: 4 leaves, 3 internal nodes.
  TreeParams p3 = TreeParams::init(3, Granularity::per_layer(), 4, 0.5, 0);
  CHECK(p3.leaf_count() == 4);
  CHECK(p3.internal_count() == 3);
  CHECK(p3.leaves.size() == 16);
  CHECK(p3.masks.size() == 12);
}

TEST_CASE("tree forward matches its brute-force oracle closely") {
  Rng rng(909);
  for (int trial = 0; trial < 20; ++trial) {
    const PoolGeometry g{3, 3, 1, 1};
    const Tensor in = Tensor::gaussian({1, 2, 5, 5}, 0.0, 1.0, rng.next_u64());
    const TreeParams p = TreeParams::init(3, Granularity::per_layer(),
                                          g.region_len(), 0.5, rng.next_u64());
    auto [out, cache] = tree_pool_forward(in, g, p);
    const Tensor oracle = gradcheck::brute_force_tree(in, g, p);
    REQUIRE(out.size() == oracle.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      CHECK(std::abs(out[i] - oracle[i]) < 1e-12);
    }
  }
}
