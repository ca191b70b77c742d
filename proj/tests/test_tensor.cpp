#include <doctest.h>

#include <cmath>
#include <set>
#include <stdexcept>

#include "poolgen/rng.hpp"
#include "poolgen/tensor.hpp"

using namespace poolgen;

TEST_CASE("zeros fills every element") {
  const Tensor t = Tensor::zeros({1, 1, 2, 2});
  REQUIRE(t.size() == 4);
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(t[i] == 0.0);

  const Tensor big = Tensor::zeros({2, 3, 4, 4});
  CHECK(big.size() == 96);
  for (std::size_t i = 0; i < big.size(); ++i) CHECK(big[i] == 0.0);

  const Tensor one = Tensor::zeros({1, 1, 1, 1});
  CHECK(one.size() == 1);
  CHECK(one[0] == 0.0);
}

TEST_CASE("invalid shapes are rejected") {
  CHECK_THROWS_AS(Tensor::zeros({0, 1, 2, 2}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor::zeros({1, 1, 0, 2}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor({1, 1, 2, 2}, {1.0, 2.0}), std::invalid_argument);
}

TEST_CASE("gaussian init with zero stddev is exactly the mean") {
  const Tensor t = Tensor::gaussian({1, 2, 3, 3}, 0.3, 0.0, 12345);
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(t[i] == 0.3);
}

TEST_CASE("gaussian init sample statistics") {
  const Tensor t = Tensor::gaussian({1, 1, 100, 100}, 0.0, 0.5, 42);
  double mean = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) mean += t[i];
  mean /= t.size();
  double var = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    var += (t[i] - mean) * (t[i] - mean);
  }
  var /= t.size();
  CHECK(std::abs(mean) < 0.05);
  CHECK(std::sqrt(var) > 0.45);
  CHECK(std::sqrt(var) < 0.55);
}

TEST_CASE("gaussian init is deterministic per seed") {
  const Tensor a = Tensor::gaussian({2, 2, 4, 4}, 0.0, 1.0, 99);
  const Tensor b = Tensor::gaussian({2, 2, 4, 4}, 0.0, 1.0, 99);
  const Tensor c = Tensor::gaussian({2, 2, 4, 4}, 0.0, 1.0, 100);
  REQUIRE(a.size() == b.size());
  bool all_equal = true;
  bool any_differs_from_c = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    all_equal = all_equal && a[i] == b[i];
    any_differs_from_c = any_differs_from_c || a[i] != c[i];
  }
  CHECK(all_equal);
  CHECK(any_differs_from_c);
}

TEST_CASE("single pooling window covers the whole input") {
  const Tensor t({1, 1, 2, 2}, {1, 2, 3, 4});
  const PoolGeometry g{2, 2, 2, 0};
  int count = 0;
  for_each_region(t, g, [&](const Region& r) {
    ++count;
    CHECK(r.n == 0);
    CHECK(r.oy == 0);
    CHECK(r.ox == 0);
    REQUIRE(r.values.size() == 4);
    CHECK(r.values[0] == 1.0);
    CHECK(r.values[1] == 2.0);
    CHECK(r.values[2] == 3.0);
    CHECK(r.values[3] == 4.0);
    for (std::ptrdiff_t idx : r.input_index) CHECK(idx >= 0);
  });
  CHECK(count == 1);
}

TEST_CASE("overlapping stride-1 windows enumerate in order") {
  // 3x3 input 1..9, 2x2 regions, stride 1: four windows, by hand:
  //   (1,2,4,5) (2,3,5,6) (4,5,7,8) (5,6,8,9)
  const Tensor t({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  const PoolGeometry g{2, 2, 1, 0};
  const double expect[4][4] = {
      {1, 2, 4, 5}, {2, 3, 5, 6}, {4, 5, 7, 8}, {5, 6, 8, 9}};
  int count = 0;
  for_each_region(t, g, [&](const Region& r) {
    REQUIRE(count < 4);
    CHECK(r.oy == count / 2);
    CHECK(r.ox == count % 2);
    for (int i = 0; i < 4; ++i) CHECK(r.values[i] == expect[count][i]);
    ++count;
  });
  CHECK(count == 4);
}

TEST_CASE("padded window flags padding slots") {
  // 2x2 input, 3x3 region, stride 2, pad 1: one window whose first row and
  // first column are padding (5 padded slots).
  const Tensor t({1, 1, 2, 2}, {1, 2, 3, 4});
  const PoolGeometry g{3, 3, 2, 1};
  int count = 0;
  for_each_region(t, g, [&](const Region& r) {
    ++count;
    int pad_slots = 0;
    for (std::ptrdiff_t idx : r.input_index) pad_slots += idx < 0 ? 1 : 0;
    CHECK(pad_slots == 5);
    const std::vector<double> want{0, 0, 0, 0, 1, 2, 0, 3, 4};
    REQUIRE(r.values.size() == want.size());
    for (std::size_t i = 0; i < want.size(); ++i) {
      CHECK(r.values[i] == want[i]);
      CHECK((r.input_index[i] < 0) == (i < 4 || i == 6));
    }
  });
  CHECK(count == 1);
}

TEST_CASE("region count matches the output grid") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const Shape s{1 + rng.uniform_int(3), 1 + rng.uniform_int(3),
                  3 + rng.uniform_int(6), 3 + rng.uniform_int(6)};
    const PoolGeometry g{2, 2, 1 + rng.uniform_int(2), rng.uniform_int(2)};
    const Tensor t = Tensor::gaussian(s, 0.0, 1.0, rng.next_u64());
    RegionScanner scan(s, g);
    std::size_t count = 0;
    for_each_region(t, g, [&](const Region&) { ++count; });
    CHECK(count == scan.region_count());
    CHECK(count == static_cast<std::size_t>(s.n) * s.c * scan.out_h() *
                       scan.out_w());
  }
}

TEST_CASE("stride == region size partitions the input") {
  const Shape s{2, 2, 6, 6};
  const Tensor t = Tensor::gaussian(s, 0.0, 1.0, 3);
  const PoolGeometry g{2, 2, 2, 0};
  std::set<std::ptrdiff_t> seen;
  std::size_t total = 0;
  for_each_region(t, g, [&](const Region& r) {
    for (std::ptrdiff_t idx : r.input_index) {
      REQUIRE(idx >= 0);
      CHECK(seen.insert(idx).second);  // no element appears twice
      ++total;
    }
  });
  CHECK(total == t.size());
}

TEST_CASE("empty pooling output is an error") {
  const Tensor t({1, 1, 2, 2}, {1, 2, 3, 4});
  CHECK_THROWS_AS(RegionScanner(t.shape(), PoolGeometry{3, 3, 2, 0}),
                  std::invalid_argument);
}

TEST_CASE("matmul basics") {
  Matrix id(2, 2);
  id.at(0, 0) = 1.0;
  id.at(1, 1) = 1.0;
  Matrix m(2, 2);
  m.at(0, 0) = 1.0;
  m.at(0, 1) = 2.0;
  m.at(1, 0) = 3.0;
  m.at(1, 1) = 4.0;

  const Matrix prod = matmul(MatView::of(id), MatView::of(m));
  CHECK(prod.at(0, 0) == 1.0);
  CHECK(prod.at(0, 1) == 2.0);
  CHECK(prod.at(1, 0) == 3.0);
  CHECK(prod.at(1, 1) == 4.0);

  Matrix row(1, 2);
  row.at(0, 0) = 1.0;
  row.at(0, 1) = 2.0;
  Matrix col(2, 1);
  col.at(0, 0) = 3.0;
  col.at(1, 0) = 4.0;
  const Matrix dot = matmul(MatView::of(row), MatView::of(col));
  REQUIRE(dot.rows == 1);
  REQUIRE(dot.cols == 1);
  CHECK(dot.at(0, 0) == 11.0);

  const Matrix zeros(3, 2);
  const Matrix z = matmul(MatView::of(zeros), MatView::of(col));
  for (double v : z.data) CHECK(v == 0.0);

  CHECK_THROWS_AS(matmul(MatView::of(row), MatView::of(row)),
                  std::invalid_argument);
}
