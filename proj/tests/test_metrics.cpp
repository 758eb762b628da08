#include <gtest/gtest.h>

#include <algorithm>
#include <functional>
#include <random>

#include "hybridnet/metrics.hpp"
#include "hybridnet/random.hpp"
#include "support.hpp"

using namespace hybridnet;
using namespace testing_support;

namespace {

std::vector<int> checkerboard(int rows, int cols) {
  std::vector<int> z;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) z.push_back((r + c) % 2 == 0 ? 1 : -1);
  }
  return z;
}

std::vector<int> seed_split() {
  std::vector<int> z(25, -1);
  std::fill(z.begin(), z.begin() + 14, 1);
  return z;
}

double pz(const std::vector<int>& z) { return polarization_index(std::span<const int>(z)); }
std::optional<double> nci_of(const std::vector<int>& z, const GridTopology& g, NeighborhoodOptions o = {}) {
  return nci(std::span<const int>(z), g, o);
}

// Lattice automorphisms of a square grid, as index maps.
std::vector<std::function<std::size_t(int, int)>> square_symmetries(int n) {
  return {
      [n](int r, int c) { return std::size_t(c * n + (n - 1 - r)); },
      [n](int r, int c) { return std::size_t((n - 1 - r) * n + (n - 1 - c)); },
      [n](int r, int c) { return std::size_t((n - 1 - c) * n + r); },
      [n](int r, int c) { return std::size_t(r * n + (n - 1 - c)); },
      [n](int r, int c) { return std::size_t((n - 1 - r) * n + c); },
      [n](int r, int c) { return std::size_t(c * n + r); },
  };
}

}  // namespace

TEST(Polarization, AllZero) { EXPECT_EQ(pz(std::vector<int>(25, 0)), 0.0); }

TEST(Polarization, SymmetricPair) { EXPECT_EQ(pz({1, -1}), 1.0); }

TEST(Polarization, SeedSplitIsExact) { EXPECT_EQ(pz(seed_split()), 0.9856); }

TEST(Polarization, EmptyVectorThrows) {
  try {
    pz({});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::empty_input);
  }
}

TEST(Polarization, DoubleOverloadMatchesInteger) {
  std::vector<double> d{1, 1, -1, 0, 1};
  std::vector<int> i{1, 1, -1, 0, 1};
  EXPECT_NEAR(polarization_index(std::span<const double>(d)), pz(i), 1e-15);
}

TEST(NeighborAverage, ConstantField) {
  GridTopology g;
  auto n = neighbor_average(std::span<const int>(std::vector<int>(25, 1)), g);
  for (double v : n) EXPECT_EQ(v, 1.0);
}

TEST(NeighborAverage, ThreeNodePath) {
  GridTopology g(1, 3);
  std::vector<int> z{1, -1, 1};
  EXPECT_EQ(neighbor_average(std::span<const int>(z), g), (std::vector<double>{-1, 1, -1}));
}

TEST(NeighborAverage, CheckerboardIsNegated) {
  GridTopology g;
  auto z = checkerboard(5, 5);
  auto n = neighbor_average(std::span<const int>(z), g);
  for (std::size_t i = 0; i < z.size(); ++i) EXPECT_EQ(n[i], -z[i]);
}

TEST(NeighborAverage, DimensionMismatch) {
  GridTopology g;
  std::vector<int> z(24, 1);
  EXPECT_THROW(neighbor_average(std::span<const int>(z), g), Error);
  EXPECT_THROW(nci_of(z, g), Error);
}

TEST(NeighborAverage, IncludeSelfAveragesOwnValue) {
  GridTopology g(1, 3);
  std::vector<int> z{1, -1, 1};
  auto n = neighbor_average(std::span<const int>(z), g, {true});
  EXPECT_DOUBLE_EQ(n[0], 0.0);
  EXPECT_DOUBLE_EQ(n[1], 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(n[2], 0.0);
}

TEST(Nci, CheckerboardIsMinusOne) {
  auto r = nci_of(checkerboard(5, 5), GridTopology());
  ASSERT_TRUE(r);
  EXPECT_NEAR(*r, -1.0, 1e-12);
}

TEST(Nci, SeedSplitIsPositive) {
  auto z = seed_split();
  auto r = nci_of(z, GridTopology());
  auto oracle = naive_nci(std::vector<double>(z.begin(), z.end()), 5, 5);
  ASSERT_TRUE(r && oracle);
  EXPECT_GT(*r, 0.0);
  EXPECT_GT(*oracle, 0.0);
  EXPECT_NEAR(*r, *oracle, 1e-12);
}

TEST(Nci, ConstantVectorIsUndefined) {
  EXPECT_FALSE(nci_of(std::vector<int>(25, 1), GridTopology()).has_value());
  EXPECT_FALSE(nci_of(std::vector<int>(25, 0), GridTopology()).has_value());
}

TEST(Nci, ConstantNeighborAverageIsUndefined) {
  // 1x2 grid: n = reversed z; z=[1,1] has zero variance, z=[1,-1] gives -1.
  GridTopology g(1, 2);
  EXPECT_FALSE(nci_of({1, 1}, g).has_value());
  EXPECT_NEAR(*nci_of({1, -1}, g), -1.0, 1e-12);
}

TEST(Pearson, LengthMismatchThrows) {
  std::vector<int> a{1, 2};
  std::vector<double> b{1.0};
  EXPECT_THROW(pearson(std::span<const int>(a), std::span<const double>(b)), Error);
}

TEST(MetricsProperty, OracleEquivalenceAndInvariants) {
  GridTopology g;
  std::mt19937_64 rng(20240601);
  for (int k = 0; k < 1000; ++k) {
    auto z = random_opinions(rng, 25);
    std::vector<double> zd(z.begin(), z.end());
    const double p = pz(z);

    EXPECT_NEAR(p, naive_variance(zd), 1e-12);
    double m = 0, m2 = 0;
    for (int v : z) m += v, m2 += v * v;
    m /= 25, m2 /= 25;
    EXPECT_NEAR(p, m2 - m * m, 1e-12);
    EXPECT_GE(p, 0.0);
    EXPECT_LE(p, 1.0);

    auto r = nci_of(z, g);
    auto oracle = naive_nci(zd, 5, 5);
    ASSERT_EQ(r.has_value(), oracle.has_value());
    if (r) {
      EXPECT_NEAR(*r, *oracle, 1e-12);
      EXPECT_GE(*r, -1.0);
      EXPECT_LE(*r, 1.0);
    }

    std::vector<int> neg(z.size());
    std::transform(z.begin(), z.end(), neg.begin(), [](int v) { return -v; });
    auto rn = nci_of(neg, g);
    ASSERT_EQ(rn.has_value(), r.has_value());
    if (r) {
      EXPECT_NEAR(*rn, *r, 1e-12);
    }

    auto perm = z;
    hybridnet::Rng prng(k);
    shuffle(std::span<int>(perm), prng);
    EXPECT_NEAR(pz(perm), p, 1e-12);

    for (const auto& f : square_symmetries(5)) {
      std::vector<int> img(25);
      for (int row = 0; row < 5; ++row) {
        for (int col = 0; col < 5; ++col) img[f(row, col)] = z[row * 5 + col];
      }
      auto ri = nci_of(img, g);
      ASSERT_EQ(ri.has_value(), r.has_value());
      if (r) {
        EXPECT_NEAR(*ri, *r, 1e-12);
      }
    }
  }
}

TEST(MetricsProperty, NonSquareGridsMatchOracle) {
  std::mt19937_64 rng(7);
  for (auto [rows, cols] : std::vector<std::pair<int, int>>{{2, 3}, {4, 7}, {1, 9}}) {
    GridTopology g(rows, cols);
    for (int k = 0; k < 100; ++k) {
      auto z = random_opinions(rng, g.size());
      auto r = nci_of(z, g);
      auto oracle = naive_nci(std::vector<double>(z.begin(), z.end()), rows, cols);
      ASSERT_EQ(r.has_value(), oracle.has_value());
      if (r) {
        EXPECT_NEAR(*r, *oracle, 1e-12);
      }
    }
  }
}

TEST(MetricsRecord, CombinesBothMetrics) {
  auto z = seed_split();
  auto rec = metrics_record(0, std::span<const int>(z), GridTopology());
  EXPECT_EQ(rec.iteration, 0);
  EXPECT_EQ(rec.polarization, 0.9856);
  EXPECT_TRUE(rec.nci.has_value());
}
