#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "safesparse/defense.hpp"
#include "scenario.hpp"

using namespace safesparse;

namespace {

SparseMask mask_of(std::size_t P, std::vector<std::size_t> idx) {
  return SparseMask::from_indices(P, idx);
}

SignVector signs_of(std::vector<int> s) {
  SignVector v;
  v.coverage = SparseMask(s.size(), true);
  for (int x : s) v.signs.push_back(static_cast<std::int8_t>(x));
  return v;
}

Matrix<double> random_symmetric(std::mt19937_64& rng, Eigen::Index m, double scale = 2.0) {
  std::uniform_real_distribution<double> u(0, scale);
  Matrix<double> d = Matrix<double>::Zero(m, m);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = i + 1; j < m; ++j) d(i, j) = d(j, i) = u(rng);
  return d;
}

}  // namespace

TEST(Jaccard, Examples) {
  EXPECT_DOUBLE_EQ(jaccard(mask_of(5, {1, 2}), mask_of(5, {1, 2})), 1.0);
  EXPECT_DOUBLE_EQ(jaccard(mask_of(5, {0, 1}), mask_of(5, {2, 3})), 0.0);
  EXPECT_DOUBLE_EQ(jaccard(mask_of(5, {0, 1, 2}), mask_of(5, {2, 3})), 0.25);
  EXPECT_THROW(jaccard(SparseMask(4), SparseMask(5)), std::invalid_argument);
}

TEST(JaccardScores, Examples) {
  std::vector<SparseMask> same(4, mask_of(6, {1, 3}));
  for (double s : jaccard_scores(same)) EXPECT_DOUBLE_EQ(s, 1.0);
  std::vector<SparseMask> three{mask_of(4, {0, 1}), mask_of(4, {0, 1}), mask_of(4, {2, 3})};
  EXPECT_EQ(jaccard_scores(three), (std::vector<double>{0.5, 0.5, 0.0}));
  EXPECT_THROW(jaccard_scores(std::vector<SparseMask>{SparseMask(3)}), std::invalid_argument);
}

TEST(JaccardScores, MatchBruteForce) {
  std::mt19937_64 rng(1);
  std::vector<SparseMask> masks;
  for (int i = 0; i < 20; ++i) {
    SparseMask m(40);
    for (std::size_t p = 0; p < 40; ++p)
      if (rng() % 3 == 0) m.set(p);
    m.set(static_cast<std::size_t>(i));
    masks.push_back(m);
  }
  const auto s = jaccard_scores(masks);
  for (std::size_t i = 0; i < 20; ++i) {
    double acc = 0;
    for (std::size_t j = 0; j < 20; ++j) {
      if (i == j) continue;
      double inter = 0, uni = 0;
      for (std::size_t p = 0; p < 40; ++p) {
        inter += masks[i].test(p) && masks[j].test(p);
        uni += masks[i].test(p) || masks[j].test(p);
      }
      acc += inter / uni;
    }
    EXPECT_NEAR(s[i], acc / 19.0, 1e-15);
  }
  const auto jm = jaccard_matrix(masks);
  EXPECT_DOUBLE_EQ(jm(3, 3), 1.0);
  EXPECT_DOUBLE_EQ(jm(2, 5), jaccard(masks[2], masks[5]));
}

TEST(JaccardThreshold, Examples) {
  EXPECT_NEAR(jaccard_threshold(std::vector<double>{0.2, 0.8}, 0.6), 0.30, 1e-15);
  EXPECT_NEAR(jaccard_threshold(std::vector<double>{0.4, 0.4, 0.4}, 0.6), 0.24, 1e-15);
  EXPECT_NEAR(jaccard_threshold(std::vector<double>{0.1, 0.5, 0.9}, 1.0), 0.5, 1e-15);
}

TEST(JaccardFilter, DisjointOutlierExcluded) {
  std::vector<SparseMask> masks(19, mask_of(20, {0, 1, 2, 3, 4}));
  masks.push_back(mask_of(20, {10, 11, 12, 13, 14}));
  auto kept = jaccard_filter(masks, 0.6);
  ASSERT_EQ(kept.size(), 19u);
  for (std::size_t i = 0; i < 19; ++i) EXPECT_EQ(kept[i], i);
}

TEST(JaccardFilter, AllIdenticalAndZeroBeta) {
  std::vector<SparseMask> masks(6, mask_of(8, {2, 5}));
  EXPECT_EQ(jaccard_filter(masks, 0.6).size(), 6u);
  std::vector<SparseMask> mixed{mask_of(8, {0}), mask_of(8, {1}), mask_of(8, {0, 1})};
  EXPECT_EQ(jaccard_filter(mixed, 0.0).size(), 3u);
}

TEST(JaccardFilter, ExcludingEveryoneThrows) {
  std::vector<SparseMask> masks{mask_of(4, {0}), mask_of(4, {1})};
  std::vector<SparseMask> same(3, mask_of(4, {0}));
  EXPECT_EQ(jaccard_filter(masks, 0.6).size(), 2u);
  EXPECT_THROW(jaccard_filter(same, 1.5), DegenerateFilterError);
}

TEST(SignDelta, Examples) {
  auto p = partition_packs(4, 2);
  ParamVector g(4);
  g << 1, 1, 1, 1;
  auto u = restrict_to_mask(g, SparseMask(2, true), p, 0, 1);
  auto s = sign_delta(u, g, SparseMask(2, true), p);
  for (auto x : s.signs) EXPECT_EQ(x, 0);

  ParamVector w(4);
  w << 3, -2, 1, 1;
  auto u2 = restrict_to_mask(w, mask_of(2, {0}), p, 0, 1);
  auto s2 = sign_delta(u2, g, SparseMask(2, true), p);
  EXPECT_EQ(s2.signs[0], 1);
  EXPECT_EQ(s2.signs[1], -1);
  EXPECT_EQ(s2.coverage, mask_of(2, {0}));

  auto s3 = sign_delta(u2, g, mask_of(2, {1}), p);
  EXPECT_TRUE(s3.coverage.empty());
}

TEST(SignCosine, Examples) {
  auto p = partition_packs(4, 1);
  EXPECT_DOUBLE_EQ(sign_cosine(signs_of({1, -1, 1, 1}), signs_of({1, -1, 1, 1}), p), 1.0);
  EXPECT_DOUBLE_EQ(sign_cosine(signs_of({1, -1, 1, 1}), signs_of({-1, 1, -1, -1}), p), -1.0);
  EXPECT_DOUBLE_EQ(sign_cosine(signs_of({1, 1, -1, 1}), signs_of({1, -1, -1, 1}), p), 0.5);
  EXPECT_DOUBLE_EQ(sign_cosine(signs_of({0, 0, 0, 0}), signs_of({1, 1, 1, 1}), p), 0.0);
}

TEST(SignCosine, RestrictedToOverlap) {
  auto p = partition_packs(4, 1);
  SignVector a = signs_of({1, 1, -1, -1});
  SignVector b = signs_of({1, 1, 1, 1});
  a.coverage = mask_of(4, {0, 1, 2});
  b.coverage = mask_of(4, {0, 1});
  EXPECT_DOUBLE_EQ(sign_cosine(a, b, p), 1.0);
  b.coverage = mask_of(4, {3});
  a.coverage = mask_of(4, {0});
  EXPECT_DOUBLE_EQ(sign_cosine(a, b, p), 0.0);
}

TEST(DistanceMatrix, Examples) {
  auto p = partition_packs(3, 1);
  std::vector<SignVector> same(4, signs_of({1, -1, 1}));
  EXPECT_EQ(distance_matrix(same, p), Matrix<double>::Zero(4, 4));
  std::vector<SignVector> opp{signs_of({1, -1, 1}), signs_of({-1, 1, -1})};
  auto d = distance_matrix(opp, p);
  EXPECT_DOUBLE_EQ(d(0, 1), 2.0);
  EXPECT_DOUBLE_EQ(d(1, 0), 2.0);
  EXPECT_DOUBLE_EQ(d(0, 0), 0.0);
}

TEST(DistanceMatrix, MatchesBruteForce) {
  std::mt19937_64 rng(8);
  auto p = partition_packs(24, 3);
  std::vector<SignVector> v;
  for (int i = 0; i < 10; ++i) {
    SignVector s;
    s.coverage = SparseMask(8);
    for (std::size_t k = 0; k < 8; ++k)
      if (rng() % 2) s.coverage.set(k);
    for (int c = 0; c < 24; ++c) s.signs.push_back(static_cast<std::int8_t>(static_cast<int>(rng() % 3) - 1));
    v.push_back(s);
  }
  auto d = distance_matrix(v, p);
  for (std::size_t i = 0; i < 10; ++i)
    for (std::size_t j = 0; j < 10; ++j) {
      if (i == j) {
        EXPECT_EQ(d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)), 0.0);
        continue;
      }
      double dot = 0, na = 0, nb = 0;
      for (std::size_t c = 0; c < 24; ++c) {
        if (!(v[i].coverage.test(c / 3) && v[j].coverage.test(c / 3))) continue;
        dot += v[i].signs[c] * v[j].signs[c];
        na += v[i].signs[c] * v[i].signs[c];
        nb += v[j].signs[c] * v[j].signs[c];
      }
      const double cos = (na > 0 && nb > 0) ? dot / std::sqrt(na * nb) : 0.0;
      EXPECT_NEAR(d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)), 1.0 - cos, 1e-15);
    }
}

TEST(DbscanEps, Examples) {
  EXPECT_EQ(dbscan_eps(Matrix<double>::Zero(5, 5), 0.2), 0.0);
  Matrix<double> d(2, 2);
  d << 0, 0.8, 0.8, 0;
  EXPECT_DOUBLE_EQ(dbscan_eps(d, 0.2), 0.8);
  EXPECT_EQ(neighbor_count(20, 0.2), 4u);
  EXPECT_EQ(neighbor_count(20, 0.45), 9u);
  EXPECT_EQ(neighbor_count(20, 0.5), 10u);
  EXPECT_EQ(neighbor_count(3, 0.1), 1u);
}

TEST(DbscanEps, MatchesSortOracle) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 50; ++t) {
    auto d = random_symmetric(rng, 20);
    EXPECT_NEAR(dbscan_eps(d, 0.2), oracle::knn_eps(d, 4), 1e-14);
  }
}

TEST(DbscanEps, PermutationInvariant) {
  std::mt19937_64 rng(6);
  auto d = random_symmetric(rng, 12);
  std::vector<int> perm(12);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Matrix<double> q(12, 12);
  for (int i = 0; i < 12; ++i)
    for (int j = 0; j < 12; ++j) q(i, j) = d(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
  EXPECT_NEAR(dbscan_eps(d, 0.25), dbscan_eps(q, 0.25), 1e-14);
}

TEST(Dbscan, Examples) {
  auto all = dbscan(Matrix<double>::Zero(6, 6), 0.0, 3);
  for (int l : all) EXPECT_EQ(l, 0);

  Matrix<double> d = Matrix<double>::Constant(5, 5, 0.5);
  d.diagonal().setZero();
  for (int l : dbscan(d, 0.0, 2)) EXPECT_EQ(l, kNoise);
}

TEST(Dbscan, TwoTightGroups) {
  Matrix<double> d(20, 20);
  for (int i = 0; i < 20; ++i)
    for (int j = 0; j < 20; ++j) d(i, j) = i == j ? 0.0 : ((i < 8) == (j < 8) ? 0.1 : 1.9);
  auto l = dbscan(d, 0.3, 3);
  for (int i = 0; i < 8; ++i) EXPECT_EQ(l[static_cast<std::size_t>(i)], 0);
  for (int i = 8; i < 20; ++i) EXPECT_EQ(l[static_cast<std::size_t>(i)], 1);
}

TEST(Dbscan, MatchesTransitiveClosureOracle) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 300; ++t) {
    const auto m = static_cast<Eigen::Index>(2 + rng() % 18);
    // points on a line give a metric with real cluster structure
    std::vector<double> x(static_cast<std::size_t>(m));
    for (auto& v : x) v = u(rng) * 3.0;
    Matrix<double> d(m, m);
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = 0; j < m; ++j)
        d(i, j) = std::abs(x[static_cast<std::size_t>(i)] - x[static_cast<std::size_t>(j)]);
    const double eps = 0.05 + 0.3 * u(rng);
    const std::size_t min_pts = 1 + rng() % 5;
    ASSERT_EQ(dbscan(d, eps, min_pts), oracle::dbscan(d, eps, min_pts)) << "trial " << t;
  }
}

TEST(PoisonFilter, CoordinatedAttackersExcluded) {
  auto s = scenario::make_coordinated(99);
  auto kept = poison_filter(s.updates, s.prev_global, s.prev_coverage, s.partition, 0.6, 0.2);
  for (auto k : kept) EXPECT_FALSE(s.attacker[k]);
  EXPECT_GE(kept.size(), 10u);
  auto rep = inspect_clients(s.updates, s.prev_global, s.prev_coverage, s.partition, 0.6, 0.2);
  EXPECT_EQ(rep.min_pts, 4u);
  for (std::size_t i = 0; i < 8; ++i)
    EXPECT_TRUE(std::find(rep.excluded_cluster.begin(), rep.excluded_cluster.end(), i) !=
                    rep.excluded_cluster.end() ||
                std::find(rep.excluded_jaccard.begin(), rep.excluded_jaccard.end(), i) !=
                    rep.excluded_jaccard.end());
}

TEST(PoisonFilter, AllIdenticalIsDegenerate) {
  auto p = partition_packs(16, 4);
  ParamVector w = ParamVector::Ones(16);
  std::vector<SparseUpdate> ups;
  for (int i = 0; i < 10; ++i) ups.push_back(restrict_to_mask(w, mask_of(4, {0, 2}), p, i, 1));
  EXPECT_THROW(poison_filter(ups, ParamVector::Zero(16), SparseMask(4, true), p, 0.6, 0.2),
               DegenerateFilterError);
  auto rep = inspect_clients(ups, ParamVector::Zero(16), SparseMask(4, true), p, 0.6, 0.2);
  EXPECT_TRUE(rep.retained.empty());
}

TEST(PoisonFilter, MaskOutlierRemovedAtFirstStage) {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> n(0, 1);
  auto p = partition_packs(128, 4);
  std::vector<std::size_t> common(16);
  std::iota(common.begin(), common.end(), std::size_t{0});
  std::vector<std::size_t> other(16);
  std::iota(other.begin(), other.end(), std::size_t{16});
  std::vector<SparseUpdate> ups;
  for (int i = 0; i < 20; ++i) {
    ParamVector w(128);
    for (auto& x : w) x = n(rng);
    ups.push_back(restrict_to_mask(w, SparseMask::from_indices(32, i == 19 ? other : common), p, i, 1));
  }
  auto rep = inspect_clients(ups, ParamVector::Zero(128), SparseMask(32, true), p, 0.6, 0.2);
  EXPECT_EQ(rep.excluded_jaccard, (std::vector<std::size_t>{19}));
  EXPECT_EQ(std::count(rep.retained.begin(), rep.retained.end(), 19u), 0);
  EXPECT_GE(rep.excluded_cluster.size(), rep.min_pts);
}

TEST(Dbscan, KnnEpsAlwaysProducesACore) {
  std::mt19937_64 rng(31);
  for (int t = 0; t < 200; ++t) {
    const auto m = static_cast<Eigen::Index>(3 + rng() % 18);
    auto d = random_symmetric(rng, m);
    const std::size_t n = neighbor_count(static_cast<std::size_t>(m), 0.2);
    if (n + 1 > static_cast<std::size_t>(m)) continue;
    auto labels = dbscan(d, dbscan_eps(d, n), n);
    EXPECT_GE(std::count_if(labels.begin(), labels.end(), [](int l) { return l != kNoise; }),
              static_cast<long>(n));
  }
}
