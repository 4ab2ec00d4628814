#include <gtest/gtest.h>

#include <random>

#include "safesparse/attacks.hpp"
#include "safesparse/defense.hpp"
#include "safesparse/sim.hpp"
#include "scenario.hpp"

using namespace safesparse;

TEST(LabelFlip, Examples) {
  EXPECT_EQ(label_flip(0, 10), 9);
  EXPECT_EQ(label_flip(3, 10), 6);
  EXPECT_EQ(label_flip(9, 10), 0);
  EXPECT_EQ(label_flip(0, 1), 0);
  EXPECT_THROW(label_flip(10, 10), std::invalid_argument);
  EXPECT_THROW(label_flip(-1, 10), std::invalid_argument);
}

TEST(LabelFlip, Involution) {
  for (int m = 1; m <= 12; ++m)
    for (int y = 0; y < m; ++y) EXPECT_EQ(label_flip(label_flip(y, m), m), y);
}

TEST(GaussianNoise, MatchesHonestStatistics) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(3.0, 2.0);
  ParamVector honest(100000);
  for (auto& x : honest) x = n(rng);
  const double mu = honest.mean();
  const double sd = std::sqrt((honest.array() - mu).square().mean());
  auto g = gaussian_noise_update(honest, 42);
  ASSERT_EQ(g.size(), honest.size());
  const double gmu = g.mean();
  const double gsd = std::sqrt((g.array() - gmu).square().mean());
  EXPECT_NEAR(gmu, mu, 5 * sd / std::sqrt(1e5));
  EXPECT_NEAR(gsd / sd, 1.0, 0.01);
}

TEST(GaussianNoise, ConstantInputAndDeterminism) {
  ParamVector c = ParamVector::Constant(50, 1.25);
  EXPECT_EQ(gaussian_noise_update(c, 7), c);
  ParamVector v = ParamVector::LinSpaced(30, -1, 1);
  EXPECT_EQ(gaussian_noise_update(v, 9), gaussian_noise_update(v, 9));
  EXPECT_NE(gaussian_noise_update(v, 9), gaussian_noise_update(v, 10));
}

TEST(IPM, Examples) {
  ParamVector g = ParamVector::Zero(2);
  std::vector<ParamVector> c{ParamVector::Constant(2, 1.0), ParamVector::Constant(2, 3.0)};
  EXPECT_EQ(ipm_update(c, 2.0, g), ParamVector::Constant(2, -4.0));
  ParamVector g2 = ParamVector::Constant(2, 1.0);
  std::vector<ParamVector> same{g2, g2};
  EXPECT_EQ(ipm_update(same, 5.0, g2), g2);
  EXPECT_THROW(ipm_update(std::vector<ParamVector>{}, 1.0, g), std::invalid_argument);
}

TEST(IPM, NegativeInnerProductWithBenignMean) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0, 1);
    ParamVector g(16);
    for (auto& x : g) x = n(rng);
    std::vector<ParamVector> c(4, ParamVector(16));
    for (auto& w : c)
      for (auto& x : w) x = n(rng);
    ParamVector mean = ParamVector::Zero(16);
    for (auto& w : c) mean += (w - g) / 4.0;
    const ParamVector delta = ipm_update(c, 0.5 + static_cast<double>(seed % 4), g) - g;
    EXPECT_LT(delta.dot(mean), 0.0);
  }
}

TEST(Scaling, Examples) {
  ParamVector g = ParamVector::Constant(3, 1.0);
  ParamVector w(3);
  w << 2, 1, 0;
  ParamVector want(3);
  want << 11, 1, -9;
  EXPECT_EQ(scaling_update(w, g, 10.0), want);
  EXPECT_EQ(scaling_update(w, g, 1.0), w);
}

TEST(Scaling, PreservesSignsAndMaskWithoutCollusion) {
  auto cfg = scenario::small_config();
  cfg.attack.kind = AttackKind::Scaling;
  cfg.attack.collude = false;
  cfg.attack.scale_factor = 37.0;
  auto clean = cfg;
  clean.attack.kind = AttackKind::None;
  Simulation att(cfg), ref(clean);
  auto state = att.initial_state();
  const int round = cfg.attack.start_round;
  auto a = att.client_phase(state, round);
  auto b = ref.client_phase(state, round);
  ASSERT_FALSE(att.attackers().empty());
  for (int id : att.attackers()) {
    const auto i = static_cast<std::size_t>(id);
    EXPECT_EQ(a[i].mask, b[i].mask);
    auto sa = sign_delta(a[i], state.params, state.coverage, att.partition());
    auto sb = sign_delta(b[i], state.params, state.coverage, att.partition());
    EXPECT_EQ(sa.signs, sb.signs);
    EXPECT_EQ(sa.coverage, sb.coverage);
    EXPECT_NE(a[i].values, b[i].values);
  }
}

TEST(AttackerIds, RatioRule) {
  EXPECT_EQ(attacker_ids(20, 0.4).size(), 8u);
  EXPECT_EQ(attacker_ids(20, 0.0).size(), 0u);
  EXPECT_EQ(attacker_ids(10, 0.25), (std::vector<int>{0, 1}));
  EXPECT_THROW(attacker_ids(20, 0.5), std::invalid_argument);
  EXPECT_THROW(attacker_ids(20, 0.6), std::invalid_argument);
  EXPECT_THROW(attacker_ids(20, -0.1), std::invalid_argument);
}

TEST(AttackNames, RoundTrip) {
  for (auto k : kAllAttacks) EXPECT_EQ(parse_attack(to_string(k)), k);
  EXPECT_EQ(parse_attack("none"), AttackKind::None);
  EXPECT_THROW(parse_attack("bogus"), std::invalid_argument);
  EXPECT_EQ(parse_mask_mode("coordinated"), MaskMode::Coordinated);
  EXPECT_THROW(parse_mask_mode("x"), std::invalid_argument);
}

TEST(CoordinateMasks, LeaderMaskAdopted) {
  auto p = partition_packs(8, 2);
  std::vector<ParamVector> models{ParamVector::Constant(8, 1.0), ParamVector::Constant(8, 2.0),
                                  ParamVector::LinSpaced(8, 0, 7)};
  std::vector<SparseUpdate> ups{
      restrict_to_mask(models[0], SparseMask::from_indices(4, std::vector<std::size_t>{3}), p, 5, 10),
      restrict_to_mask(models[1], SparseMask::from_indices(4, std::vector<std::size_t>{0, 1}), p, 2, 20),
      restrict_to_mask(models[2], SparseMask::from_indices(4, std::vector<std::size_t>{2}), p, 9, 30)};
  auto honest = coordinate_masks(ups, models, p, MaskMode::Honest);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(honest[i].mask, ups[i].mask);
  auto out = coordinate_masks(ups, models, p, MaskMode::Coordinated);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(out[i].mask, ups[1].mask);
    EXPECT_EQ(out[i].client_id, ups[i].client_id);
    EXPECT_EQ(out[i].dataset_size, ups[i].dataset_size);
    EXPECT_EQ(out[i].values, models[i].head(4));
  }
  EXPECT_THROW(coordinate_masks(ups, std::vector<ParamVector>{models[0]}, p, MaskMode::Coordinated),
               std::invalid_argument);
}

TEST(AttackSchedule, RoundsBeforeStartMatchNoAttack) {
  for (auto kind : kAllAttacks) {
    auto cfg = scenario::small_config();
    cfg.rounds = 4;
    cfg.attack.kind = kind;
    cfg.attack.start_round = 3;
    auto clean = cfg;
    clean.attack.kind = AttackKind::None;
    auto a = run_experiment(cfg);
    auto b = run_experiment(clean);
    for (int r = 0; r < 2; ++r) {
      EXPECT_FALSE(a.records[static_cast<std::size_t>(r)].attack_active);
      EXPECT_EQ(a.records[static_cast<std::size_t>(r)].eval.loss,
                b.records[static_cast<std::size_t>(r)].eval.loss)
          << to_string(kind);
    }
    EXPECT_TRUE(a.records[2].attack_active);
  }
}

TEST(AttackSchedule, CoordinatedMasksShared) {
  auto cfg = scenario::small_config();
  cfg.attack.kind = AttackKind::GNA;
  cfg.attack.mask_mode = MaskMode::Coordinated;
  Simulation sim(cfg);
  auto state = sim.initial_state();
  auto ups = sim.client_phase(state, cfg.attack.start_round);
  const auto& ids = sim.attackers();
  ASSERT_GE(ids.size(), 2u);
  for (int a : ids) EXPECT_EQ(ups[static_cast<std::size_t>(a)].mask, ups[static_cast<std::size_t>(ids[0])].mask);
}
