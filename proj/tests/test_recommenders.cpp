#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "gs2rs/recommenders.hpp"

using namespace gs2rs;

namespace {

EnhancedMatrix enhanced(std::size_t M, std::size_t N, std::vector<EnhancedEntry> e) {
  return EnhancedMatrix(M, N, std::move(e));
}

EnhancedMatrix random_enhanced(std::size_t M, std::size_t N, double density, std::uint64_t seed,
                               bool with_zeros = true) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> val(with_zeros ? 0 : 1, 5);
  std::vector<EnhancedEntry> e;
  for (Index u = 0; u < M; ++u)
    for (Index i = 0; i < N; ++i)
      if (unit(rng) < density) e.push_back({u, i, static_cast<std::uint8_t>(val(rng))});
  return enhanced(M, N, e);
}

// Dense, loop-based CF reference: cosine over common cells, top-k positive
// neighbours (ties to the lower index), weighted mean, known cells excluded.
std::vector<RecommendationRow> brute_force_cf(const EnhancedMatrix& m, std::size_t k_nb, std::size_t K) {
  const std::size_t M = m.num_users(), N = m.num_items();
  std::vector<std::vector<double>> R(M, std::vector<double>(N, -1));
  for (const auto& e : m.entries()) R[e.user][e.item] = e.value;
  std::vector<double> pop(N, 0);
  for (const auto& e : m.entries())
    if (e.value > 0) pop[e.item] += 1;
  std::vector<RecommendationRow> out(M);
  for (Index u = 0; u < M; ++u) {
    std::vector<std::pair<double, Index>> sims;
    for (Index v = 0; v < M; ++v) {
      if (v == u) continue;
      double dot = 0, a = 0, b = 0;
      for (Index i = 0; i < N; ++i)
        if (R[u][i] >= 0 && R[v][i] >= 0) {
          dot += R[u][i] * R[v][i];
          a += R[u][i] * R[u][i];
          b += R[v][i] * R[v][i];
        }
      const double s = a > 0 && b > 0 ? dot / std::sqrt(a * b) : 0.0;
      if (s > 0) sims.push_back({-s, v});
    }
    std::sort(sims.begin(), sims.end());
    if (sims.size() > k_nb) sims.resize(k_nb);
    std::vector<double> score(N, std::nan(""));
    if (sims.empty()) {
      score = pop;
    } else {
      for (Index i = 0; i < N; ++i) {
        double num = 0, den = 0;
        for (const auto& [ns, v] : sims)
          if (R[v][i] >= 0) {
            num += -ns * R[v][i];
            den += -ns;
          }
        if (den > 0) score[i] = num / den;
      }
    }
    std::vector<std::pair<double, Index>> cands;
    for (Index i = 0; i < N; ++i)
      if (R[u][i] < 0 && !std::isnan(score[i])) cands.push_back({-score[i], i});
    std::sort(cands.begin(), cands.end());
    for (std::size_t j = 0; j < std::min(K, cands.size()); ++j) out[u].push_back({cands[j].second, -cands[j].first});
  }
  return out;
}

}  // namespace

TEST(Similarity, IdenticalAndDisjoint) {
  const auto m = enhanced(3, 4, {{0, 0, 3}, {0, 1, 4}, {1, 0, 3}, {1, 1, 4}, {2, 2, 5}, {2, 3, 1}});
  EXPECT_DOUBLE_EQ(user_similarity(m, 0, 1), 1.0);
  EXPECT_DOUBLE_EQ(user_similarity(m, 0, 2), 0.0);
}

TEST(Similarity, InjectedZerosCountAsKnown) {
  // Common cells {0, 1}: (5, 0) . (5, 4) / sqrt(25 * 41)
  const auto m = enhanced(2, 2, {{0, 0, 5}, {0, 1, 0}, {1, 0, 5}, {1, 1, 4}});
  EXPECT_DOUBLE_EQ(user_similarity(m, 0, 1), 25.0 / std::sqrt(25.0 * 41.0));
}

TEST(UserKnnScores, ThreeUserToy) {
  // u0: i0=5 i1=3 i2=1; u1: i0=4 i2=2 i3=5; u2: i1=3 i2=4 i3=1
  const auto m = enhanced(3, 4, {{0, 0, 5}, {0, 1, 3}, {0, 2, 1}, {1, 0, 4}, {1, 2, 2}, {1, 3, 5}, {2, 1, 3},
                                 {2, 2, 4}, {2, 3, 1}});
  const double s1 = 22.0 / std::sqrt(26.0 * 20.0);  // common {i0, i2}
  const double s2 = 13.0 / std::sqrt(10.0 * 25.0);  // common {i1, i2}
  const auto sc = user_knn_scores(m, 0, 2);
  ASSERT_EQ(sc.size(), 4u);
  EXPECT_DOUBLE_EQ(sc[0], 4.0);
  EXPECT_DOUBLE_EQ(sc[1], 3.0);
  EXPECT_DOUBLE_EQ(sc[2], (s1 * 2 + s2 * 4) / (s1 + s2));
  EXPECT_DOUBLE_EQ(sc[3], (s1 * 5 + s2 * 1) / (s1 + s2));
  // one neighbour: the more similar user only
  const auto one = user_knn_scores(m, 0, 1);
  const double best = std::max(s1, s2);
  EXPECT_DOUBLE_EQ(one[3], best == s1 ? 5.0 : 1.0);
}

TEST(UserKnnScores, NoNeighbourGivesEmpty) {
  const auto m = enhanced(2, 2, {{0, 0, 3}, {1, 1, 3}});
  EXPECT_TRUE(user_knn_scores(m, 0, 5).empty());
  EXPECT_THROW(user_knn_scores(enhanced(2, 2, {{1, 1, 3}}), 0, 5), ValidationError);
}

TEST(UserKnnScores, BatchedMatchesPerUser) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto m = random_enhanced(30, 25, 0.3, seed);
    const UserKnn knn(m, 7);
    const auto all = knn.scores(0, 30);
    for (Index u = 0; u < 30; ++u) {
      if (m.row(u).empty()) {
        EXPECT_TRUE(all[u].empty());
        continue;
      }
      const auto one = user_knn_scores(m, u, 7);
      ASSERT_EQ(all[u].size(), one.size());
      for (std::size_t i = 0; i < one.size(); ++i) {
        if (std::isnan(one[i]))
          EXPECT_TRUE(std::isnan(all[u][i]));
        else
          EXPECT_NEAR(all[u][i], one[i], 1e-12);
      }
    }
  }
}

TEST(Wmf, RankOneFit) {
  // r_ui = a_u * b_i with a, b in {1, 2}: a rank-1 matrix after scaling.
  std::vector<EnhancedEntry> e;
  for (Index u = 0; u < 12; ++u)
    for (Index i = 0; i < 9; ++i) e.push_back({u, i, static_cast<std::uint8_t>((1 + u % 2) * (1 + i % 2))});
  const auto m = enhanced(12, 9, e);
  WmfConfig cfg;
  cfg.factors = 1;
  cfg.reg = 1e-4;
  cfg.epochs = 50;
  const auto f = wmf_train(m, cfg);
  double se = 0;
  for (const auto& x : m.entries()) se += std::pow(f.score(x.user, x.item) - wmf_scaled(x.value), 2);
  EXPECT_LT(std::sqrt(se / static_cast<double>(m.size())), 0.05);
}

TEST(Wmf, ObjectiveNeverIncreases) {
  const auto m = random_enhanced(25, 20, 0.3, 3);
  std::vector<double> trace;
  WmfConfig cfg;
  cfg.factors = 4;
  cfg.epochs = 10;
  wmf_train(m, cfg, &trace);
  ASSERT_EQ(trace.size(), 21u);
  for (std::size_t k = 1; k < trace.size(); ++k) EXPECT_LE(trace[k], trace[k - 1] * (1 + 1e-12));
}

TEST(Wmf, LargeRegularisationShrinksFactors) {
  const auto m = random_enhanced(20, 15, 0.4, 4, false);
  WmfConfig small, large;
  large.reg = 1e4;
  const auto a = wmf_train(m, small), b = wmf_train(m, large);
  EXPECT_LT(b.users.norm() + b.items.norm(), 1e-2 * (a.users.norm() + a.items.norm()));
}

TEST(Wmf, DeterministicForSeed) {
  const auto m = random_enhanced(15, 15, 0.3, 5);
  WmfConfig cfg;
  EXPECT_EQ(wmf_train(m, cfg).users, wmf_train(m, cfg).users);
  cfg.seed = 7;
  WmfConfig other;
  EXPECT_NE(wmf_train(m, cfg).users, wmf_train(m, other).users);
}

TEST(Wmf, ZeroRegStillSolves) {
  WmfConfig cfg;
  cfg.reg = 0;
  EXPECT_NO_THROW(wmf_train(enhanced(3, 3, {{0, 0, 5}}), cfg));
}

TEST(TopK, Examples) {
  const double s[] = {0.1, 0.9, 0.5};
  const auto row = topk(s, {}, 2);
  ASSERT_EQ(row.size(), 2u);
  EXPECT_EQ(row[0].item, 1u);
  EXPECT_EQ(row[1].item, 2u);

  const std::uint8_t all[] = {1, 1, 1};
  EXPECT_TRUE(topk(s, all, 2).empty());

  const double tie[] = {0.5, 0.5};
  EXPECT_EQ(topk(tie, {}, 1)[0].item, 0u);

  const double nan[] = {std::nan(""), 0.2};
  EXPECT_EQ(topk(nan, {}, 5).size(), 1u);
}

namespace {

struct Side {
  SerendipityMatrix s;
  FusedPreferenceMatrix in, sa;
};

Side random_side(std::size_t M, std::size_t N, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Side x{SerendipityMatrix(M, N), FusedPreferenceMatrix(M, N, Channel::interest),
         FusedPreferenceMatrix(M, N, Channel::satisfaction)};
  for (Index u = 0; u < M; ++u)
    for (Index i = 0; i < N; ++i) {
      x.s.set(u, i, unit(rng) < 0.3);
      if (unit(rng) < 0.6) x.in.set(u, i, unit(rng));
      if (unit(rng) < 0.6) x.sa.set(u, i, unit(rng));
    }
  return x;
}

}  // namespace

TEST(Rerank, ZeroWeightsKeepOrder) {
  std::mt19937_64 rng(1);
  const auto side = random_side(1, 6, rng);
  const RecommendationRow row = {{3, 0.9}, {0, 0.7}, {1, 0.7}, {5, 0.1}};
  const auto out = serendipity_rerank(row, 0, side.s, side.in, side.sa, {});
  EXPECT_EQ(out, row);
}

TEST(Rerank, SerendipitousItemWinsTie) {
  SerendipityMatrix s(1, 2);
  s.set(0, 1, true);
  const FusedPreferenceMatrix in(1, 2, Channel::interest), sa(1, 2, Channel::satisfaction);
  const auto out = serendipity_rerank({{0, 0.5}, {1, 0.5}}, 0, s, in, sa, {0.1, {0, 0}});
  EXPECT_EQ(out[0].item, 1u);
}

TEST(Rerank, FiveItemBruteForce) {
  SerendipityMatrix s(1, 5);
  FusedPreferenceMatrix in(1, 5, Channel::interest), sa(1, 5, Channel::satisfaction);
  s.set(0, 2, true);
  s.set(0, 4, true);
  in.set(0, 0, 0.9); in.set(0, 1, 0.1); in.set(0, 3, 0.5);
  sa.set(0, 1, 0.8); sa.set(0, 2, 0.2); sa.set(0, 4, 0.7);
  const RecommendationRow row = {{0, 0.50}, {1, 0.45}, {2, 0.40}, {3, 0.35}, {4, 0.30}};
  const RerankConfig cfg{0.2, {0.3, 0.1}};
  // adjusted = base + 0.2 s + 0.3 in + 0.1 sa
  const double adj[] = {0.50 + 0.27, 0.45 + 0.03 + 0.08, 0.40 + 0.2 + 0.02, 0.35 + 0.15, 0.30 + 0.2 + 0.07};
  std::vector<Index> expect = {0, 1, 2, 3, 4};
  std::stable_sort(expect.begin(), expect.end(), [&](Index a, Index b) { return adj[a] > adj[b]; });
  const auto out = serendipity_rerank(row, 0, s, in, sa, cfg);
  for (std::size_t j = 0; j < 5; ++j) {
    EXPECT_EQ(out[j].item, expect[j]);
    EXPECT_NEAR(out[j].score, adj[out[j].item], 1e-7);
  }
}

TEST(Rerank, PermutationAndSerendipityFirstOnRandomLists) {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> len(0, 20);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t N = 25;
    const auto side = random_side(1, N, rng);
    std::vector<Index> items(N);
    std::iota(items.begin(), items.end(), 0);
    std::shuffle(items.begin(), items.end(), rng);
    items.resize(len(rng));
    RecommendationRow row, flat;
    for (Index i : items) {
      row.push_back({i, unit(rng)});
      flat.push_back({i, 0.25});
    }
    const RerankConfig cfg{unit(rng), {unit(rng), unit(rng)}};
    auto out = serendipity_rerank(row, 0, side.s, side.in, side.sa, cfg);
    auto a = items;
    std::vector<Index> b;
    for (const auto& it : out) b.push_back(it.item);
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    EXPECT_EQ(a, b);

    // Equal base scores and no fused weights: every s=1 item precedes every s=0 item.
    const auto flat_out = serendipity_rerank(flat, 0, side.s, side.in, side.sa, {0.05 + cfg.serendipity_boost, {0, 0}});
    bool seen_plain = false;
    for (const auto& it : flat_out) {
      if (side.s(0, it.item)) EXPECT_FALSE(seen_plain);
      else seen_plain = true;
    }
  }
}

TEST(Rerank, NegativeWeightsRejected) {
  const SerendipityMatrix s(1, 1);
  const FusedPreferenceMatrix f(1, 1, Channel::interest);
  EXPECT_THROW(serendipity_rerank({}, 0, s, f, f, {-1, {0, 0}}), ValidationError);
}

TEST(PreferenceMix, FromHistory) {
  const PreferenceMatrix p(2, 4, Channel::satisfaction, {{0, 0, 1}, {0, 1, 0}, {0, 2, 0}, {0, 3, 1}});
  const auto mix = preference_mix_from_history(p, 0);
  EXPECT_DOUBLE_EQ(mix.w_in, 0.5);
  EXPECT_DOUBLE_EQ(mix.w_sa, 0.5);
  const auto none = preference_mix_from_history(p, 1);
  EXPECT_DOUBLE_EQ(none.w_in + none.w_sa, 1.0);
}

TEST(Recommend, CfMatchesBruteForceOracle) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto m = random_enhanced(5, 6, 0.45, seed);
    RecommendConfig cfg;
    cfg.model = ModelKind::cf;
    cfg.k = 3;
    cfg.k_neighbors = 2;
    const auto recs = recommend(m, std::nullopt, cfg);
    const auto oracle = brute_force_cf(m, 2, 3);
    for (Index u = 0; u < 5; ++u) {
      ASSERT_EQ(recs.rows[u].size(), oracle[u].size()) << "seed " << seed << " user " << u;
      for (std::size_t j = 0; j < oracle[u].size(); ++j) {
        EXPECT_EQ(recs.rows[u][j].item, oracle[u][j].item);
        EXPECT_NEAR(recs.rows[u][j].score, oracle[u][j].score, 1e-12);
      }
    }
  }
}

TEST(Recommend, ExcludesKnownAndInjectedCells) {
  const auto m = random_enhanced(20, 15, 0.4, 8);
  RecommendConfig cfg;
  cfg.k = 15;
  const auto recs = recommend(m, std::nullopt, cfg);
  for (Index u = 0; u < 20; ++u)
    for (const auto& it : recs.rows[u]) EXPECT_FALSE(m.find(u, it.item).has_value());
}

TEST(Recommend, ZeroBoostSideInformationMatchesBaseline) {
  std::mt19937_64 rng(5);
  const auto m = random_enhanced(12, 10, 0.3, 6);
  const auto side = random_side(12, 10, rng);
  for (auto model : {ModelKind::cf, ModelKind::wmf}) {
    RecommendConfig cfg;
    cfg.model = model;
    cfg.serendipity_boost = 0;
    cfg.use_preference_mix = false;
    const auto base = recommend(m, std::nullopt, cfg);
    const auto with = recommend(m, SideInformation{&side.in, &side.sa, &side.s, nullptr}, cfg);
    for (Index u = 0; u < 12; ++u) EXPECT_EQ(base.rows[u], with.rows[u]);
  }
}

TEST(Recommend, IncompleteSideInformationRejected) {
  const auto m = random_enhanced(3, 3, 0.5, 1);
  EXPECT_THROW(recommend(m, SideInformation{}, RecommendConfig{}), ValidationError);
}

TEST(RecommendationsCsv, RoundTrip) {
  const auto m = random_enhanced(6, 8, 0.3, 2);
  RecommendConfig cfg;
  cfg.k = 4;
  cfg.model = ModelKind::cf;
  const auto recs = recommend(m, std::nullopt, cfg);
  std::stringstream buf;
  write_recommendations_csv(recs, *m.user_ids(), *m.item_ids(), nullptr, buf);
  const auto back = read_recommendations_csv(buf, *m.user_ids(), *m.item_ids());
  for (Index u = 0; u < 6; ++u) {
    ASSERT_EQ(back.rows[u].size(), recs.rows[u].size());
    for (std::size_t j = 0; j < recs.rows[u].size(); ++j) {
      EXPECT_EQ(back.rows[u][j].item, recs.rows[u][j].item);
      EXPECT_FLOAT_EQ(static_cast<float>(back.rows[u][j].score), static_cast<float>(recs.rows[u][j].score));
    }
  }
}
