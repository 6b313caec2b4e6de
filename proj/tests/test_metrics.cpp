#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "gs2rs/metrics.hpp"
#include "oracles.hpp"

using namespace gs2rs;

namespace {

// One user; test items `real` (all rated 5, train empty unless given).
GroundTruthSets one_user_truth(std::vector<Index> real, std::vector<Index> satisfied = {},
                               std::vector<Index> interest = {}) {
  GroundTruthSets t;
  t.real = {std::move(real)};
  t.satisfied = {std::move(satisfied)};
  t.interest = {std::move(interest)};
  return t;
}

RecommendationList one_user_list(std::vector<Index> items) {
  RecommendationList r;
  r.rows.resize(1);
  double s = static_cast<double>(items.size());
  for (Index i : items) r.rows[0].push_back({i, s--});
  return r;
}

}  // namespace

TEST(PrecisionRecall, ThreeOfFiveInTopTen) {
  const auto truth = one_user_truth({0, 3, 5, 20, 21});
  const auto rec = one_user_list({0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
  const auto pr = precision_recall_at_k(rec, truth, 10);
  EXPECT_DOUBLE_EQ(pr.precision, 0.3);
  EXPECT_DOUBLE_EQ(pr.recall, 0.6);
}

TEST(PrecisionRecall, EmptyListAndValidation) {
  const auto truth = one_user_truth({1});
  EXPECT_DOUBLE_EQ(precision_recall_at_k(one_user_list({}), truth, 5).precision, 0.0);
  EXPECT_THROW(precision_recall_at_k(one_user_list({}), truth, 0), ValidationError);
}

TEST(PrecisionRecall, IneligibleUsersExcluded) {
  GroundTruthSets t;
  t.real = {{1}, {}};
  t.satisfied = t.interest = {{}, {}};
  RecommendationList r;
  r.rows = {{{1, 1.0}}, {{2, 1.0}}};
  EXPECT_DOUBLE_EQ(precision_recall_at_k(r, t, 1).precision, 1.0);
}

TEST(Ndcg, Examples) {
  const auto truth = one_user_truth({7});
  EXPECT_DOUBLE_EQ(ndcg_at_k(one_user_list({7, 1, 2}), truth, 10), 1.0);
  EXPECT_NEAR(ndcg_at_k(one_user_list({1, 7, 2}), truth, 10), 1.0 / std::log2(3.0), 1e-15);
  EXPECT_NEAR(1.0 / std::log2(3.0), 0.6309, 1e-4);
}

TEST(Mrr, Examples) {
  const auto truth = one_user_truth({7});
  EXPECT_DOUBLE_EQ(mrr(one_user_list({7, 1}), truth), 1.0);
  EXPECT_DOUBLE_EQ(mrr(one_user_list({1, 2, 3, 7}), truth), 0.25);
  EXPECT_DOUBLE_EQ(mrr(one_user_list({1, 2}), truth), 0.0);
}

TEST(ExposureRatio, Examples) {
  ColdStartSpec spec{0.1, {10, 11, 12, 13, 14, 15, 16, 17, 18, 19}};
  RecommendationList r;
  r.rows = {{{10, 1}, {11, 1}, {0, 1}}, {{11, 1}, {12, 1}, {13, 1}}};
  EXPECT_DOUBLE_EQ(exposure_ratio(r, spec), 0.4);
  r.rows = {{{0, 1}}};
  EXPECT_DOUBLE_EQ(exposure_ratio(r, spec), 0.0);
  r.rows = {{}};
  for (Index i = 10; i < 20; ++i) r.rows[0].push_back({i, 1});
  EXPECT_DOUBLE_EQ(exposure_ratio(r, spec), 1.0);
  EXPECT_THROW(exposure_ratio(r, ColdStartSpec{}), ValidationError);
}

TEST(ColdStart, BottomItemsWithIndexTies) {
  // item counts: 0:3 1:1 2:1 3:0 4:2
  const SparseRatingMatrix train(3, 5, {{0, 0, 5}, {1, 0, 5}, {2, 0, 5}, {0, 1, 4}, {1, 2, 4}, {0, 4, 3}, {2, 4, 3}});
  EXPECT_EQ(ColdStartSpec::bottom(train, 0.4).cold_items, (std::vector<Index>{1, 3}));
  EXPECT_EQ(ColdStartSpec::bottom(train, 0.6).cold_items, (std::vector<Index>{1, 2, 3}));
  EXPECT_TRUE(ColdStartSpec::bottom(train, 0.1).cold_items.empty());
  EXPECT_EQ(ColdStartSpec::bottom(train, 1.0).cold_items.size(), 5u);
  EXPECT_THROW(ColdStartSpec::bottom(train, 1.5), ValidationError);
}

TEST(Diversity, Examples) {
  std::vector<std::vector<std::string>> distinct, shared;
  for (int i = 0; i < 10; ++i) {
    distinct.push_back({"g" + std::to_string(i)});
    shared.push_back({"g"});
  }
  const auto a = one_user_list({0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
  EXPECT_DOUBLE_EQ(diversity(a.rows[0], ItemCatalog(make_sequential_ids(10), distinct)), 1.0);
  EXPECT_DOUBLE_EQ(diversity(a.rows[0], ItemCatalog(make_sequential_ids(10), shared)), 0.1);
  const ItemCatalog multi(make_sequential_ids(3), {{"a", "b"}, {"b", "c"}, {"a"}});
  EXPECT_DOUBLE_EQ(diversity(one_user_list({0, 1, 2}).rows[0], multi), 1.0);
  EXPECT_DOUBLE_EQ(diversity(one_user_list({0, 2}).rows[0], multi), 1.0);
  EXPECT_DOUBLE_EQ(diversity(one_user_list({2}).rows[0], multi), 1.0);
  EXPECT_THROW(diversity(RecommendationRow{}, multi), ValidationError);
}

TEST(Serendipity, Examples) {
  const auto fresh = one_user_truth({1, 2}, {1, 2}, {});
  EXPECT_DOUBLE_EQ(serendipity_metric(one_user_list({1, 2}), fresh, 10), 1.0);
  const auto seen = one_user_truth({1, 2}, {1, 2}, {1, 2});
  EXPECT_DOUBLE_EQ(serendipity_metric(one_user_list({1, 2}), seen, 10), 0.0);
  const auto half = one_user_truth({1, 2, 3, 4}, {2, 3}, {3});
  EXPECT_DOUBLE_EQ(serendipity_metric(one_user_list({1, 2, 3, 9}), half, 10), 0.25);
}

TEST(GroundTruth, SatisfiedAgainstTrainMean) {
  // user 0 train mean 3.5; user 1 has no train ratings and uses the global mean 3.5
  const SparseRatingMatrix train(2, 4, {{0, 0, 5}, {0, 1, 2}});
  const SparseRatingMatrix test(2, 4, {{0, 2, 4}, {0, 3, 3}, {1, 2, 3}, {1, 3, 4}});
  const auto t = build_ground_truth(train, test);
  EXPECT_EQ(t.real[0], (std::vector<Index>{2, 3}));
  EXPECT_EQ(t.satisfied[0], (std::vector<Index>{2}));
  EXPECT_EQ(t.interest[0], (std::vector<Index>{0, 1}));
  EXPECT_EQ(t.satisfied[1], (std::vector<Index>{3}));
  EXPECT_THROW(build_ground_truth(train, SparseRatingMatrix(3, 4, {})), ValidationError);
}

TEST(Oracle, RandomInstancesMatchExactly) {
  std::mt19937_64 rng(20240601);
  int with_cold = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto ins = oracle::random_instance(rng);
    const auto truth = build_ground_truth(ins.train, ins.test);
    const auto expect = oracle::brute_force(ins);
    const auto pr = precision_recall_at_k(ins.rec, truth, ins.k);
    EXPECT_EQ(pr.precision, expect.precision) << trial;
    EXPECT_EQ(pr.recall, expect.recall) << trial;
    EXPECT_EQ(ndcg_at_k(ins.rec, truth, ins.k), expect.ndcg) << trial;
    EXPECT_EQ(mrr(ins.rec, truth), expect.mrr) << trial;
    EXPECT_EQ(diversity(ins.rec, truth, ins.catalog, ins.k), expect.di) << trial;
    EXPECT_EQ(serendipity_metric(ins.rec, truth, ins.k), expect.se) << trial;
    const auto cold = ColdStartSpec::bottom(ins.train, ins.t_percent / 100.0);
    if (expect.er < 0) {
      EXPECT_TRUE(cold.cold_items.empty()) << trial;
    } else {
      ++with_cold;
      EXPECT_EQ(exposure_ratio(ins.rec, cold), expect.er) << trial;
    }
  }
  EXPECT_GT(with_cold, 100);
}

TEST(Report, RangesOnRandomInstances) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const auto ins = oracle::random_instance(rng);
    const auto cold = ColdStartSpec::bottom(ins.train, 1.0);
    const auto r = evaluate(ins.rec, build_ground_truth(ins.train, ins.test), ins.catalog, cold, ins.k);
    for (double v : {r.precision, r.recall, r.ndcg, r.mrr, r.exposure_ratio, r.serendipity}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    EXPECT_GE(r.diversity, 0.0);
  }
}

TEST(Report, CsvHeaderAndRow) {
  MetricsReport r;
  r.model = "wmf+gs2rs";
  r.precision = 0.25;
  std::ostringstream out;
  write_metrics_csv(std::span<const MetricsReport>(&r, 1), out);
  EXPECT_EQ(out.str(),
            "model,k,theta,t,seed,precision,recall,ndcg,mrr,er,di,se\n"
            "wmf+gs2rs,10,0.50,2,0,0.250000,0.000000,0.000000,0.000000,0.000000,0.000000,0.000000\n");
}
