#pragma once

// Accuracy (precision/recall/NDCG/MRR), cold-start exposure, diversity and
// serendipity metrics. Per-user values are macro-averaged over users with a
// non-empty test set.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "gs2rs/errors.hpp"
#include "gs2rs/preference.hpp"
#include "gs2rs/ratings.hpp"
#include "gs2rs/recommenders.hpp"

namespace gs2rs {

struct GroundTruthSets {
  std::vector<std::vector<Index>> real;       // I^real: test items
  std::vector<std::vector<Index>> satisfied;  // I^sa: test items rated >= alpha_u
  std::vector<std::vector<Index>> interest;   // I^in: items in the user's train support

  std::size_t num_users() const { return real.size(); }
  bool eligible(Index u) const { return !real[u].empty(); }
};

// alpha_u is the user's train mean (global train mean for users without train ratings).
inline GroundTruthSets build_ground_truth(const SparseRatingMatrix& train, const SparseRatingMatrix& test) {
  if (train.num_users() != test.num_users() || train.num_items() != test.num_items())
    throw ValidationError("train and test shapes differ");
  const auto alpha = user_means_or_global(train);
  GroundTruthSets t;
  t.real.resize(test.num_users());
  t.satisfied.resize(test.num_users());
  t.interest.resize(test.num_users());
  for (Index u = 0; u < test.num_users(); ++u) {
    for (const auto& r : test.row(u)) {
      t.real[u].push_back(r.item);
      if (r.value >= alpha[u]) t.satisfied[u].push_back(r.item);
    }
    for (const auto& r : train.row(u)) t.interest[u].push_back(r.item);
  }
  return t;
}

namespace detail {

inline bool contains_sorted(const std::vector<Index>& v, Index x) { return std::binary_search(v.begin(), v.end(), x); }

inline std::span<const ScoredItem> prefix(const RecommendationRow& row, std::size_t k) {
  return std::span<const ScoredItem>(row).first(std::min(k, row.size()));
}

template <typename PerUser>
double macro_average(const RecommendationList& rec, const GroundTruthSets& truth, PerUser&& per_user) {
  if (rec.rows.size() != truth.num_users()) throw ValidationError("recommendations and ground truth differ in users");
  double sum = 0;
  std::size_t n = 0;
  for (Index u = 0; u < truth.num_users(); ++u) {
    if (!truth.eligible(u)) continue;
    sum += per_user(u);
    ++n;
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

}  // namespace detail

struct PrecisionRecall {
  double precision = 0;
  double recall = 0;
};

inline PrecisionRecall precision_recall_at_k(const RecommendationList& rec, const GroundTruthSets& truth,
                                             std::size_t k) {
  if (k < 1) throw ValidationError("k must be >= 1");
  auto hits = [&](Index u) {
    double h = 0;
    for (const auto& it : detail::prefix(rec.rows[u], k)) h += detail::contains_sorted(truth.real[u], it.item);
    return h;
  };
  PrecisionRecall pr;
  pr.precision = detail::macro_average(rec, truth, [&](Index u) { return hits(u) / static_cast<double>(k); });
  pr.recall = detail::macro_average(
      rec, truth, [&](Index u) { return hits(u) / static_cast<double>(truth.real[u].size()); });
  return pr;
}

// Binary relevance, log2 discount, ideal DCG over min(k, |I^real|) hits.
inline double ndcg_at_k(const RecommendationList& rec, const GroundTruthSets& truth, std::size_t k) {
  if (k < 1) throw ValidationError("k must be >= 1");
  return detail::macro_average(rec, truth, [&](Index u) {
    double dcg = 0;
    const auto top = detail::prefix(rec.rows[u], k);
    for (std::size_t j = 0; j < top.size(); ++j)
      if (detail::contains_sorted(truth.real[u], top[j].item)) dcg += 1.0 / std::log2(static_cast<double>(j) + 2.0);
    double idcg = 0;
    const std::size_t ideal = std::min(k, truth.real[u].size());
    for (std::size_t j = 0; j < ideal; ++j) idcg += 1.0 / std::log2(static_cast<double>(j) + 2.0);
    return dcg / idcg;
  });
}

inline double mrr(const RecommendationList& rec, const GroundTruthSets& truth) {
  return detail::macro_average(rec, truth, [&](Index u) {
    const auto& row = rec.rows[u];
    for (std::size_t j = 0; j < row.size(); ++j)
      if (detail::contains_sorted(truth.real[u], row[j].item)) return 1.0 / static_cast<double>(j + 1);
    return 0.0;
  });
}

struct ColdStartSpec {
  double t_percent = 0.1;
  std::vector<Index> cold_items;  // sorted

  // Bottom floor(t_percent * N) items by train interaction count; ties to the lower index.
  static ColdStartSpec bottom(const SparseRatingMatrix& train, double t_percent) {
    if (!(t_percent >= 0.0 && t_percent <= 1.0)) throw ValidationError("cold-start t_percent must lie in [0, 1]");
    const auto counts = train.item_counts();
    std::vector<Index> order(train.num_items());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return counts[a] < counts[b]; });
    const auto n = static_cast<std::size_t>(std::floor(t_percent * static_cast<double>(train.num_items()) + 1e-9));
    order.resize(n);
    std::sort(order.begin(), order.end());
    return {t_percent, std::move(order)};
  }
};

// B / A: cold items shown to at least one user over all cold items.
inline double exposure_ratio(const RecommendationList& rec, const ColdStartSpec& spec) {
  if (spec.cold_items.empty()) throw ValidationError("exposure_ratio: no cold-start items");
  std::vector<Index> exposed;
  for (const auto& row : rec.rows)
    for (const auto& it : row)
      if (detail::contains_sorted(spec.cold_items, it.item)) exposed.push_back(it.item);
  std::sort(exposed.begin(), exposed.end());
  exposed.erase(std::unique(exposed.begin(), exposed.end()), exposed.end());
  return static_cast<double>(exposed.size()) / static_cast<double>(spec.cold_items.size());
}

// Distinct categories covered by the list over list length.
inline double diversity(std::span<const ScoredItem> row, const ItemCatalog& catalog) {
  if (row.empty()) throw ValidationError("diversity of an empty list");
  std::vector<Index> cats;
  for (const auto& it : row) {
    const auto c = catalog.categories(it.item);
    cats.insert(cats.end(), c.begin(), c.end());
  }
  std::sort(cats.begin(), cats.end());
  cats.erase(std::unique(cats.begin(), cats.end()), cats.end());
  return static_cast<double>(cats.size()) / static_cast<double>(row.size());
}

// Averaged over eligible users whose top-k list is non-empty.
inline double diversity(const RecommendationList& rec, const GroundTruthSets& truth, const ItemCatalog& catalog,
                        std::size_t k) {
  double sum = 0;
  std::size_t n = 0;
  for (Index u = 0; u < truth.num_users(); ++u) {
    if (!truth.eligible(u) || rec.rows[u].empty()) continue;
    sum += diversity(detail::prefix(rec.rows[u], k), catalog);
    ++n;
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

// |rec ∩ I^real ∩ (I^sa - I^in)| / |I^real| for one user.
inline double serendipity_metric(std::span<const ScoredItem> row, const GroundTruthSets& truth, Index u) {
  if (truth.real[u].empty()) throw ValidationError("serendipity_metric: user has no test items");
  double hits = 0;
  for (const auto& it : row)
    hits += detail::contains_sorted(truth.real[u], it.item) && detail::contains_sorted(truth.satisfied[u], it.item) &&
            !detail::contains_sorted(truth.interest[u], it.item);
  return hits / static_cast<double>(truth.real[u].size());
}

inline double serendipity_metric(const RecommendationList& rec, const GroundTruthSets& truth, std::size_t k) {
  return detail::macro_average(
      rec, truth, [&](Index u) { return serendipity_metric(detail::prefix(rec.rows[u], k), truth, u); });
}

struct MetricsReport {
  std::string model;
  std::size_t k = 10;
  double theta = 0.5;
  std::size_t t = 2;
  std::uint64_t seed = 0;
  double precision = 0, recall = 0, ndcg = 0, mrr = 0;
  double exposure_ratio = 0, diversity = 0, serendipity = 0;
};

inline MetricsReport evaluate(const RecommendationList& rec, const GroundTruthSets& truth, const ItemCatalog& catalog,
                              const ColdStartSpec& cold, std::size_t k, MetricsReport meta = {}) {
  meta.k = k;
  const auto pr = precision_recall_at_k(rec, truth, k);
  meta.precision = pr.precision;
  meta.recall = pr.recall;
  meta.ndcg = ndcg_at_k(rec, truth, k);
  meta.mrr = mrr(rec, truth);
  meta.exposure_ratio = exposure_ratio(rec, cold);
  meta.diversity = diversity(rec, truth, catalog, k);
  meta.serendipity = serendipity_metric(rec, truth, k);
  return meta;
}

inline constexpr std::string_view kMetricsHeader = "model,k,theta,t,seed,precision,recall,ndcg,mrr,er,di,se";

inline std::string metrics_csv_row(const MetricsReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%s,%zu,%.2f,%zu,%llu,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f", r.model.c_str(), r.k,
                r.theta, r.t, static_cast<unsigned long long>(r.seed), r.precision, r.recall, r.ndcg, r.mrr,
                r.exposure_ratio, r.diversity, r.serendipity);
  return buf;
}

inline void write_metrics_csv(std::span<const MetricsReport> reports, std::ostream& out) {
  out << kMetricsHeader << '\n';
  for (const auto& r : reports) out << metrics_csv_row(r) << '\n';
}

}  // namespace gs2rs
