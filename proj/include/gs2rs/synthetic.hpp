#pragma once

// Seeded clustered rating generator. Users and items are split into taste
// clusters; users rate their own cluster's items often and highly and other
// items rarely and low. Item popularity follows a power law so a long tail of
// rarely rated items exists.

#include <cmath>
#include <cstdint>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "gs2rs/errors.hpp"
#include "gs2rs/ratings.hpp"

namespace gs2rs {

struct SyntheticSpec {
  std::size_t users = 100;
  std::size_t items = 120;
  std::size_t clusters = 3;
  double own_rate = 0.6;      // chance of rating an own-cluster item, before popularity scaling
  double other_rate = 0.08;
  double popularity_skew = 0.6;
  std::uint64_t seed = 7;
};

struct SyntheticData {
  SparseRatingMatrix ratings;
  ItemCatalog catalog;
  std::vector<std::size_t> user_cluster;
  std::vector<std::size_t> item_cluster;
};

inline SyntheticData make_synthetic(const SyntheticSpec& s) {
  if (s.users == 0 || s.items == 0 || s.clusters == 0) throw ValidationError("synthetic data needs users, items and clusters");
  std::mt19937_64 rng(s.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SyntheticData d;
  d.user_cluster.resize(s.users);
  d.item_cluster.resize(s.items);
  for (std::size_t u = 0; u < s.users; ++u) d.user_cluster[u] = u % s.clusters;
  for (std::size_t i = 0; i < s.items; ++i) d.item_cluster[i] = i % s.clusters;

  std::vector<double> pop(s.items);
  for (std::size_t i = 0; i < s.items; ++i)
    pop[i] = std::pow(1.0 + static_cast<double>(i / s.clusters), -s.popularity_skew) * 2.0;

  std::vector<Rating> entries;
  for (Index u = 0; u < s.users; ++u)
    for (Index i = 0; i < s.items; ++i) {
      const bool own = d.user_cluster[u] == d.item_cluster[i];
      const double p = std::min(1.0, (own ? s.own_rate : s.other_rate) * pop[i]);
      if (unit(rng) >= p) continue;
      const double r = unit(rng);
      const std::uint8_t v = own ? (r < 0.15 ? 3 : r < 0.6 ? 4 : 5) : (r < 0.4 ? 1 : r < 0.75 ? 2 : 3);
      entries.push_back({u, i, v, static_cast<std::int64_t>(978300000 + entries.size())});
    }
  d.ratings = SparseRatingMatrix(s.users, s.items, std::move(entries), make_sequential_ids(s.users, 1),
                                 make_sequential_ids(s.items, 1));

  static const char* kGenres[] = {"Action", "Comedy", "Drama", "Horror", "Romance", "Sci-Fi", "Thriller", "Western"};
  constexpr std::size_t kGenreCount = std::size(kGenres);
  std::vector<std::vector<std::string>> cats(s.items);
  for (std::size_t i = 0; i < s.items; ++i) {
    cats[i].push_back(kGenres[d.item_cluster[i] % kGenreCount]);
    if (unit(rng) < 0.5) cats[i].push_back(kGenres[(d.item_cluster[i] + 1 + i) % kGenreCount]);
  }
  d.catalog = ItemCatalog(make_sequential_ids(s.items, 1), cats);
  return d;
}

// ratings.dat layout: user::item::rating::timestamp
inline void write_movielens_ratings(const SparseRatingMatrix& m, std::ostream& out) {
  for (const auto& r : m.entries())
    out << m.user_ids()->id(r.user) << "::" << m.item_ids()->id(r.item) << "::" << int(r.value)
        << "::" << (r.timestamp < 0 ? 0 : r.timestamp) << '\n';
}

// movies.dat layout: item::title::Genre|Genre
inline void write_movielens_catalog(const ItemCatalog& c, std::ostream& out) {
  for (Index i = 0; i < c.size(); ++i) {
    out << c.item_ids()->id(i) << "::Item " << c.item_ids()->id(i) << "::";
    const auto names = c.category_names(i);
    for (std::size_t k = 0; k < names.size(); ++k) out << (k ? "|" : "") << names[k];
    out << '\n';
  }
}

}  // namespace gs2rs
