#pragma once

// Sparse rating data: ingestion, validation, splits and summary statistics.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <memory>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "gs2rs/errors.hpp"

namespace gs2rs {

using Index = std::uint32_t;

struct Rating {
  Index user = 0;
  Index item = 0;
  std::uint8_t value = 0;
  std::int64_t timestamp = -1;  // -1 when the source carries none

  friend bool operator==(const Rating&, const Rating&) = default;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '\n'))
    s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view s, std::string_view delim) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const auto next = s.find(delim, pos);
    if (next == std::string_view::npos) {
      out.push_back(s.substr(pos));
      return out;
    }
    out.push_back(s.substr(pos, next - pos));
    pos = next + delim.size();
  }
}

template <typename T>
std::optional<T> parse_number(std::string_view s) {
  s = trim(s);
  T value{};
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc{} || ptr != end || s.empty()) return std::nullopt;
  return value;
}

inline bool is_unsigned_integer(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

// Numeric ids order numerically, everything else lexicographically.
inline bool id_less(const std::string& a, const std::string& b) {
  const bool na = is_unsigned_integer(a), nb = is_unsigned_integer(b);
  if (na && nb) {
    if (a.size() != b.size()) return a.size() < b.size();
    return a < b;
  }
  if (na != nb) return na;
  return a < b;
}

}  // namespace detail

// Bidirectional external id <-> contiguous index map.
class IdMap {
 public:
  IdMap() = default;
  explicit IdMap(std::vector<std::string> ids) : ids_(std::move(ids)) {
    index_.reserve(ids_.size());
    for (std::size_t i = 0; i < ids_.size(); ++i) {
      if (!index_.emplace(ids_[i], static_cast<Index>(i)).second)
        throw ValidationError("duplicate id '" + ids_[i] + "'");
    }
  }

  std::size_t size() const noexcept { return ids_.size(); }
  const std::string& id(Index i) const { return ids_.at(i); }
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  std::optional<Index> find(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

 private:
  std::vector<std::string> ids_;
  std::unordered_map<std::string, Index> index_;
};

using IdMapPtr = std::shared_ptr<const IdMap>;

inline IdMapPtr make_sequential_ids(std::size_t n, Index first = 0) {
  std::vector<std::string> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = std::to_string(first + i);
  return std::make_shared<const IdMap>(std::move(ids));
}

// Observed M x N rating matrix; absent pairs are unknown. Entries are kept
// sorted by (user, item) with per-user row offsets.
class SparseRatingMatrix {
 public:
  SparseRatingMatrix() : user_ids_(make_sequential_ids(0)), item_ids_(make_sequential_ids(0)), offsets_(1, 0) {}

  SparseRatingMatrix(std::size_t num_users, std::size_t num_items, std::vector<Rating> entries,
                     IdMapPtr user_ids = nullptr, IdMapPtr item_ids = nullptr)
      : num_users_(num_users), num_items_(num_items), entries_(std::move(entries)),
        user_ids_(user_ids ? std::move(user_ids) : make_sequential_ids(num_users)),
        item_ids_(item_ids ? std::move(item_ids) : make_sequential_ids(num_items)) {
    if (user_ids_->size() != num_users_ || item_ids_->size() != num_items_)
      throw ValidationError("id map size does not match matrix shape");
    std::sort(entries_.begin(), entries_.end(), [](const Rating& a, const Rating& b) {
      return a.user != b.user ? a.user < b.user : a.item < b.item;
    });
    offsets_.assign(num_users_ + 1, 0);
    for (std::size_t k = 0; k < entries_.size(); ++k) {
      const Rating& r = entries_[k];
      if (r.user >= num_users_ || r.item >= num_items_)
        throw ValidationError("rating index out of range: (" + std::to_string(r.user) + ", " +
                              std::to_string(r.item) + ")");
      if (r.value < 1 || r.value > 5)
        throw ValidationError("rating value " + std::to_string(r.value) + " outside {1..5}");
      if (k > 0 && entries_[k - 1].user == r.user && entries_[k - 1].item == r.item)
        throw ValidationError("duplicate (user, item) pair (" + std::to_string(r.user) + ", " +
                              std::to_string(r.item) + ")");
      ++offsets_[r.user + 1];
    }
    std::partial_sum(offsets_.begin(), offsets_.end(), offsets_.begin());
  }

  std::size_t num_users() const noexcept { return num_users_; }
  std::size_t num_items() const noexcept { return num_items_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }

  std::span<const Rating> entries() const noexcept { return entries_; }
  std::span<const Rating> row(Index u) const {
    return std::span<const Rating>(entries_).subspan(offsets_.at(u), offsets_.at(u + 1) - offsets_.at(u));
  }

  std::optional<std::uint8_t> find(Index u, Index i) const {
    const auto r = row(u);
    auto it = std::lower_bound(r.begin(), r.end(), i, [](const Rating& x, Index item) { return x.item < item; });
    if (it == r.end() || it->item != i) return std::nullopt;
    return it->value;
  }
  bool contains(Index u, Index i) const { return find(u, i).has_value(); }

  const IdMapPtr& user_ids() const noexcept { return user_ids_; }
  const IdMapPtr& item_ids() const noexcept { return item_ids_; }

  // Same shape and id maps, different entries.
  SparseRatingMatrix with_entries(std::vector<Rating> entries) const {
    return SparseRatingMatrix(num_users_, num_items_, std::move(entries), user_ids_, item_ids_);
  }

  std::vector<std::size_t> item_counts() const {
    std::vector<std::size_t> counts(num_items_, 0);
    for (const auto& r : entries_) ++counts[r.item];
    return counts;
  }

  double global_mean() const {
    if (entries_.empty()) return 3.0;
    double s = 0;
    for (const auto& r : entries_) s += r.value;
    return s / static_cast<double>(entries_.size());
  }

 private:
  std::size_t num_users_ = 0;
  std::size_t num_items_ = 0;
  std::vector<Rating> entries_;
  IdMapPtr user_ids_;
  IdMapPtr item_ids_;
  std::vector<std::size_t> offsets_;
};

// Per-item category labels. Categories are interned; names() maps back.
class ItemCatalog {
 public:
  static constexpr std::string_view kUnknownCategory = "UNKNOWN";

  ItemCatalog() : ids_(make_sequential_ids(0)) {}
  ItemCatalog(IdMapPtr ids, const std::vector<std::vector<std::string>>& categories) : ids_(std::move(ids)) {
    if (ids_->size() != categories.size()) throw ValidationError("catalog ids and categories differ in length");
    std::unordered_map<std::string, Index> intern;
    item_categories_.resize(categories.size());
    for (std::size_t i = 0; i < categories.size(); ++i) {
      auto cats = categories[i];
      if (cats.empty()) cats.emplace_back(kUnknownCategory);
      for (const auto& c : cats) {
        auto [it, inserted] = intern.emplace(c, static_cast<Index>(names_.size()));
        if (inserted) names_.push_back(c);
        item_categories_[i].push_back(it->second);
      }
      std::sort(item_categories_[i].begin(), item_categories_[i].end());
      item_categories_[i].erase(std::unique(item_categories_[i].begin(), item_categories_[i].end()),
                                item_categories_[i].end());
    }
  }

  std::size_t size() const noexcept { return item_categories_.size(); }
  const IdMapPtr& item_ids() const noexcept { return ids_; }
  std::span<const Index> categories(Index item) const { return item_categories_.at(item); }
  std::vector<std::string> category_names(Index item) const {
    std::vector<std::string> out;
    for (Index c : categories(item)) out.push_back(names_[c]);
    return out;
  }
  const std::vector<std::string>& names() const noexcept { return names_; }

 private:
  IdMapPtr ids_;
  std::vector<std::vector<Index>> item_categories_;
  std::vector<std::string> names_;
};

struct DatasetSplit {
  std::size_t fold_index = 0;
  SparseRatingMatrix train;
  SparseRatingMatrix test;
  std::uint64_t seed = 0;
};

struct DatasetStats {
  std::size_t users = 0;
  std::size_t items = 0;
  std::size_t feedbacks = 0;
  double sparsity = 0.0;
};

enum class RatingsFormat { movielens_dat, csv_triples };
enum class CatalogFormat { movielens_item, csv_categories };

inline RatingsFormat parse_ratings_format(std::string_view s) {
  if (s == "movielens_dat") return RatingsFormat::movielens_dat;
  if (s == "csv_triples") return RatingsFormat::csv_triples;
  throw ConfigError("unknown ratings format '" + std::string(s) + "'");
}

inline CatalogFormat parse_catalog_format(std::string_view s) {
  if (s == "movielens_item") return CatalogFormat::movielens_item;
  if (s == "csv_categories") return CatalogFormat::csv_categories;
  throw ConfigError("unknown catalog format '" + std::string(s) + "'");
}

// Reads ratings. When `universe` is given, item indices follow the catalog
// order and item ids missing from it are appended after the catalog items.
inline SparseRatingMatrix read_ratings(std::istream& in, RatingsFormat format,
                                       const ItemCatalog* universe = nullptr) {
  struct Raw {
    std::string user, item;
    int value;
    std::int64_t timestamp;
  };
  std::vector<Raw> raw;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  bool has_timestamp_column = false;
  while (std::getline(in, line)) {
    ++line_no;
    const auto text = detail::trim(line);
    if (text.empty()) continue;
    std::vector<std::string_view> fields;
    if (format == RatingsFormat::movielens_dat) {
      fields = detail::split(text, "::");
      if (fields.size() != 4) throw ParseError("expected UserID::MovieID::Rating::Timestamp", line_no);
    } else {
      fields = detail::split(text, ",");
      if (!header_seen) {
        header_seen = true;
        const bool ok3 = fields.size() == 3 && detail::trim(fields[0]) == "user" &&
                         detail::trim(fields[1]) == "item" && detail::trim(fields[2]) == "rating";
        const bool ok4 = fields.size() == 4 && detail::trim(fields[0]) == "user" &&
                         detail::trim(fields[1]) == "item" && detail::trim(fields[2]) == "rating" &&
                         detail::trim(fields[3]) == "timestamp";
        if (!ok3 && !ok4) throw ParseError("expected header user,item,rating[,timestamp]", line_no);
        has_timestamp_column = ok4;
        continue;
      }
      if (fields.size() != (has_timestamp_column ? 4u : 3u))
        throw ParseError("wrong field count", line_no);
    }
    Raw r;
    r.user = std::string(detail::trim(fields[0]));
    r.item = std::string(detail::trim(fields[1]));
    if (r.user.empty() || r.item.empty()) throw ParseError("empty id", line_no);
    auto value = detail::parse_number<int>(fields[2]);
    if (!value) {
      // Tolerate "4.0"-style ratings only when they are integral.
      auto real = detail::parse_number<double>(fields[2]);
      if (!real || *real != static_cast<int>(*real)) throw ParseError("unparseable rating", line_no);
      value = static_cast<int>(*real);
    }
    if (*value < 1 || *value > 5)
      throw ValidationError("rating " + std::to_string(*value) + " outside {1..5} (line " +
                            std::to_string(line_no) + ")");
    r.value = *value;
    r.timestamp = -1;
    if (fields.size() == 4) {
      auto ts = detail::parse_number<std::int64_t>(fields[3]);
      if (!ts) throw ParseError("unparseable timestamp", line_no);
      r.timestamp = *ts;
    }
    raw.push_back(std::move(r));
  }

  std::vector<std::string> user_ids, item_ids;
  {
    std::unordered_map<std::string, bool> seen_u, seen_i;
    for (const auto& r : raw) {
      if (seen_u.emplace(r.user, true).second) user_ids.push_back(r.user);
      if (seen_i.emplace(r.item, true).second) item_ids.push_back(r.item);
    }
  }
  std::sort(user_ids.begin(), user_ids.end(), detail::id_less);
  if (universe) {
    std::vector<std::string> extra;
    for (const auto& id : item_ids)
      if (!universe->item_ids()->find(id)) extra.push_back(id);
    std::sort(extra.begin(), extra.end(), detail::id_less);
    item_ids = universe->item_ids()->ids();
    item_ids.insert(item_ids.end(), extra.begin(), extra.end());
  } else {
    std::sort(item_ids.begin(), item_ids.end(), detail::id_less);
  }
  auto users = std::make_shared<const IdMap>(std::move(user_ids));
  auto items = std::make_shared<const IdMap>(std::move(item_ids));

  // Dedup: later timestamp wins; equal or missing timestamps go to the later line.
  std::unordered_map<std::uint64_t, std::size_t> slot;
  std::vector<Rating> entries;
  entries.reserve(raw.size());
  for (const auto& r : raw) {
    Rating e{*users->find(r.user), *items->find(r.item), static_cast<std::uint8_t>(r.value), r.timestamp};
    const std::uint64_t key = (static_cast<std::uint64_t>(e.user) << 32) | e.item;
    auto [it, inserted] = slot.emplace(key, entries.size());
    if (inserted) {
      entries.push_back(e);
    } else {
      Rating& prev = entries[it->second];
      const bool both_timed = prev.timestamp >= 0 && e.timestamp >= 0;
      if (!both_timed || e.timestamp >= prev.timestamp) prev = e;
    }
  }
  return SparseRatingMatrix(users->size(), items->size(), std::move(entries), users, items);
}

inline SparseRatingMatrix ingest_ratings(const std::string& path, RatingsFormat format,
                                         const ItemCatalog* universe = nullptr) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open ratings file '" + path + "'");
  return read_ratings(in, format, universe);
}

inline ItemCatalog read_catalog(std::istream& in, CatalogFormat format) {
  std::vector<std::string> ids;
  std::vector<std::vector<std::string>> cats;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    const auto text = detail::trim(line);
    if (text.empty()) continue;
    std::string_view id_field, cat_field;
    if (format == CatalogFormat::movielens_item) {
      const auto first = text.find("::");
      const auto last = text.rfind("::");
      if (first == std::string_view::npos || first == last)
        throw ParseError("expected MovieID::Title::Genres", line_no);
      id_field = text.substr(0, first);
      cat_field = text.substr(last + 2);
    } else {
      if (!header_seen) {
        header_seen = true;
        const auto f = detail::split(text, ",");
        if (f.size() != 2 || detail::trim(f[0]) != "item" || detail::trim(f[1]) != "categories")
          throw ParseError("expected header item,categories", line_no);
        continue;
      }
      const auto comma = text.find(',');
      if (comma == std::string_view::npos) throw ParseError("expected item,categories", line_no);
      id_field = text.substr(0, comma);
      cat_field = text.substr(comma + 1);
    }
    id_field = detail::trim(id_field);
    if (id_field.empty()) throw ParseError("empty item id", line_no);
    std::vector<std::string> item_cats;
    for (auto c : detail::split(cat_field, "|")) {
      c = detail::trim(c);
      if (!c.empty()) item_cats.emplace_back(c);
    }
    ids.emplace_back(id_field);
    cats.push_back(std::move(item_cats));
  }

  if (format == CatalogFormat::movielens_item && !ids.empty() &&
      std::all_of(ids.begin(), ids.end(), [](const std::string& s) { return detail::is_unsigned_integer(s); })) {
    // MovieLens ids form a dense 1..max range; unlisted ids stay addressable.
    std::size_t max_id = 0;
    for (const auto& s : ids) max_id = std::max<std::size_t>(max_id, std::stoull(s));
    std::vector<std::vector<std::string>> dense(max_id);
    std::vector<bool> listed(max_id, false);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      const std::size_t id = std::stoull(ids[k]);
      if (id == 0) throw ParseError("MovieID 0 is not valid", 0);
      if (listed[id - 1]) throw ValidationError("duplicate catalog id " + ids[k]);
      listed[id - 1] = true;
      dense[id - 1] = std::move(cats[k]);
    }
    return ItemCatalog(make_sequential_ids(max_id, 1), dense);
  }
  return ItemCatalog(std::make_shared<const IdMap>(std::move(ids)), cats);
}

inline ItemCatalog ingest_catalog(const std::string& path, CatalogFormat format) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open catalog file '" + path + "'");
  return read_catalog(in, format);
}

// Catalog re-indexed to the matrix's item indices; items without an entry get UNKNOWN.
inline ItemCatalog align_catalog(const ItemCatalog& catalog, const SparseRatingMatrix& m) {
  std::vector<std::vector<std::string>> cats(m.num_items());
  for (Index i = 0; i < m.num_items(); ++i) {
    if (auto k = catalog.item_ids()->find(m.item_ids()->id(i))) cats[i] = catalog.category_names(*k);
  }
  return ItemCatalog(m.item_ids(), cats);
}

inline void write_catalog_csv(const ItemCatalog& catalog, std::ostream& out) {
  out << "item,categories\n";
  for (Index i = 0; i < catalog.size(); ++i) {
    out << catalog.item_ids()->id(i) << ',';
    const auto names = catalog.category_names(i);
    for (std::size_t k = 0; k < names.size(); ++k) out << (k ? "|" : "") << names[k];
    out << '\n';
  }
}

inline DatasetStats dataset_stats(const SparseRatingMatrix& m) {
  DatasetStats s;
  s.users = m.num_users();
  s.items = m.num_items();
  s.feedbacks = m.size();
  const double cells = static_cast<double>(s.users) * static_cast<double>(s.items);
  s.sparsity = cells == 0 ? 0.0 : 1.0 - static_cast<double>(s.feedbacks) / cells;
  return s;
}

// Seeded shuffle then k near-equal folds; the first (n mod k) folds get the extra entry.
inline std::vector<DatasetSplit> kfold_split(const SparseRatingMatrix& m, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ValidationError("kfold_split needs k >= 2");
  if (k > m.size()) throw ValidationError("kfold_split: k exceeds number of entries");
  std::vector<std::size_t> order(m.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<std::size_t> fold_of(m.size());
  const std::size_t base = m.size() / k, extra = m.size() % k;
  std::size_t pos = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t len = base + (f < extra ? 1 : 0);
    for (std::size_t j = 0; j < len; ++j) fold_of[order[pos++]] = f;
  }

  std::vector<DatasetSplit> splits;
  const auto entries = m.entries();
  for (std::size_t f = 0; f < k; ++f) {
    std::vector<Rating> train, test;
    for (std::size_t e = 0; e < entries.size(); ++e) (fold_of[e] == f ? test : train).push_back(entries[e]);
    splits.push_back({f, m.with_entries(std::move(train)), m.with_entries(std::move(test)), seed});
  }
  return splits;
}

// Seeded uniform subsample of users and items. Ids and their relative order are kept.
inline SparseRatingMatrix subsample(const SparseRatingMatrix& m, std::size_t users, std::size_t items,
                                    std::uint64_t seed) {
  users = std::min(users, m.num_users());
  items = std::min(items, m.num_items());
  std::mt19937_64 rng(seed);
  auto pick = [&rng](std::size_t n, std::size_t k) {
    std::vector<Index> all(n);
    std::iota(all.begin(), all.end(), 0);
    std::shuffle(all.begin(), all.end(), rng);
    all.resize(k);
    std::sort(all.begin(), all.end());
    return all;
  };
  const auto us = pick(m.num_users(), users);
  const auto is = pick(m.num_items(), items);
  std::vector<std::int64_t> umap(m.num_users(), -1), imap(m.num_items(), -1);
  std::vector<std::string> uids, iids;
  for (std::size_t k = 0; k < us.size(); ++k) {
    umap[us[k]] = static_cast<std::int64_t>(k);
    uids.push_back(m.user_ids()->id(us[k]));
  }
  for (std::size_t k = 0; k < is.size(); ++k) {
    imap[is[k]] = static_cast<std::int64_t>(k);
    iids.push_back(m.item_ids()->id(is[k]));
  }
  std::vector<Rating> out;
  for (const auto& r : m.entries()) {
    if (umap[r.user] < 0 || imap[r.item] < 0) continue;
    out.push_back({static_cast<Index>(umap[r.user]), static_cast<Index>(imap[r.item]), r.value, r.timestamp});
  }
  return SparseRatingMatrix(users, items, std::move(out), std::make_shared<const IdMap>(std::move(uids)),
                            std::make_shared<const IdMap>(std::move(iids)));
}

// csv_triples export with external ids.
inline void write_ratings_csv(const SparseRatingMatrix& m, std::ostream& out) {
  out << "user,item,rating,timestamp\n";
  for (const auto& r : m.entries())
    out << m.user_ids()->id(r.user) << ',' << m.item_ids()->id(r.item) << ',' << int(r.value) << ','
        << r.timestamp << '\n';
}

// Exact snapshot (shape, id maps, entries) used for stage checkpoints.
inline void write_snapshot(const SparseRatingMatrix& m, std::ostream& out) {
  out << "gs2rs-ratings 1\nusers " << m.num_users() << '\n';
  for (const auto& id : m.user_ids()->ids()) out << id << '\n';
  out << "items " << m.num_items() << '\n';
  for (const auto& id : m.item_ids()->ids()) out << id << '\n';
  out << "entries " << m.size() << '\n';
  for (const auto& r : m.entries())
    out << r.user << ' ' << r.item << ' ' << int(r.value) << ' ' << r.timestamp << '\n';
}

inline SparseRatingMatrix read_snapshot(std::istream& in) {
  std::string tag;
  int version = 0;
  if (!(in >> tag >> version) || tag != "gs2rs-ratings" || version != 1)
    throw ParseError("not a gs2rs ratings snapshot", 1);
  auto read_ids = [&in](const char* label) {
    std::string word;
    std::size_t n = 0;
    if (!(in >> word >> n) || word != label) throw ParseError(std::string("expected ") + label, 0);
    std::vector<std::string> ids(n);
    for (auto& id : ids)
      if (!(in >> id)) throw ParseError("truncated id list", 0);
    return ids;
  };
  auto users = std::make_shared<const IdMap>(read_ids("users"));
  auto items = std::make_shared<const IdMap>(read_ids("items"));
  std::string word;
  std::size_t n = 0;
  if (!(in >> word >> n) || word != "entries") throw ParseError("expected entries", 0);
  std::vector<Rating> entries(n);
  for (auto& r : entries) {
    int value = 0;
    if (!(in >> r.user >> r.item >> value >> r.timestamp)) throw ParseError("truncated entries", 0);
    r.value = static_cast<std::uint8_t>(value);
  }
  return SparseRatingMatrix(users->size(), items->size(), std::move(entries), users, items);
}

}  // namespace gs2rs
