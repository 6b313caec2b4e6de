#pragma once

// Interest / satisfaction preference extraction from a rating matrix.

#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gs2rs/errors.hpp"
#include "gs2rs/ratings.hpp"

namespace gs2rs {

enum class Channel { interest, satisfaction };

inline std::string_view to_string(Channel c) { return c == Channel::interest ? "interest" : "satisfaction"; }

inline Channel parse_channel(std::string_view s) {
  if (s == "interest") return Channel::interest;
  if (s == "satisfaction") return Channel::satisfaction;
  throw ConfigError("unknown channel '" + std::string(s) + "'");
}

struct PreferenceEntry {
  Index user = 0;
  Index item = 0;
  std::uint8_t value = 0;  // 1 or 0

  friend bool operator==(const PreferenceEntry&, const PreferenceEntry&) = default;
};

// Ternary matrix: known 1, known 0, or unknown (absent).
class PreferenceMatrix {
 public:
  PreferenceMatrix() : offsets_(1, 0) {}
  PreferenceMatrix(std::size_t users, std::size_t items, Channel channel, std::vector<PreferenceEntry> entries)
      : num_users_(users), num_items_(items), channel_(channel), entries_(std::move(entries)) {
    std::sort(entries_.begin(), entries_.end(), [](const auto& a, const auto& b) {
      return a.user != b.user ? a.user < b.user : a.item < b.item;
    });
    offsets_.assign(users + 1, 0);
    for (std::size_t k = 0; k < entries_.size(); ++k) {
      const auto& e = entries_[k];
      if (e.user >= users || e.item >= items) throw ValidationError("preference index out of range");
      if (e.value > 1) throw ValidationError("preference value must be 0 or 1");
      if (channel == Channel::interest && e.value == 0)
        throw ValidationError("interest preferences cannot hold 0 entries");
      if (k > 0 && entries_[k - 1].user == e.user && entries_[k - 1].item == e.item)
        throw ValidationError("duplicate preference entry");
      ++offsets_[e.user + 1];
    }
    std::partial_sum(offsets_.begin(), offsets_.end(), offsets_.begin());
  }

  std::size_t num_users() const noexcept { return num_users_; }
  std::size_t num_items() const noexcept { return num_items_; }
  Channel channel() const noexcept { return channel_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  std::span<const PreferenceEntry> entries() const noexcept { return entries_; }
  std::span<const PreferenceEntry> row(Index u) const {
    return std::span<const PreferenceEntry>(entries_).subspan(offsets_.at(u), offsets_.at(u + 1) - offsets_.at(u));
  }
  std::optional<std::uint8_t> find(Index u, Index i) const {
    const auto r = row(u);
    auto it = std::lower_bound(r.begin(), r.end(), i, [](const auto& x, Index item) { return x.item < item; });
    if (it == r.end() || it->item != i) return std::nullopt;
    return it->value;
  }

 private:
  std::size_t num_users_ = 0;
  std::size_t num_items_ = 0;
  Channel channel_ = Channel::interest;
  std::vector<PreferenceEntry> entries_;
  std::vector<std::size_t> offsets_;
};

struct ThresholdPolicy {
  enum class Mode { user_mean, item_mean, combined_mean, fixed };
  Mode mode = Mode::user_mean;
  double fixed_value = 3.0;

  static ThresholdPolicy fixed(double v) {
    if (!(v >= 1.0 && v <= 5.0)) throw ValidationError("fixed satisfaction threshold must lie in [1, 5]");
    return {Mode::fixed, v};
  }
};

// Accepts user_mean | item_mean | combined_mean | fixed:<v>.
inline ThresholdPolicy parse_threshold_policy(std::string_view s) {
  if (s == "user_mean") return {ThresholdPolicy::Mode::user_mean, 3.0};
  if (s == "item_mean") return {ThresholdPolicy::Mode::item_mean, 3.0};
  if (s == "combined_mean") return {ThresholdPolicy::Mode::combined_mean, 3.0};
  if (s.starts_with("fixed:")) {
    auto v = detail::parse_number<double>(s.substr(6));
    if (!v) throw ConfigError("bad fixed threshold '" + std::string(s) + "'");
    return ThresholdPolicy::fixed(*v);
  }
  throw ConfigError("unknown satisfaction threshold '" + std::string(s) + "'");
}

inline std::string to_string(const ThresholdPolicy& p) {
  switch (p.mode) {
    case ThresholdPolicy::Mode::user_mean: return "user_mean";
    case ThresholdPolicy::Mode::item_mean: return "item_mean";
    case ThresholdPolicy::Mode::combined_mean: return "combined_mean";
    case ThresholdPolicy::Mode::fixed: break;
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "fixed:%g", p.fixed_value);
  return buf;
}

inline double user_mean(const SparseRatingMatrix& m, Index u) {
  const auto row = m.row(u);
  if (row.empty()) throw ValidationError("user " + std::to_string(u) + " has no ratings; mean undefined");
  double s = 0;
  for (const auto& r : row) s += r.value;
  return s / static_cast<double>(row.size());
}

inline double item_mean(const SparseRatingMatrix& m, Index i) {
  double s = 0;
  std::size_t n = 0;
  for (const auto& r : m.entries())
    if (r.item == i) {
      s += r.value;
      ++n;
    }
  if (n == 0) throw ValidationError("item " + std::to_string(i) + " has no ratings; mean undefined");
  return s / static_cast<double>(n);
}

inline PreferenceMatrix extract_interest(const SparseRatingMatrix& m) {
  std::vector<PreferenceEntry> out;
  out.reserve(m.size());
  for (const auto& r : m.entries()) out.push_back({r.user, r.item, 1});
  return PreferenceMatrix(m.num_users(), m.num_items(), Channel::interest, std::move(out));
}

// Per-user mean ratings; users without ratings get the global mean.
inline std::vector<double> user_means_or_global(const SparseRatingMatrix& m) {
  const double global = m.global_mean();
  std::vector<double> means(m.num_users(), global);
  for (Index u = 0; u < m.num_users(); ++u)
    if (!m.row(u).empty()) means[u] = user_mean(m, u);
  return means;
}

inline PreferenceMatrix extract_satisfaction(const SparseRatingMatrix& m,
                                             const ThresholdPolicy& policy = {}) {
  using Mode = ThresholdPolicy::Mode;
  if (policy.mode == Mode::fixed && !(policy.fixed_value >= 1.0 && policy.fixed_value <= 5.0))
    throw ValidationError("fixed satisfaction threshold must lie in [1, 5]");
  const double global = m.global_mean();

  // Users/items without ratings keep the global mean.
  std::vector<double> umean(m.num_users(), global), imean(m.num_items(), global);
  if (policy.mode != Mode::fixed) {
    std::vector<double> isum(m.num_items(), 0.0);
    std::vector<std::size_t> icount(m.num_items(), 0);
    for (const auto& r : m.entries()) {
      isum[r.item] += r.value;
      ++icount[r.item];
    }
    for (Index i = 0; i < m.num_items(); ++i)
      if (icount[i]) imean[i] = isum[i] / static_cast<double>(icount[i]);
    for (Index u = 0; u < m.num_users(); ++u)
      if (!m.row(u).empty()) umean[u] = user_mean(m, u);
  }

  std::vector<PreferenceEntry> out;
  out.reserve(m.size());
  for (const auto& r : m.entries()) {
    double alpha = policy.fixed_value;
    switch (policy.mode) {
      case Mode::user_mean: alpha = umean[r.user]; break;
      case Mode::item_mean: alpha = imean[r.item]; break;
      case Mode::combined_mean: alpha = 0.5 * (umean[r.user] + imean[r.item]); break;
      case Mode::fixed: break;
    }
    out.push_back({r.user, r.item, static_cast<std::uint8_t>(r.value >= alpha ? 1 : 0)});
  }
  return PreferenceMatrix(m.num_users(), m.num_items(), Channel::satisfaction, std::move(out));
}

inline void write_preferences_csv(const PreferenceMatrix& p, std::ostream& out) {
  out << "user,item,value\n";
  for (const auto& e : p.entries()) out << e.user << ',' << e.item << ',' << int(e.value) << '\n';
}

}  // namespace gs2rs
