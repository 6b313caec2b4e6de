#pragma once

// Self-neighbour fusion, serendipity marking and zero injection.

#include <cmath>
#include <cstdint>
#include <istream>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "gs2rs/cgan.hpp"
#include "gs2rs/errors.hpp"
#include "gs2rs/preference.hpp"
#include "gs2rs/ratings.hpp"

namespace gs2rs {

enum class FusionMethod { mean, similarity_weighted };

inline FusionMethod parse_fusion_method(std::string_view s) {
  if (s == "mean") return FusionMethod::mean;
  if (s == "similarity_weighted") return FusionMethod::similarity_weighted;
  throw ConfigError("unknown fusion method '" + std::string(s) + "'");
}

inline std::string_view to_string(FusionMethod m) {
  return m == FusionMethod::mean ? "mean" : "similarity_weighted";
}

struct FusionConfig {
  std::size_t t = 2;
  FusionMethod method = FusionMethod::mean;
  double theta_in = 0.5;
  double theta_sa = 0.5;
  double binarize_threshold = 0.5;

  void validate() const {
    if (t < 1) throw ValidationError("self-neighbour count t must be >= 1");
    // 0 and 1 are accepted as the limiting cases of the threshold sweep.
    if (!(theta_in >= 0.0 && theta_in <= 1.0) || !(theta_sa >= 0.0 && theta_sa <= 1.0))
      throw ValidationError("thresholds theta_in / theta_sa must lie in [0, 1]");
    if (!(binarize_threshold > 0.0 && binarize_threshold < 1.0))
      throw ValidationError("binarize_threshold must lie in (0, 1)");
  }
};

// Dense M x N matrix of fused preference values in [0, 1]; NaN marks unknown.
class FusedPreferenceMatrix {
 public:
  FusedPreferenceMatrix() = default;
  FusedPreferenceMatrix(std::size_t users, std::size_t items, Channel channel)
      : users_(users), items_(items), channel_(channel),
        values_(users * items, std::numeric_limits<float>::quiet_NaN()) {}

  std::size_t num_users() const noexcept { return users_; }
  std::size_t num_items() const noexcept { return items_; }
  Channel channel() const noexcept { return channel_; }

  double operator()(Index u, Index i) const { return values_[static_cast<std::size_t>(u) * items_ + i]; }
  bool known(Index u, Index i) const { return is_known((*this)(u, i)); }

  void set(Index u, Index i, double v) {
    if (is_known(v) && !(v >= 0.0 && v <= 1.0)) throw ValidationError("fused values must lie in [0, 1]");
    values_[static_cast<std::size_t>(u) * items_ + i] = static_cast<float>(v);
  }
  void set_row(Index u, const Vector& row) {
    for (Index i = 0; i < items_; ++i) set(u, i, row(i));
  }
  std::span<const float> row(Index u) const {
    return std::span<const float>(values_).subspan(static_cast<std::size_t>(u) * items_, items_);
  }
  std::size_t known_count() const {
    return static_cast<std::size_t>(std::count_if(values_.begin(), values_.end(), [](float v) { return !std::isnan(v); }));
  }

  friend bool operator==(const FusedPreferenceMatrix& a, const FusedPreferenceMatrix& b) {
    if (a.users_ != b.users_ || a.items_ != b.items_ || a.channel_ != b.channel_) return false;
    for (std::size_t k = 0; k < a.values_.size(); ++k) {
      const bool na = std::isnan(a.values_[k]), nb = std::isnan(b.values_[k]);
      if (na != nb || (!na && a.values_[k] != b.values_[k])) return false;
    }
    return true;
  }

 private:
  std::size_t users_ = 0;
  std::size_t items_ = 0;
  Channel channel_ = Channel::interest;
  std::vector<float> values_;
};

class SerendipityMatrix {
 public:
  SerendipityMatrix() = default;
  SerendipityMatrix(std::size_t users, std::size_t items) : users_(users), items_(items), flags_(users * items, 0) {}

  std::size_t num_users() const noexcept { return users_; }
  std::size_t num_items() const noexcept { return items_; }
  bool operator()(Index u, Index i) const { return flags_[static_cast<std::size_t>(u) * items_ + i] != 0; }
  void set(Index u, Index i, bool s) { flags_[static_cast<std::size_t>(u) * items_ + i] = s ? 1 : 0; }
  std::size_t count() const { return static_cast<std::size_t>(std::count(flags_.begin(), flags_.end(), 1)); }

  friend bool operator==(const SerendipityMatrix&, const SerendipityMatrix&) = default;

 private:
  std::size_t users_ = 0;
  std::size_t items_ = 0;
  std::vector<std::uint8_t> flags_;
};

struct EnhancedEntry {
  Index user = 0;
  Index item = 0;
  std::uint8_t value = 0;  // 0 = injected, 1..5 = observed rating

  friend bool operator==(const EnhancedEntry&, const EnhancedEntry&) = default;
};

// R^h: observed ratings plus injected zeros; absent cells stay unknown.
class EnhancedMatrix {
 public:
  EnhancedMatrix() : user_ids_(make_sequential_ids(0)), item_ids_(make_sequential_ids(0)), offsets_(1, 0) {}

  EnhancedMatrix(std::size_t users, std::size_t items, std::vector<EnhancedEntry> entries, IdMapPtr user_ids = nullptr,
                 IdMapPtr item_ids = nullptr)
      : users_(users), items_(items), entries_(std::move(entries)),
        user_ids_(user_ids ? std::move(user_ids) : make_sequential_ids(users)),
        item_ids_(item_ids ? std::move(item_ids) : make_sequential_ids(items)) {
    std::sort(entries_.begin(), entries_.end(), [](const auto& a, const auto& b) {
      return a.user != b.user ? a.user < b.user : a.item < b.item;
    });
    offsets_.assign(users + 1, 0);
    for (std::size_t k = 0; k < entries_.size(); ++k) {
      const auto& e = entries_[k];
      if (e.user >= users || e.item >= items) throw ValidationError("enhanced entry out of range");
      if (e.value > 5) throw ValidationError("enhanced value outside {0..5}");
      if (k > 0 && entries_[k - 1].user == e.user && entries_[k - 1].item == e.item)
        throw ValidationError("duplicate enhanced entry");
      injected_ += e.value == 0;
      ++offsets_[e.user + 1];
    }
    std::partial_sum(offsets_.begin(), offsets_.end(), offsets_.begin());
  }

  static EnhancedMatrix from_ratings(const SparseRatingMatrix& r) {
    std::vector<EnhancedEntry> e;
    e.reserve(r.size());
    for (const auto& x : r.entries()) e.push_back({x.user, x.item, x.value});
    return EnhancedMatrix(r.num_users(), r.num_items(), std::move(e), r.user_ids(), r.item_ids());
  }

  std::size_t num_users() const noexcept { return users_; }
  std::size_t num_items() const noexcept { return items_; }
  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t injected_count() const noexcept { return injected_; }
  std::size_t unknown_count() const noexcept { return users_ * items_ - entries_.size(); }
  std::span<const EnhancedEntry> entries() const noexcept { return entries_; }
  std::span<const EnhancedEntry> row(Index u) const {
    return std::span<const EnhancedEntry>(entries_).subspan(offsets_.at(u), offsets_.at(u + 1) - offsets_.at(u));
  }
  std::optional<std::uint8_t> find(Index u, Index i) const {
    const auto r = row(u);
    auto it = std::lower_bound(r.begin(), r.end(), i, [](const auto& x, Index item) { return x.item < item; });
    if (it == r.end() || it->item != i) return std::nullopt;
    return it->value;
  }
  const IdMapPtr& user_ids() const noexcept { return user_ids_; }
  const IdMapPtr& item_ids() const noexcept { return item_ids_; }

  friend bool operator==(const EnhancedMatrix& a, const EnhancedMatrix& b) {
    return a.users_ == b.users_ && a.items_ == b.items_ && a.entries_ == b.entries_;
  }

 private:
  std::size_t users_ = 0;
  std::size_t items_ = 0;
  std::vector<EnhancedEntry> entries_;
  IdMapPtr user_ids_;
  IdMapPtr item_ids_;
  std::vector<std::size_t> offsets_;
  std::size_t injected_ = 0;
};

// Channel row of user u as a dense vector: 1/0 where known, NaN elsewhere.
inline Vector preference_row(const PreferenceMatrix& p, Index u) {
  Vector v = Vector::Constant(static_cast<Eigen::Index>(p.num_items()), kUnknown);
  for (const auto& e : p.row(u)) v(e.item) = e.value;
  return v;
}

namespace detail {

inline double cosine_unknown_as_zero(const Vector& a, const Vector& b) {
  double dot = 0, na = 0, nb = 0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double x = is_known(a(i)) ? a(i) : 0.0;
    const double y = is_known(b(i)) ? b(i) : 0.0;
    dot += x * y;
    na += x * x;
    nb += y * y;
  }
  return na > 0 && nb > 0 ? dot / std::sqrt(na * nb) : 0.0;
}

}  // namespace detail

// Per-cell fusion of the original row and its t virtual neighbours. A cell is
// unknown iff no source knows it.
inline Vector fuse_self_neighbors(const Vector& original, std::span<const Vector> neighbors, const FusionConfig& cfg) {
  if (neighbors.size() != cfg.t)
    throw ValidationError("expected " + std::to_string(cfg.t) + " neighbours, got " + std::to_string(neighbors.size()));
  for (const auto& n : neighbors)
    if (n.size() != original.size()) throw ValidationError("fuse_self_neighbors: length mismatch");

  std::vector<double> weights(neighbors.size(), 1.0);
  if (cfg.method == FusionMethod::similarity_weighted)
    for (std::size_t k = 0; k < neighbors.size(); ++k)
      weights[k] = detail::cosine_unknown_as_zero(neighbors[k], original);

  Vector out(original.size());
  for (Eigen::Index i = 0; i < original.size(); ++i) {
    double wsum = 0, vsum = 0, plain = 0;
    std::size_t count = 0;
    if (is_known(original(i))) {
      wsum += 1.0;
      vsum += original(i);
      plain += original(i);
      ++count;
    }
    for (std::size_t k = 0; k < neighbors.size(); ++k) {
      const double v = neighbors[k](i);
      if (!is_known(v)) continue;
      wsum += weights[k];
      vsum += weights[k] * v;
      plain += v;
      ++count;
    }
    if (count == 0)
      out(i) = kUnknown;
    else if (wsum > 0)
      out(i) = vsum / wsum;
    else
      out(i) = plain / static_cast<double>(count);
  }
  return out;
}

inline SerendipityMatrix mark_serendipity(const FusedPreferenceMatrix& r_in, const FusedPreferenceMatrix& r_sa,
                                          const FusionConfig& cfg) {
  if (r_in.num_users() != r_sa.num_users() || r_in.num_items() != r_sa.num_items())
    throw ValidationError("mark_serendipity: shape mismatch");
  SerendipityMatrix s(r_in.num_users(), r_in.num_items());
  for (Index u = 0; u < r_in.num_users(); ++u)
    for (Index i = 0; i < r_in.num_items(); ++i) {
      const double sa = r_sa(u, i), in = r_in(u, i);
      s.set(u, i, is_known(sa) && sa >= cfg.theta_sa && (!is_known(in) || in < cfg.theta_in));
    }
  return s;
}

// Whether an unobserved cell receives an injected zero.
inline bool should_inject(double in, double sa, double theta_in, double theta_sa) {
  const bool in_known = is_known(in), sa_known = is_known(sa);
  if (in_known && sa_known) return in < theta_in && sa < theta_sa;
  if (in_known) return in < theta_in;
  if (sa_known) return sa < theta_sa;
  return false;
}

inline EnhancedMatrix zero_inject(const SparseRatingMatrix& r, const FusedPreferenceMatrix& r_in,
                                  const FusedPreferenceMatrix& r_sa, const FusionConfig& cfg) {
  if (r_in.num_users() != r.num_users() || r_in.num_items() != r.num_items() ||
      r_sa.num_users() != r.num_users() || r_sa.num_items() != r.num_items())
    throw ValidationError("zero_inject: shape mismatch");
  std::vector<EnhancedEntry> out;
  out.reserve(r.size());
  for (Index u = 0; u < r.num_users(); ++u) {
    const auto row = r.row(u);
    std::size_t k = 0;
    for (Index i = 0; i < r.num_items(); ++i) {
      if (k < row.size() && row[k].item == i) {
        out.push_back({u, i, row[k].value});
        ++k;
      } else if (should_inject(r_in(u, i), r_sa(u, i), cfg.theta_in, cfg.theta_sa)) {
        out.push_back({u, i, 0});
      }
    }
  }
  return EnhancedMatrix(r.num_users(), r.num_items(), std::move(out), r.user_ids(), r.item_ids());
}

struct FusedPair {
  FusedPreferenceMatrix interest;
  FusedPreferenceMatrix satisfaction;
};

struct EnhancedBundle {
  EnhancedMatrix enhanced;
  FusedPreferenceMatrix fused_interest;
  FusedPreferenceMatrix fused_satisfaction;
  SerendipityMatrix serendipity;
};

// Generates t self neighbours per user for one channel and fuses them with the
// user's own row. Noise for (user, neighbour k) is seeded by derive_seed(seed, channel, u, k).
inline FusedPreferenceMatrix fuse_channel(const PreferenceMatrix& p, const CganChannel& ch, const FusionConfig& cfg,
                                          std::uint64_t seed) {
  cfg.validate();
  if (ch.num_items() != p.num_items()) throw ValidationError("channel and preference matrix disagree on N");
  FusedPreferenceMatrix fused(p.num_users(), p.num_items(), p.channel());
  constexpr std::size_t kUsersPerChunk = 128;
  const auto n = static_cast<Eigen::Index>(p.num_items());
  for (std::size_t first = 0; first < p.num_users(); first += kUsersPerChunk) {
    const std::size_t last = std::min(p.num_users(), first + kUsersPerChunk);
    const auto cols = static_cast<Eigen::Index>((last - first) * cfg.t);
    Matrix conditions(n, cols);
    std::vector<std::uint64_t> seeds;
    seeds.reserve(static_cast<std::size_t>(cols));
    for (std::size_t u = first; u < last; ++u) {
      const Vector c = condition_vector(p, static_cast<Index>(u));
      for (std::size_t k = 0; k < cfg.t; ++k) {
        conditions.col(static_cast<Eigen::Index>(seeds.size())) = c;
        seeds.push_back(derive_seed(seed, static_cast<int>(p.channel()), u, k));
      }
    }
    const auto [r_bar, f_bar] = generate_batch(ch, conditions, seeds);
    std::vector<Vector> neighbors(cfg.t);
    for (std::size_t u = first; u < last; ++u) {
      for (std::size_t k = 0; k < cfg.t; ++k) {
        const auto col = static_cast<Eigen::Index>((u - first) * cfg.t + k);
        neighbors[k] = neighbor_preference({r_bar.col(col), f_bar.col(col)}, cfg.binarize_threshold);
      }
      fused.set_row(static_cast<Index>(u),
                    fuse_self_neighbors(preference_row(p, static_cast<Index>(u)), neighbors, cfg));
    }
  }
  return fused;
}

inline EnhancedBundle apply_thresholds(const SparseRatingMatrix& r, const FusedPreferenceMatrix& fused_in,
                                       const FusedPreferenceMatrix& fused_sa, const FusionConfig& cfg) {
  cfg.validate();
  return {zero_inject(r, fused_in, fused_sa, cfg), fused_in, fused_sa, mark_serendipity(fused_in, fused_sa, cfg)};
}

inline EnhancedBundle build_enhanced_bundle(const SparseRatingMatrix& r, const PreferenceMatrix& r_in,
                                            const PreferenceMatrix& r_sa, const CganChannel& ch_in,
                                            const CganChannel& ch_sa, const FusionConfig& cfg, std::uint64_t seed) {
  if (r_in.channel() != Channel::interest || r_sa.channel() != Channel::satisfaction)
    throw ValidationError("build_enhanced_bundle: channel order is (interest, satisfaction)");
  return apply_thresholds(r, fuse_channel(r_in, ch_in, cfg, seed), fuse_channel(r_sa, ch_sa, cfg, seed), cfg);
}

// Sparse CSV exports ("user,item,value"); indices are internal.

inline void write_fused_csv(const FusedPreferenceMatrix& m, std::ostream& out) {
  out << "user,item,value\n";
  char buf[64];
  for (Index u = 0; u < m.num_users(); ++u) {
    const auto row = m.row(u);
    for (Index i = 0; i < m.num_items(); ++i) {
      if (std::isnan(row[i])) continue;
      std::snprintf(buf, sizeof buf, "%u,%u,%.9g\n", u, i, static_cast<double>(row[i]));
      out << buf;
    }
  }
}

inline void write_enhanced_csv(const EnhancedMatrix& m, std::ostream& out) {
  out << "user,item,value\n";
  for (const auto& e : m.entries()) out << e.user << ',' << e.item << ',' << int(e.value) << '\n';
}

inline void write_serendipity_csv(const SerendipityMatrix& s, std::ostream& out) {
  out << "user,item,value\n";
  for (Index u = 0; u < s.num_users(); ++u)
    for (Index i = 0; i < s.num_items(); ++i)
      if (s(u, i)) out << u << ',' << i << ",1\n";
}

namespace detail {

template <typename Fn>
void read_triples(std::istream& in, Fn&& fn) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1) {
      if (trim(line) != "user,item,value") throw ParseError("expected header user,item,value", 1);
      continue;
    }
    if (trim(line).empty()) continue;
    const auto f = split(trim(line), ",");
    if (f.size() != 3) throw ParseError("expected user,item,value", line_no);
    auto u = parse_number<Index>(f[0]);
    auto i = parse_number<Index>(f[1]);
    auto v = parse_number<double>(f[2]);
    if (!u || !i || !v) throw ParseError("unparseable triple", line_no);
    fn(*u, *i, *v, line_no);
  }
}

}  // namespace detail

inline FusedPreferenceMatrix read_fused_csv(std::istream& in, std::size_t users, std::size_t items, Channel channel) {
  FusedPreferenceMatrix m(users, items, channel);
  detail::read_triples(in, [&](Index u, Index i, double v, std::size_t line) {
    if (u >= users || i >= items) throw ParseError("index out of range", line);
    m.set(u, i, v);
  });
  return m;
}

inline EnhancedMatrix read_enhanced_csv(std::istream& in, std::size_t users, std::size_t items,
                                        IdMapPtr user_ids = nullptr, IdMapPtr item_ids = nullptr) {
  std::vector<EnhancedEntry> entries;
  detail::read_triples(in, [&](Index u, Index i, double v, std::size_t line) {
    if (v != std::floor(v) || v < 0 || v > 5) throw ParseError("enhanced value outside {0..5}", line);
    entries.push_back({u, i, static_cast<std::uint8_t>(v)});
  });
  return EnhancedMatrix(users, items, std::move(entries), std::move(user_ids), std::move(item_ids));
}

inline SerendipityMatrix read_serendipity_csv(std::istream& in, std::size_t users, std::size_t items) {
  SerendipityMatrix s(users, items);
  detail::read_triples(in, [&](Index u, Index i, double v, std::size_t line) {
    if (u >= users || i >= items) throw ParseError("index out of range", line);
    s.set(u, i, v != 0.0);
  });
  return s;
}

}  // namespace gs2rs
