#pragma once

// Baseline recommenders over R or R^h (user-kNN CF and weighted MF via ALS),
// top-K selection and serendipity-aware reranking with fused side information.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <spdlog/spdlog.h>

#include "gs2rs/errors.hpp"
#include "gs2rs/fusion.hpp"
#include "gs2rs/preference.hpp"

namespace gs2rs {

struct ScoredItem {
  Index item = 0;
  double score = 0;

  friend bool operator==(const ScoredItem&, const ScoredItem&) = default;
};

using RecommendationRow = std::vector<ScoredItem>;

struct RecommendationList {
  std::vector<RecommendationRow> rows;  // indexed by user
};

namespace detail {

// Cosine over cells both rows know; injected zeros count as known values.
inline double common_cosine(std::span<const EnhancedEntry> a, std::span<const EnhancedEntry> b) {
  double dot = 0, na = 0, nb = 0;
  std::size_t x = 0, y = 0;
  while (x < a.size() && y < b.size()) {
    if (a[x].item < b[y].item) {
      ++x;
    } else if (b[y].item < a[x].item) {
      ++y;
    } else {
      const double va = a[x].value, vb = b[y].value;
      dot += va * vb;
      na += va * va;
      nb += vb * vb;
      ++x;
      ++y;
    }
  }
  return na > 0 && nb > 0 ? dot / std::sqrt(na * nb) : 0.0;
}

inline bool better(const ScoredItem& a, const ScoredItem& b) {
  return a.score != b.score ? a.score > b.score : a.item < b.item;
}

// Weighted mean of neighbour values per item; NaN where no neighbour knows the item.
inline std::vector<double> neighbour_scores(const EnhancedMatrix& m, std::span<const std::pair<Index, double>> nbrs) {
  std::vector<double> num(m.num_items(), 0.0), den(m.num_items(), 0.0);
  for (const auto& [v, sim] : nbrs)
    for (const auto& e : m.row(v)) {
      num[e.item] += sim * e.value;
      den[e.item] += sim;
    }
  std::vector<double> scores(m.num_items(), kUnknown);
  for (Index i = 0; i < m.num_items(); ++i)
    if (den[i] > 0) scores[i] = num[i] / den[i];
  return scores;
}

inline std::vector<std::pair<Index, double>> select_neighbours(std::vector<std::pair<Index, double>> cands,
                                                               std::size_t k) {
  std::sort(cands.begin(), cands.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (cands.size() > k) cands.resize(k);
  return cands;
}

}  // namespace detail

inline double user_similarity(const EnhancedMatrix& m, Index u, Index v) {
  return detail::common_cosine(m.row(u), m.row(v));
}

// Score vector over items for user u from its k most similar users (similarity > 0).
// Items no neighbour knows score NaN; no neighbour at all yields an empty vector.
inline std::vector<double> user_knn_scores(const EnhancedMatrix& m, Index u, std::size_t k_neighbors) {
  if (m.row(u).empty()) throw ValidationError("user_knn_scores: user has no known cells");
  std::vector<std::pair<Index, double>> cands;
  for (Index v = 0; v < m.num_users(); ++v) {
    if (v == u) continue;
    const double s = user_similarity(m, u, v);
    if (s > 0) cands.emplace_back(v, s);
  }
  if (cands.empty()) return {};
  const auto nbrs = detail::select_neighbours(std::move(cands), k_neighbors);
  return detail::neighbour_scores(m, nbrs);
}

// Number of positive (non-injected) observations per item.
inline std::vector<double> popularity_scores(const EnhancedMatrix& m) {
  std::vector<double> pop(m.num_items(), 0.0);
  for (const auto& e : m.entries())
    if (e.value > 0) pop[e.item] += 1.0;
  return pop;
}

// All-user kNN. Similarities come from dense single-precision products; inputs
// are small integers, so the sums are exact and match user_similarity().
class UserKnn {
 public:
  UserKnn(const EnhancedMatrix& m, std::size_t k_neighbors) : m_(&m), k_(k_neighbors) {
    const auto M = static_cast<Eigen::Index>(m.num_users()), N = static_cast<Eigen::Index>(m.num_items());
    values_ = Eigen::MatrixXf::Zero(M, N);
    known_ = Eigen::MatrixXf::Zero(M, N);
    for (const auto& e : m.entries()) {
      values_(e.user, e.item) = static_cast<float>(e.value);
      known_(e.user, e.item) = 1.0f;
    }
    squares_ = values_.cwiseProduct(values_);
  }

  // Scores for users [first, last); same contract as user_knn_scores per user.
  std::vector<std::vector<double>> scores(Index first, Index last) const {
    const Eigen::Index b = last - first;
    const Eigen::MatrixXf dot = values_.middleRows(first, b) * values_.transpose();
    const Eigen::MatrixXf nu = squares_.middleRows(first, b) * known_.transpose();
    const Eigen::MatrixXf nv = known_.middleRows(first, b) * squares_.transpose();
    std::vector<std::vector<double>> out;
    for (Eigen::Index r = 0; r < b; ++r) {
      const Index u = first + static_cast<Index>(r);
      std::vector<std::pair<Index, double>> cands;
      for (Index v = 0; v < m_->num_users(); ++v) {
        if (v == u) continue;
        const double na = nu(r, v), nb = nv(r, v);
        if (!(na > 0 && nb > 0)) continue;
        const double s = static_cast<double>(dot(r, v)) / std::sqrt(na * nb);
        if (s > 0) cands.emplace_back(v, s);
      }
      if (cands.empty() || m_->row(u).empty()) {
        out.emplace_back();
        continue;
      }
      out.push_back(detail::neighbour_scores(*m_, detail::select_neighbours(std::move(cands), k_)));
    }
    return out;
  }

 private:
  const EnhancedMatrix* m_;
  std::size_t k_;
  Eigen::MatrixXf values_, known_, squares_;
};

struct LatentFactors {
  Eigen::MatrixXd users;  // M x d
  Eigen::MatrixXd items;  // N x d

  std::size_t dims() const { return static_cast<std::size_t>(users.cols()); }
  double score(Index u, Index i) const { return users.row(u).dot(items.row(i)); }
};

struct WmfConfig {
  std::size_t factors = 16;
  double reg = 0.1;
  double weight_known = 1.0;
  double weight_injected = 0.5;
  std::size_t epochs = 15;
  std::uint64_t seed = 42;

  void validate() const {
    if (factors < 1) throw ValidationError("WMF needs at least one factor");
    if (reg < 0 || weight_known < 0 || weight_injected < 0)
      throw ValidationError("WMF regularisation and confidence weights must be non-negative");
  }
};

// Ratings scale onto [0, 1] by value / 5, so injected zeros sit at the floor.
inline double wmf_scaled(std::uint8_t value) { return value / 5.0; }

inline double wmf_objective(const EnhancedMatrix& m, const LatentFactors& f, const WmfConfig& cfg) {
  double j = 0;
  for (const auto& e : m.entries()) {
    const double w = e.value == 0 ? cfg.weight_injected : cfg.weight_known;
    const double r = wmf_scaled(e.value) - f.score(e.user, e.item);
    j += w * r * r;
  }
  const double reg = std::max(cfg.reg, 1e-9);
  return j + reg * (f.users.squaredNorm() + f.items.squaredNorm());
}

// Weighted ALS over known cells. Each half-sweep solves its block exactly, so
// the objective never increases. `trace` receives the objective after init and
// after every half-sweep.
inline LatentFactors wmf_train(const EnhancedMatrix& m, const WmfConfig& cfg, std::vector<double>* trace = nullptr) {
  cfg.validate();
  const auto d = static_cast<Eigen::Index>(cfg.factors);
  const double reg = std::max(cfg.reg, 1e-9);
  LatentFactors f{Eigen::MatrixXd(m.num_users(), d), Eigen::MatrixXd(m.num_items(), d)};
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> init(0.0, 0.1);
  for (Eigen::Index r = 0; r < f.users.rows(); ++r)
    for (Eigen::Index c = 0; c < d; ++c) f.users(r, c) = init(rng);
  for (Eigen::Index r = 0; r < f.items.rows(); ++r)
    for (Eigen::Index c = 0; c < d; ++c) f.items(r, c) = init(rng);

  // Column view for the item half-sweep.
  std::vector<std::vector<std::pair<Index, std::uint8_t>>> cols(m.num_items());
  for (const auto& e : m.entries()) cols[e.item].emplace_back(e.user, e.value);

  if (trace) trace->push_back(wmf_objective(m, f, cfg));
  const Eigen::MatrixXd ridge = reg * Eigen::MatrixXd::Identity(d, d);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (Index u = 0; u < m.num_users(); ++u) {
      Eigen::MatrixXd a = ridge;
      Eigen::VectorXd b = Eigen::VectorXd::Zero(d);
      for (const auto& e : m.row(u)) {
        const double w = e.value == 0 ? cfg.weight_injected : cfg.weight_known;
        const auto q = f.items.row(e.item).transpose();
        a.noalias() += w * q * q.transpose();
        b.noalias() += w * wmf_scaled(e.value) * q;
      }
      f.users.row(u) = a.ldlt().solve(b).transpose();
    }
    if (trace) trace->push_back(wmf_objective(m, f, cfg));
    for (Index i = 0; i < m.num_items(); ++i) {
      Eigen::MatrixXd a = ridge;
      Eigen::VectorXd b = Eigen::VectorXd::Zero(d);
      for (const auto& [u, value] : cols[i]) {
        const double w = value == 0 ? cfg.weight_injected : cfg.weight_known;
        const auto p = f.users.row(u).transpose();
        a.noalias() += w * p * p.transpose();
        b.noalias() += w * wmf_scaled(value) * p;
      }
      f.items.row(i) = a.ldlt().solve(b).transpose();
    }
    if (trace) trace->push_back(wmf_objective(m, f, cfg));
  }
  if (!f.users.allFinite() || !f.items.allFinite()) throw NumericalError("WMF produced non-finite factors");
  return f;
}

// K highest-scoring candidates; excluded[i] != 0 removes item i, NaN scores are
// not scorable. Ties go to the lower item index.
inline RecommendationRow topk(std::span<const double> scores, std::span<const std::uint8_t> excluded, std::size_t k) {
  if (!excluded.empty() && excluded.size() != scores.size()) throw ValidationError("topk: mask length mismatch");
  RecommendationRow cands;
  for (Index i = 0; i < scores.size(); ++i) {
    if (!excluded.empty() && excluded[i]) continue;
    if (std::isnan(scores[i])) continue;
    cands.push_back({i, scores[i]});
  }
  const std::size_t n = std::min(k, cands.size());
  std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(n), cands.end(), detail::better);
  cands.resize(n);
  return cands;
}

struct PreferenceMix {
  double w_in = 0.5;
  double w_sa = 0.5;
};

// Shares of interest-only (known 0) and satisfied (known 1) cells in the user's
// satisfaction history; (0.5, 0.5) without history.
inline PreferenceMix preference_mix_from_history(const PreferenceMatrix& r_sa, Index u) {
  double ones = 0, zeros = 0;
  for (const auto& e : r_sa.row(u)) (e.value ? ones : zeros) += 1.0;
  if (ones + zeros == 0) return {};
  return {zeros / (ones + zeros), ones / (ones + zeros)};
}

struct RerankConfig {
  double serendipity_boost = 0.0;
  PreferenceMix mix{0.0, 0.0};
};

// Reorders `row` by base + boost * s + w_in * in + w_sa * sa (unknown fused values
// contribute 0). The item set is unchanged; scores become the adjusted scores.
inline RecommendationRow serendipity_rerank(const RecommendationRow& row, Index u, const SerendipityMatrix& s,
                                            const FusedPreferenceMatrix& fused_in,
                                            const FusedPreferenceMatrix& fused_sa, const RerankConfig& cfg) {
  if (cfg.serendipity_boost < 0 || cfg.mix.w_in < 0 || cfg.mix.w_sa < 0)
    throw ValidationError("rerank weights must be non-negative");
  RecommendationRow out;
  out.reserve(row.size());
  for (const auto& it : row) {
    const double in = fused_in(u, it.item), sa = fused_sa(u, it.item);
    double adjusted = it.score + cfg.serendipity_boost * (s(u, it.item) ? 1.0 : 0.0);
    adjusted += cfg.mix.w_in * (is_known(in) ? in : 0.0) + cfg.mix.w_sa * (is_known(sa) ? sa : 0.0);
    out.push_back({it.item, adjusted});
  }
  std::stable_sort(out.begin(), out.end(), detail::better);
  return out;
}

enum class ModelKind { cf, wmf };

inline ModelKind parse_model_kind(std::string_view s) {
  if (s == "cf") return ModelKind::cf;
  if (s == "wmf") return ModelKind::wmf;
  throw ConfigError("unknown recommender model '" + std::string(s) + "'");
}

inline std::string_view to_string(ModelKind m) { return m == ModelKind::cf ? "cf" : "wmf"; }

struct SideInformation {
  const FusedPreferenceMatrix* fused_interest = nullptr;
  const FusedPreferenceMatrix* fused_satisfaction = nullptr;
  const SerendipityMatrix* serendipity = nullptr;
  const PreferenceMatrix* satisfaction_history = nullptr;  // R^sa, for the per-user mix
};

struct RecommendConfig {
  ModelKind model = ModelKind::wmf;
  std::size_t k = 10;
  std::size_t k_neighbors = 50;
  WmfConfig wmf;
  double serendipity_boost = 0.1;
  bool use_preference_mix = true;
  bool exclude_injected = true;  // injected zeros mark impossible items
};

// score -> topk -> (with side information) serendipity_rerank, for every user.
inline RecommendationList recommend(const EnhancedMatrix& m, const std::optional<SideInformation>& side,
                                    const RecommendConfig& cfg) {
  if (side && (!side->fused_interest || !side->fused_satisfaction || !side->serendipity))
    throw ValidationError("recommend: incomplete side information");
  RecommendationList out;
  out.rows.resize(m.num_users());
  const auto popularity = popularity_scores(m);

  std::vector<std::uint8_t> excluded(m.num_items());
  auto finish_user = [&](Index u, const std::vector<double>& scores) {
    std::fill(excluded.begin(), excluded.end(), 0);
    for (const auto& e : m.row(u))
      if (e.value > 0 || cfg.exclude_injected) excluded[e.item] = 1;
    auto row = topk(scores, excluded, cfg.k);
    if (row.size() < cfg.k) spdlog::debug("user {}: only {} scorable items", u, row.size());
    if (side && !row.empty()) {
      RerankConfig rc{cfg.serendipity_boost, {0.0, 0.0}};
      if (cfg.use_preference_mix) {
        rc.mix = side->satisfaction_history ? preference_mix_from_history(*side->satisfaction_history, u)
                                            : PreferenceMix{};
      }
      row = serendipity_rerank(row, u, *side->serendipity, *side->fused_interest, *side->fused_satisfaction, rc);
    }
    out.rows[u] = std::move(row);
  };

  if (cfg.model == ModelKind::wmf) {
    const auto f = wmf_train(m, cfg.wmf);
    const Eigen::MatrixXd all = f.users * f.items.transpose();
    std::vector<double> scores(m.num_items());
    for (Index u = 0; u < m.num_users(); ++u) {
      for (Index i = 0; i < m.num_items(); ++i) scores[i] = all(u, i);
      finish_user(u, scores);
    }
  } else {
    const UserKnn knn(m, cfg.k_neighbors);
    constexpr Index kBlock = 256;
    for (Index first = 0; first < m.num_users(); first += kBlock) {
      const Index last = std::min<Index>(static_cast<Index>(m.num_users()), first + kBlock);
      const auto block = knn.scores(first, last);
      for (Index u = first; u < last; ++u) {
        const auto& s = block[u - first];
        finish_user(u, s.empty() ? popularity : s);
      }
    }
  }
  return out;
}

// "user,rank,item,score,serendipity_flag" with external ids; rank is 1-based.
inline void write_recommendations_csv(const RecommendationList& recs, const IdMap& users, const IdMap& items,
                                      const SerendipityMatrix* s, std::ostream& out) {
  out << "user,rank,item,score,serendipity_flag\n";
  char buf[48];
  for (Index u = 0; u < recs.rows.size(); ++u)
    for (std::size_t r = 0; r < recs.rows[u].size(); ++r) {
      const auto& it = recs.rows[u][r];
      std::snprintf(buf, sizeof buf, "%.9g", it.score);
      out << users.id(u) << ',' << r + 1 << ',' << items.id(it.item) << ',' << buf << ','
          << ((s && (*s)(u, it.item)) ? 1 : 0) << '\n';
    }
}

inline RecommendationList read_recommendations_csv(std::istream& in, const IdMap& users, const IdMap& items) {
  RecommendationList recs;
  recs.rows.resize(users.size());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto text = detail::trim(line);
    if (line_no == 1) {
      if (text != "user,rank,item,score,serendipity_flag") throw ParseError("bad recommendations header", 1);
      continue;
    }
    if (text.empty()) continue;
    const auto f = detail::split(text, ",");
    if (f.size() != 5) throw ParseError("expected 5 fields", line_no);
    auto u = users.find(std::string(f[0]));
    auto i = items.find(std::string(f[2]));
    auto score = detail::parse_number<double>(f[3]);
    if (!u || !i || !score) throw ParseError("unknown id or bad score", line_no);
    recs.rows[*u].push_back({*i, *score});
  }
  return recs;
}

}  // namespace gs2rs
