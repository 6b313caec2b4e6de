#pragma once

// Conditional GAN per preference channel: a rating generator / discriminator
// pair and an indicator generator / discriminator pair, both conditioned on
// the user's known-1 row. The rating path's fake output is masked by the real
// indicator vector before the discriminator sees it.

#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "gs2rs/errors.hpp"
#include "gs2rs/nn.hpp"
#include "gs2rs/preference.hpp"

namespace gs2rs {

using nn::Matrix;
using nn::Vector;

// Unknown cells of a partially known dense row are encoded as NaN.
inline constexpr double kUnknown = std::numeric_limits<double>::quiet_NaN();
inline bool is_known(double v) noexcept { return !std::isnan(v); }

struct TrainingRow {
  Vector rating;     // known values, unknown -> 0
  Vector indicator;  // 1 where the channel value is known
  Vector condition;  // 1 where the channel value is a known 1
};

inline std::vector<TrainingRow> build_training_rows(const PreferenceMatrix& p) {
  const auto n = static_cast<Eigen::Index>(p.num_items());
  std::vector<TrainingRow> rows;
  rows.reserve(p.num_users());
  for (Index u = 0; u < p.num_users(); ++u) {
    TrainingRow row{Vector::Zero(n), Vector::Zero(n), Vector::Zero(n)};
    for (const auto& e : p.row(u)) {
      row.rating(e.item) = e.value;
      row.indicator(e.item) = 1.0;
      row.condition(e.item) = e.value == 1 ? 1.0 : 0.0;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

// Condition vector of user u: binary known-1 mask of the channel row.
inline Vector condition_vector(const PreferenceMatrix& p, Index u) {
  Vector c = Vector::Zero(static_cast<Eigen::Index>(p.num_items()));
  for (const auto& e : p.row(u))
    if (e.value == 1) c(e.item) = 1.0;
  return c;
}

inline Vector mask(const Vector& v, const Vector& f) {
  if (v.size() != f.size()) throw ValidationError("mask: length mismatch");
  return v.cwiseProduct(f);
}

struct CganArchitecture {
  std::size_t noise_dim = 64;
  std::vector<std::size_t> hidden = {128, 128};
  nn::Activation hidden_activation = nn::Activation::relu;
};

struct CganChannel {
  Channel channel = Channel::interest;
  nn::Mlp g_rating;
  nn::Mlp g_indicator;
  nn::Mlp d_rating;     // emits a logit; probability = sigmoid(logit)
  nn::Mlp d_indicator;  // emits a logit
  std::size_t noise_dim = 0;
  std::size_t condition_dim = 0;

  std::size_t num_items() const { return g_rating.output_dim(); }

  friend bool operator==(const CganChannel&, const CganChannel&) = default;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::vector<std::size_t> layer_sizes(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out) {
  std::vector<std::size_t> sizes{in};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(out);
  return sizes;
}

inline Matrix stack(const Matrix& top, const Matrix& bottom) {
  Matrix out(top.rows() + bottom.rows(), top.cols());
  out << top, bottom;
  return out;
}

inline Matrix sigmoid(const Matrix& logits) { return (1.0 / (1.0 + (-logits.array()).exp())).matrix(); }

}  // namespace detail

// Derives independent seeds from a base seed and a tuple of small integers.
template <typename... Parts>
std::uint64_t derive_seed(std::uint64_t base, Parts... parts) {
  std::uint64_t h = detail::splitmix64(base);
  ((h = detail::splitmix64(h ^ static_cast<std::uint64_t>(parts))), ...);
  return h;
}

inline CganChannel init_channel(Channel channel, std::size_t num_items, const CganArchitecture& arch,
                                std::uint64_t seed) {
  if (num_items == 0) throw ValidationError("CGAN channel needs at least one item");
  if (arch.noise_dim == 0) throw ValidationError("noise_dim must be positive");
  CganChannel ch;
  ch.channel = channel;
  ch.noise_dim = arch.noise_dim;
  ch.condition_dim = num_items;
  const auto g_sizes = detail::layer_sizes(arch.noise_dim + num_items, arch.hidden, num_items);
  const auto d_sizes = detail::layer_sizes(num_items + num_items, arch.hidden, 1);
  ch.g_rating = nn::Mlp(g_sizes, arch.hidden_activation, nn::Activation::sigmoid, derive_seed(seed, 1));
  ch.g_indicator = nn::Mlp(g_sizes, arch.hidden_activation, nn::Activation::sigmoid, derive_seed(seed, 2));
  ch.d_rating = nn::Mlp(d_sizes, arch.hidden_activation, nn::Activation::identity, derive_seed(seed, 3));
  ch.d_indicator = nn::Mlp(d_sizes, arch.hidden_activation, nn::Activation::identity, derive_seed(seed, 4));
  return ch;
}

struct LossRecord {
  std::size_t epoch = 0;
  double d_rating = 0, g_rating = 0, d_indicator = 0, g_indicator = 0;
};

struct TrainedChannel {
  CganChannel channel;
  std::vector<LossRecord> history;
};

class TrainingDiverged : public NumericalError {
 public:
  TrainingDiverged(const std::string& what, CganChannel last_good)
      : NumericalError(what), last_good_(std::move(last_good)) {}
  const CganChannel& last_good() const noexcept { return last_good_; }

 private:
  CganChannel last_good_;
};

namespace detail {

struct AdversarialLosses {
  double discriminator = 0;
  double generator = 0;
};

// One discriminator step then one generator step for a (G, D) pair.
// `fake_mask` (nullable) multiplies the generator output before D sees it.
inline AdversarialLosses adversarial_step(nn::Mlp& gen, nn::Mlp& disc, const Matrix& gen_input, const Matrix& real,
                                          const Matrix& cond, const Matrix* fake_mask, double lr) {
  const double batch = static_cast<double>(real.cols());
  AdversarialLosses losses;

  // Discriminator: minimise -ln D(real|c) - ln(1 - D(fake|c)).
  {
    Matrix fake = nn::forward(gen, gen_input);
    if (fake_mask) fake = fake.cwiseProduct(*fake_mask);
    const auto real_pass = nn::forward_cached(disc, stack(real, cond));
    const auto fake_pass = nn::forward_cached(disc, stack(fake, cond));
    const Matrix p_real = sigmoid(real_pass.output());
    const Matrix p_fake = sigmoid(fake_pass.output());
    for (Eigen::Index j = 0; j < p_real.cols(); ++j) {
      const auto t = nn::bce_terms(p_real(0, j), 1.0 - p_fake(0, j));
      losses.discriminator -= (t.real_term + t.fake_term) / batch;
    }
    // d/dlogit of -ln sigmoid(l) is p - 1; of -ln(1 - sigmoid(l)) is p.
    const Matrix up_real = (p_real.array() - 1.0).matrix() / batch;
    const Matrix up_fake = p_fake / batch;
    auto grads = nn::backward(disc, real_pass, up_real);
    grads += nn::backward(disc, fake_pass, up_fake);
    nn::sgd_step(disc, grads, lr);
  }

  // Generator (non-saturating): minimise -ln D(G(z|c)|c).
  {
    const auto gen_pass = nn::forward_cached(gen, gen_input);
    Matrix fake = gen_pass.output();
    if (fake_mask) fake = fake.cwiseProduct(*fake_mask);
    const auto fake_pass = nn::forward_cached(disc, stack(fake, cond));
    const Matrix p_fake = sigmoid(fake_pass.output());
    for (Eigen::Index j = 0; j < p_fake.cols(); ++j)
      losses.generator -= nn::bce_terms(p_fake(0, j), 0.5).real_term / batch;
    const Matrix up = (p_fake.array() - 1.0).matrix() / batch;
    const auto d_grads = nn::backward(disc, fake_pass, up);
    Matrix up_gen = d_grads.input.topRows(fake.rows());
    if (fake_mask) up_gen = up_gen.cwiseProduct(*fake_mask);
    nn::sgd_step(gen, nn::backward(gen, gen_pass, up_gen), lr);
  }
  return losses;
}

inline Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Matrix z(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) z(r, c) = dist(rng);
  return z;
}

}  // namespace detail

// Alternating minibatch training of both adversarial pairs of one channel.
inline TrainedChannel train_channel(std::span<const TrainingRow> rows, const nn::TrainConfig& cfg,
                                    const CganArchitecture& arch, Channel channel) {
  cfg.validate();
  if (rows.empty() || rows.size() < cfg.batch_size)
    throw ValidationError("train_channel needs at least batch_size training rows");
  const auto n = rows.front().rating.size();
  for (const auto& r : rows)
    if (r.rating.size() != n || r.indicator.size() != n || r.condition.size() != n)
      throw ValidationError("train_channel: inconsistent row lengths");

  TrainedChannel out{init_channel(channel, static_cast<std::size_t>(n), arch, cfg.seed), {}};
  CganChannel& ch = out.channel;
  std::mt19937_64 rng(derive_seed(cfg.seed, 99));
  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), 0);
  const auto noise = static_cast<Eigen::Index>(ch.noise_dim);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    CganChannel last_good = ch;
    std::shuffle(order.begin(), order.end(), rng);
    LossRecord rec{epoch, 0, 0, 0, 0};
    std::size_t batches = 0;
    // Trailing rows that do not fill a minibatch wait for the next shuffle.
    try {
      for (std::size_t start = 0; start + cfg.batch_size <= order.size(); start += cfg.batch_size) {
        const auto b = static_cast<Eigen::Index>(cfg.batch_size);
        Matrix real_r(n, b), real_f(n, b), cond(n, b);
        for (Eigen::Index j = 0; j < b; ++j) {
          const auto& row = rows[order[start + static_cast<std::size_t>(j)]];
          real_r.col(j) = row.rating;
          real_f.col(j) = row.indicator;
          cond.col(j) = row.condition;
        }
        const Matrix gen_input = detail::stack(detail::normal_matrix(noise, b, rng), cond);
        const auto lr_pair = detail::adversarial_step(ch.g_rating, ch.d_rating, gen_input, real_r, cond, &real_f,
                                                      cfg.learning_rate);
        const auto li_pair = detail::adversarial_step(ch.g_indicator, ch.d_indicator, gen_input, real_f, cond,
                                                      nullptr, cfg.learning_rate);
        rec.d_rating += lr_pair.discriminator;
        rec.g_rating += lr_pair.generator;
        rec.d_indicator += li_pair.discriminator;
        rec.g_indicator += li_pair.generator;
        ++batches;
      }
    } catch (const NumericalError& e) {
      throw TrainingDiverged("CGAN training diverged at epoch " + std::to_string(epoch) + ": " + e.what(),
                             std::move(last_good));
    }
    const double nb = static_cast<double>(std::max<std::size_t>(batches, 1));
    rec.d_rating /= nb;
    rec.g_rating /= nb;
    rec.d_indicator /= nb;
    rec.g_indicator /= nb;
    if (!std::isfinite(rec.d_rating) || !std::isfinite(rec.g_rating) || !std::isfinite(rec.d_indicator) ||
        !std::isfinite(rec.g_indicator))
      throw TrainingDiverged("CGAN training diverged at epoch " + std::to_string(epoch), std::move(last_good));
    spdlog::debug("cgan[{}] epoch {}: D_r {:.4f} G_r {:.4f} D_f {:.4f} G_f {:.4f}", to_string(channel), epoch,
                  rec.d_rating, rec.g_rating, rec.d_indicator, rec.g_indicator);
    out.history.push_back(rec);
  }
  return out;
}

struct SyntheticPreference {
  Vector r_bar;  // G_r(z|c)
  Vector f_bar;  // G_f(z|c)
};

inline Vector sample_noise(std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return detail::normal_matrix(static_cast<Eigen::Index>(dim), 1, rng).col(0);
}

inline SyntheticPreference generate(const CganChannel& ch, const Vector& condition, std::uint64_t seed) {
  if (static_cast<std::size_t>(condition.size()) != ch.condition_dim)
    throw ValidationError("generate: condition length mismatch");
  Vector input(static_cast<Eigen::Index>(ch.noise_dim + ch.condition_dim));
  input << sample_noise(ch.noise_dim, seed), condition;
  return {nn::forward(ch.g_rating, input), nn::forward(ch.g_indicator, input)};
}

// Batched generation: column j uses noise drawn from seeds[j], the same
// stream generate() would use.
inline std::pair<Matrix, Matrix> generate_batch(const CganChannel& ch, const Matrix& conditions,
                                                std::span<const std::uint64_t> seeds) {
  if (static_cast<std::size_t>(conditions.rows()) != ch.condition_dim ||
      static_cast<std::size_t>(conditions.cols()) != seeds.size())
    throw ValidationError("generate_batch: shape mismatch");
  Matrix z(static_cast<Eigen::Index>(ch.noise_dim), conditions.cols());
  for (Eigen::Index j = 0; j < conditions.cols(); ++j) z.col(j) = sample_noise(ch.noise_dim, seeds[j]);
  const Matrix input = detail::stack(z, conditions);
  return {nn::forward(ch.g_rating, input), nn::forward(ch.g_indicator, input)};
}

// Virtual neighbour row r_bar (.) binarised f_bar: r_bar where f_bar >= threshold, unknown elsewhere.
inline Vector neighbor_preference(const SyntheticPreference& s, double binarize_threshold = 0.5) {
  if (!(binarize_threshold > 0.0 && binarize_threshold < 1.0))
    throw ValidationError("binarize threshold must lie in (0, 1)");
  if (s.r_bar.size() != s.f_bar.size()) throw ValidationError("neighbor_preference: length mismatch");
  Vector out(s.r_bar.size());
  for (Eigen::Index i = 0; i < out.size(); ++i) out(i) = s.f_bar(i) >= binarize_threshold ? s.r_bar(i) : kUnknown;
  return out;
}

struct DiscriminatorAccuracy {
  double rating = 0;
  double indicator = 0;
};

// Fraction of correct real/fake calls (threshold 0.5) on the given rows plus
// an equal number of generated fakes.
inline DiscriminatorAccuracy discriminator_accuracy(const CganChannel& ch, std::span<const TrainingRow> rows,
                                                    std::uint64_t seed) {
  if (rows.empty()) throw ValidationError("discriminator_accuracy: no rows");
  const auto n = static_cast<Eigen::Index>(ch.num_items());
  const auto b = static_cast<Eigen::Index>(rows.size());
  Matrix real_r(n, b), real_f(n, b), cond(n, b);
  for (Eigen::Index j = 0; j < b; ++j) {
    real_r.col(j) = rows[static_cast<std::size_t>(j)].rating;
    real_f.col(j) = rows[static_cast<std::size_t>(j)].indicator;
    cond.col(j) = rows[static_cast<std::size_t>(j)].condition;
  }
  std::mt19937_64 rng(seed);
  const Matrix input = detail::stack(detail::normal_matrix(static_cast<Eigen::Index>(ch.noise_dim), b, rng), cond);
  const Matrix fake_r = nn::forward(ch.g_rating, input).cwiseProduct(real_f);
  const Matrix fake_f = nn::forward(ch.g_indicator, input);
  auto accuracy = [&](const nn::Mlp& d, const Matrix& real, const Matrix& fake) {
    const Matrix lr = nn::forward(d, detail::stack(real, cond));
    const Matrix lf = nn::forward(d, detail::stack(fake, cond));
    double correct = 0;
    for (Eigen::Index j = 0; j < b; ++j) correct += (lr(0, j) >= 0.0) + (lf(0, j) < 0.0);
    return correct / (2.0 * static_cast<double>(b));
  };
  return {accuracy(ch.d_rating, real_r, fake_r), accuracy(ch.d_indicator, real_f, fake_f)};
}

inline void write_channel(const CganChannel& ch, std::ostream& out) {
  out << "gs2rs-cgan 1\nchannel " << to_string(ch.channel) << "\nnoise_dim " << ch.noise_dim
      << "\ncondition_dim " << ch.condition_dim << '\n';
  nn::write_mlp(ch.g_rating, out);
  nn::write_mlp(ch.g_indicator, out);
  nn::write_mlp(ch.d_rating, out);
  nn::write_mlp(ch.d_indicator, out);
}

inline CganChannel read_channel(std::istream& in) {
  std::string word, tag;
  int version = 0;
  if (!(in >> word >> version) || word != "gs2rs-cgan" || version != 1) throw ParseError("not a cgan checkpoint", 0);
  CganChannel ch;
  if (!(in >> word >> tag) || word != "channel") throw ParseError("expected channel", 0);
  ch.channel = parse_channel(tag);
  if (!(in >> word >> ch.noise_dim) || word != "noise_dim") throw ParseError("expected noise_dim", 0);
  if (!(in >> word >> ch.condition_dim) || word != "condition_dim") throw ParseError("expected condition_dim", 0);
  ch.g_rating = nn::read_mlp(in);
  ch.g_indicator = nn::read_mlp(in);
  ch.d_rating = nn::read_mlp(in);
  ch.d_indicator = nn::read_mlp(in);
  if (ch.g_rating.input_dim() != ch.noise_dim + ch.condition_dim || ch.g_rating.output_dim() != ch.condition_dim)
    throw ValidationError("cgan checkpoint: inconsistent dimensions");
  return ch;
}

inline void write_loss_history(std::span<const LossRecord> history, std::ostream& out) {
  out << "epoch,d_rating_loss,g_rating_loss,d_indicator_loss,g_indicator_loss\n";
  char buf[160];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,%.9g\n", r.epoch, r.d_rating, r.g_rating, r.d_indicator,
                  r.g_indicator);
    out << buf;
  }
}

}  // namespace gs2rs
