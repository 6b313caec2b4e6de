#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "gs2rs/cgan.hpp"
#include "oracles.hpp"

using namespace gs2rs;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index k = 0;
  for (double x : v) out(k++) = x;
  return out;
}

CganArchitecture small_arch() {
  CganArchitecture a;
  a.noise_dim = 4;
  a.hidden = {8};
  return a;
}

}  // namespace

TEST(TrainingRows, InterestRow) {
  const PreferenceMatrix p(1, 6, Channel::interest, {{0, 2, 1}, {0, 5, 1}});
  const auto rows = build_training_rows(p);
  const Vector expected = vec({0, 0, 1, 0, 0, 1});
  EXPECT_EQ(rows[0].rating, expected);
  EXPECT_EQ(rows[0].indicator, expected);
  EXPECT_EQ(rows[0].condition, expected);
}

TEST(TrainingRows, SatisfactionRow) {
  const PreferenceMatrix p(1, 5, Channel::satisfaction, {{0, 0, 1}, {0, 3, 0}});
  const auto rows = build_training_rows(p);
  EXPECT_EQ(rows[0].rating, vec({1, 0, 0, 0, 0}));
  EXPECT_EQ(rows[0].indicator, vec({1, 0, 0, 1, 0}));
  EXPECT_EQ(rows[0].condition, vec({1, 0, 0, 0, 0}));
  EXPECT_EQ(condition_vector(p, 0), rows[0].condition);
}

TEST(TrainingRows, UnknownRowIsZero) {
  const PreferenceMatrix p(2, 3, Channel::interest, {{1, 0, 1}});
  const auto rows = build_training_rows(p);
  EXPECT_TRUE(rows[0].rating.isZero(0));
  EXPECT_TRUE(rows[0].indicator.isZero(0));
  EXPECT_TRUE(rows[0].condition.isZero(0));
}

TEST(Mask, Examples) {
  const Vector v = vec({0.2, 0.8, 0.4});
  EXPECT_EQ(mask(v, Vector::Ones(3)), v);
  EXPECT_TRUE(mask(v, Vector::Zero(3)).isZero(0));
  EXPECT_EQ(mask(vec({0.2, 0.8}), vec({1, 0})), vec({0.2, 0.0}));
  EXPECT_THROW(mask(v, Vector::Ones(2)), ValidationError);
}

TEST(DeriveSeed, DistinctAndStable) {
  EXPECT_EQ(derive_seed(1, 2, 3), derive_seed(1, 2, 3));
  EXPECT_NE(derive_seed(1, 2, 3), derive_seed(1, 3, 2));
  EXPECT_NE(derive_seed(1, 2), derive_seed(2, 2));
}

TEST(Generate, DeterministicAndBounded) {
  const auto ch = init_channel(Channel::satisfaction, 7, small_arch(), 5);
  const Vector c = vec({1, 0, 0, 1, 0, 0, 1});
  const auto a = generate(ch, c, 42), b = generate(ch, c, 42);
  EXPECT_EQ(a.r_bar, b.r_bar);
  EXPECT_EQ(a.f_bar, b.f_bar);
  for (Eigen::Index i = 0; i < 7; ++i) {
    EXPECT_GT(a.r_bar(i), 0.0);
    EXPECT_LT(a.r_bar(i), 1.0);
    EXPECT_GT(a.f_bar(i), 0.0);
    EXPECT_LT(a.f_bar(i), 1.0);
  }
  EXPECT_THROW(generate(ch, Vector::Zero(3), 1), ValidationError);
}

TEST(Generate, DifferentSeedsDiffer) {
  const auto ch = init_channel(Channel::interest, 6, small_arch(), 9);
  const Vector c = Vector::Ones(6);
  std::vector<SyntheticPreference> out;
  for (std::uint64_t s = 0; s < 10; ++s) out.push_back(generate(ch, c, s));
  for (std::size_t a = 0; a < out.size(); ++a)
    for (std::size_t b = a + 1; b < out.size(); ++b) EXPECT_NE(out[a].r_bar, out[b].r_bar);
}

TEST(Generate, BatchMatchesSingle) {
  const auto ch = init_channel(Channel::interest, 5, small_arch(), 3);
  Matrix conds(5, 2);
  conds.col(0) = vec({1, 0, 1, 0, 0});
  conds.col(1) = vec({0, 1, 0, 0, 1});
  const std::uint64_t seeds[] = {11, 12};
  const auto [r, f] = generate_batch(ch, conds, seeds);
  for (int j = 0; j < 2; ++j) {
    const auto one = generate(ch, conds.col(j), seeds[j]);
    EXPECT_TRUE(Vector(r.col(j)).isApprox(one.r_bar, 1e-14));
    EXPECT_TRUE(Vector(f.col(j)).isApprox(one.f_bar, 1e-14));
  }
}

TEST(NeighborPreference, Rules) {
  const auto row = neighbor_preference({vec({0.9, 0.4}), vec({0.8, 0.1})}, 0.5);
  EXPECT_DOUBLE_EQ(row(0), 0.9);
  EXPECT_FALSE(is_known(row(1)));
  const auto none = neighbor_preference({vec({0.3, 0.7}), vec({0.2, 0.49})}, 0.5);
  EXPECT_FALSE(is_known(none(0)));
  EXPECT_FALSE(is_known(none(1)));
  EXPECT_TRUE(is_known(neighbor_preference({vec({0.6}), vec({0.5})}, 0.5)(0)));
  EXPECT_THROW(neighbor_preference({vec({0.6}), vec({0.5})}, 1.0), ValidationError);
}

// The generator update of one adversarial step equals -lr times the gradient of
// -mean ln sigmoid(D([f .* G(x); c])) evaluated with the already-updated discriminator.
TEST(AdversarialStep, GeneratorGradientMatchesFiniteDifferences) {
  const std::size_t n = 4, noise = 3, batch = 3;
  nn::Mlp gen({noise + n, 5, n}, nn::Activation::tanh, nn::Activation::sigmoid, 1);
  nn::Mlp disc({2 * n, 5, 1}, nn::Activation::tanh, nn::Activation::identity, 2);
  std::mt19937_64 rng(3);
  const Matrix cond = (detail::normal_matrix(n, batch, rng).array() > 0).cast<double>();
  const Matrix input = detail::stack(detail::normal_matrix(noise, batch, rng), cond);
  const Matrix real = (detail::normal_matrix(n, batch, rng).array() > 0).cast<double>();
  const Matrix f = (detail::normal_matrix(n, batch, rng).array() > -0.3).cast<double>();

  const nn::Mlp gen_before = gen;
  const double lr = 1e-3;
  detail::adversarial_step(gen, disc, input, real, cond, &f, lr);  // disc now holds D'

  auto g_loss = [&](const nn::Mlp& g) {
    const Matrix fake = nn::forward(g, input).cwiseProduct(f);
    const Matrix p = detail::sigmoid(nn::forward(disc, detail::stack(fake, cond)));
    return -(p.array().log()).sum() / static_cast<double>(batch);
  };
  nn::Mlp probe = gen_before;
  const double h = 1e-6;
  for (std::size_t l = 0; l < probe.layers().size(); ++l) {
    auto& W = probe.layers()[l].weight;
    for (Eigen::Index r = 0; r < W.rows(); ++r)
      for (Eigen::Index c = 0; c < W.cols(); ++c) {
        const double saved = W(r, c);
        W(r, c) = saved + h;
        const double up = g_loss(probe);
        W(r, c) = saved - h;
        const double down = g_loss(probe);
        W(r, c) = saved;
        const double numeric = (up - down) / (2 * h);
        const double applied = (gen_before.layers()[l].weight(r, c) - gen.layers()[l].weight(r, c)) / lr;
        EXPECT_NEAR(applied, numeric, 1e-6 + 1e-4 * std::abs(numeric));
      }
  }
}

TEST(AdversarialStep, FullyMaskedFakeLeavesGeneratorUnchanged) {
  const std::size_t n = 3;
  nn::Mlp gen({2 + n, 4, n}, nn::Activation::relu, nn::Activation::sigmoid, 4);
  nn::Mlp disc({2 * n, 4, 1}, nn::Activation::relu, nn::Activation::identity, 5);
  const nn::Mlp before = gen;
  const Matrix zeros = Matrix::Zero(n, 2);
  Matrix input = Matrix::Ones(2 + n, 2);
  detail::adversarial_step(gen, disc, input, Matrix::Ones(n, 2), zeros, &zeros, 0.1);
  EXPECT_TRUE(gen == before);
}

TEST(AdversarialStep, DiscriminatorStepLowersItsLoss) {
  const std::size_t n = 4;
  nn::Mlp gen({2 + n, 6, n}, nn::Activation::tanh, nn::Activation::sigmoid, 6);
  nn::Mlp disc({2 * n, 6, 1}, nn::Activation::tanh, nn::Activation::identity, 7);
  std::mt19937_64 rng(1);
  const Matrix cond = Matrix::Ones(n, 4);
  const Matrix input = detail::stack(detail::normal_matrix(2, 4, rng), cond);
  const Matrix real = Matrix::Ones(n, 4);
  auto d_loss = [&](const nn::Mlp& d) {
    const Matrix fake = nn::forward(gen, input);
    const Matrix pr = detail::sigmoid(nn::forward(d, detail::stack(real, cond)));
    const Matrix pf = detail::sigmoid(nn::forward(d, detail::stack(fake, cond)));
    return -(pr.array().log().sum() + (1.0 - pf.array()).log().sum()) / 4.0;
  };
  const double before = d_loss(disc);
  nn::Mlp g_copy = gen;
  detail::adversarial_step(g_copy, disc, input, real, cond, nullptr, 0.01);
  EXPECT_LT(d_loss(disc), before);
}

TEST(Train, DeterministicForSeed) {
  const auto m = oracle::two_block_ratings(40, 10, 1);
  const auto rows = build_training_rows(extract_satisfaction(m, ThresholdPolicy::fixed(3)));
  nn::TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 8;
  const auto a = train_channel(rows, cfg, small_arch(), Channel::satisfaction);
  const auto b = train_channel(rows, cfg, small_arch(), Channel::satisfaction);
  EXPECT_TRUE(a.channel == b.channel);
  ASSERT_EQ(a.history.size(), 3u);
  EXPECT_EQ(a.history[2].d_rating, b.history[2].d_rating);
}

TEST(Train, RejectsTooFewRows) {
  const auto rows = build_training_rows(PreferenceMatrix(3, 4, Channel::interest, {}));
  nn::TrainConfig cfg;
  cfg.batch_size = 4;
  EXPECT_THROW(train_channel(rows, cfg, small_arch(), Channel::interest), ValidationError);
}

TEST(Train, DivergenceReportsLastGoodChannel) {
  const auto m = oracle::two_block_ratings(16, 6, 2);
  const auto rows = build_training_rows(extract_interest(m));
  nn::TrainConfig cfg;
  cfg.learning_rate = 1e300;
  cfg.batch_size = 4;
  cfg.epochs = 5;
  try {
    train_channel(rows, cfg, small_arch(), Channel::interest);
    FAIL() << "expected divergence";
  } catch (const TrainingDiverged& e) {
    EXPECT_EQ(e.last_good().num_items(), 6u);
  }
}

// Smaller version of the separable-data check: cluster-A conditions should
// produce higher rating outputs on block A than on block B.
TEST(Train, LearnsBlockStructure) {
  const auto m = oracle::two_block_ratings(120, 20, 7);
  const auto p = extract_satisfaction(m, ThresholdPolicy::fixed(3));
  const auto rows = build_training_rows(p);
  nn::TrainConfig cfg;
  cfg.epochs = 300;
  cfg.batch_size = 16;
  cfg.seed = 3;
  CganArchitecture arch;
  arch.noise_dim = 16;
  arch.hidden = {64, 64};
  const auto t = train_channel(rows, cfg, arch, p.channel());
  double a = 0, b = 0;
  for (Index u = 0; u < 60; ++u) {
    const auto s = generate(t.channel, condition_vector(p, u), u);
    a += s.r_bar.head(10).mean();
    b += s.r_bar.tail(10).mean();
  }
  EXPECT_GT(a, 2.0 * b);
}

TEST(Checkpoint, ChannelRoundTrip) {
  const auto ch = init_channel(Channel::satisfaction, 5, small_arch(), 8);
  std::stringstream buf;
  write_channel(ch, buf);
  EXPECT_TRUE(read_channel(buf) == ch);
}

TEST(Checkpoint, LossHistoryCsv) {
  const LossRecord r[] = {{0, 1.5, 0.5, 0.25, 2.0}};
  std::ostringstream out;
  write_loss_history(r, out);
  EXPECT_EQ(out.str(), "epoch,d_rating_loss,g_rating_loss,d_indicator_loss,g_indicator_loss\n0,1.5,0.5,0.25,2\n");
}
