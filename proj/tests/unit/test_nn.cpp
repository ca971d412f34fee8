#include <gtest/gtest.h>

#include <filesystem>

#include "gridattack/errors.hpp"
#include "gridattack/nn/actor.hpp"
#include "gridattack/nn/checkpoint.hpp"
#include "gridattack/nn/critic.hpp"
#include "gridattack/nn/gradient_check.hpp"
#include "gridattack/nn/layers.hpp"
#include "gridattack/nn/optim.hpp"
#include "gridattack/rng.hpp"
#include "support/oracles.hpp"

using namespace gridattack;
using namespace gridattack::nn;

namespace {

Matrix random_binary(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = rng.uniform() < 0.8 ? 1.0 : 0.0;
  return m;
}

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = rng.uniform(-scale, scale);
  return m;
}

CriticShape small_critic(Eigen::Index n, std::size_t k, bool per_action = true) {
  CriticShape s;
  s.n_lines = n;
  s.agents = k;
  s.embed = 6;
  s.attend = 5;
  s.hidden = 7;
  s.per_action_head = per_action;
  return s;
}

Critic::Input random_input(const CriticShape& s, Eigen::Index batch, Rng& rng) {
  Critic::Input in;
  for (std::size_t i = 0; i < s.agents; ++i) {
    in.obs.push_back(random_binary(s.n_lines, batch, rng));
    std::vector<LineId> a(static_cast<std::size_t>(batch));
    for (auto& x : a) x = rng.index(static_cast<std::size_t>(s.n_lines));
    in.actions.push_back(a);
  }
  return in;
}

std::vector<double> column(const Matrix& m, Eigen::Index c) {
  return std::vector<double>(m.col(c).data(), m.col(c).data() + m.rows());
}

}  // namespace

TEST(Softmax, ColumnsSumToOneAndMatchLog) {
  Rng rng(1);
  const Matrix logits = random_matrix(7, 5, rng, 30.0);
  const Matrix p = softmax_columns(logits);
  const Matrix lp = log_softmax_columns(logits);
  for (Eigen::Index c = 0; c < p.cols(); ++c) EXPECT_NEAR(p.col(c).sum(), 1.0, 1e-12);
  EXPECT_LE((p - lp.array().exp().matrix()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Dense, AffineMap) {
  Dense d(2, 1);
  d.weight << 2.0, -1.0;
  d.bias << 0.5;
  Matrix x(2, 1);
  x << 3.0, 4.0;
  EXPECT_DOUBLE_EQ(d.forward(x)(0, 0), 2.5);
}

TEST(AvgPool, BackwardIsAdjoint) {
  Rng rng(2);
  AvgPool1d pool{3, 7};
  const Matrix x = random_matrix(3 * 7, 4, rng);
  const Matrix y = random_matrix(3 * pool.out_length(), 4, rng);
  const double lhs = pool.forward(x).cwiseProduct(y).sum();
  const double rhs = x.cwiseProduct(pool.backward(y)).sum();
  EXPECT_NEAR(lhs, rhs, 1e-12);
}

TEST(Conv1d, GradientMatchesFiniteDifferences) {
  Rng rng(3);
  Conv1d conv(2, 3, 9, 3);
  conv.init(rng);
  const Matrix x = random_matrix(2 * 9, 4, rng);
  const Matrix w = random_matrix(3 * 9, 4, rng);
  Conv1d grad = conv;
  grad.weight.setZero();
  grad.bias.setZero();
  Matrix patches;
  conv.forward(x, &patches);
  conv.backward(patches, w, grad);
  ParamRefs params, analytic;
  conv.collect(params, "conv");
  grad.collect(analytic, "conv");
  const auto numeric = oracle::numeric_gradient(params, [&] { return conv.forward(x).cwiseProduct(w).sum(); });
  EXPECT_LE(oracle::max_relative_error(analytic, numeric), 1e-6);
}

TEST(Actor, ZeroOutputLayerIsUniform) {
  Rng rng(4);
  ActorShape shape;
  shape.n_lines = 20;
  Actor actor(shape, rng);
  actor.output_layer().weight.setZero();
  actor.output_layer().bias.setZero();
  const Matrix p = actor.probabilities(random_binary(20, 3, rng));
  EXPECT_LE((p.array() - 1.0 / 20.0).abs().maxCoeff(), 1e-15);
}

TEST(Actor, ProbabilitiesSumToOne) {
  Rng rng(5);
  ActorShape shape;
  shape.n_lines = 186;
  Actor actor(shape, rng);
  const Matrix p = actor.probabilities(random_binary(186, 6, rng));
  for (Eigen::Index c = 0; c < p.cols(); ++c) EXPECT_NEAR(p.col(c).sum(), 1.0, 1e-6);
  EXPECT_GE(p.minCoeff(), 0.0);
}

TEST(Actor, SensitiveToOneBitAndColumnIndependent) {
  Rng rng(6);
  ActorShape shape;
  shape.n_lines = 12;
  Actor actor(shape, rng);
  Matrix obs = Matrix::Ones(12, 2);
  obs(5, 1) = 0.0;
  const Matrix both = actor.logits(obs);
  const Matrix first = actor.logits(obs.col(0));
  const Matrix second = actor.logits(obs.col(1));
  EXPECT_LE((both.col(0) - first).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((both.col(1) - second).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_GT((first - second).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Actor, BackwardMatchesFiniteDifferences) {
  Rng rng(7);
  ActorShape shape;
  shape.n_lines = 10;
  shape.hidden = 16;
  Actor actor(shape, rng);
  oracle::randomize_biases(actor.params(), 1);
  const Matrix obs = random_binary(10, 5, rng);
  const Matrix w = random_matrix(10, 5, rng);
  Actor::Cache cache;
  actor.logits(obs, &cache);
  Actor grad = actor.zeros_like();
  actor.backward(cache, w, grad);
  const auto numeric =
      oracle::numeric_gradient(actor.params(), [&] { return actor.logits(obs).cwiseProduct(w).sum(); });
  EXPECT_LE(oracle::max_relative_error(grad.params(), numeric), 1e-4);
}

TEST(Attention, SingleOtherAgentWeightIsOne) {
  Rng rng(8);
  const Matrix key = random_matrix(4, 6, rng), query = random_matrix(4, 6, rng), value = random_matrix(4, 6, rng);
  const std::vector<Vector> e{random_matrix(6, 1, rng), random_matrix(6, 1, rng)};
  const auto s = attention_aggregate(key, query, value, e, 0);
  ASSERT_EQ(s.weights.size(), 1);
  EXPECT_EQ(s.weights[0], 1.0);
}

TEST(Attention, IdenticalEmbeddingsGiveUniformWeights) {
  Rng rng(9);
  const Matrix key = random_matrix(4, 6, rng), query = random_matrix(4, 6, rng), value = random_matrix(4, 6, rng);
  const Vector same = random_matrix(6, 1, rng);
  const std::vector<Vector> e(5, same);
  const auto s = attention_aggregate(key, query, value, e, 2);
  ASSERT_EQ(s.weights.size(), 4);
  for (Eigen::Index k = 0; k < 4; ++k) EXPECT_NEAR(s.weights[k], 0.25, 1e-15);
}

TEST(Attention, MatchesDirectSummation) {
  Rng rng(10);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix key = random_matrix(3, 5, rng), query = random_matrix(3, 5, rng), value = random_matrix(3, 5, rng);
    std::vector<Vector> e;
    for (int j = 0; j < 4; ++j) e.push_back(random_matrix(5, 1, rng));
    const std::size_t agent = rng.index(4);
    const auto s = attention_aggregate(key, query, value, e, agent);
    std::vector<double> scores;
    const auto u = oracle::matvec(query, std::vector<double>(e[agent].data(), e[agent].data() + 5));
    for (std::size_t j = 0; j < 4; ++j) {
      if (j == agent) continue;
      scores.push_back(oracle::dot(oracle::matvec(key, std::vector<double>(e[j].data(), e[j].data() + 5)), u));
    }
    double denom = 0.0;
    for (double x : scores) denom += std::exp(x);
    std::vector<double> x(3, 0.0);
    std::size_t k = 0;
    double weight_sum = 0.0;
    for (std::size_t j = 0; j < 4; ++j) {
      if (j == agent) continue;
      const double w = std::exp(scores[k]) / denom;
      EXPECT_NEAR(s.weights[static_cast<Eigen::Index>(k)], w, 1e-12);
      weight_sum += s.weights[static_cast<Eigen::Index>(k)];
      const auto v = oracle::leaky(oracle::matvec(value, std::vector<double>(e[j].data(), e[j].data() + 5)));
      for (std::size_t d = 0; d < 3; ++d) x[d] += w * v[d];
      ++k;
    }
    EXPECT_NEAR(weight_sum, 1.0, 1e-12);
    for (std::size_t d = 0; d < 3; ++d) EXPECT_NEAR(s.contribution[static_cast<Eigen::Index>(d)], x[d], 1e-10);
  }
}

class CriticTranscription : public ::testing::TestWithParam<bool> {};

TEST_P(CriticTranscription, ForwardMatchesStepByStepOracle) {
  Rng rng(11);
  for (std::size_t agents : {1u, 2u, 3u, 4u}) {
    const CriticShape shape = small_critic(6, agents, GetParam());
    const Critic critic(shape, rng);
    const auto input = random_input(shape, 5, rng);
    Critic::Cache cache;
    const auto out = critic.forward(input, &cache);
    for (Eigen::Index b = 0; b < 5; ++b) {
      std::vector<std::vector<double>> obs;
      std::vector<LineId> act;
      for (std::size_t i = 0; i < agents; ++i) {
        obs.push_back(column(input.obs[i], b));
        act.push_back(input.actions[i][static_cast<std::size_t>(b)]);
      }
      std::vector<std::vector<double>> kappas;
      const auto ref = oracle::critic_outputs(critic, obs, act, &kappas);
      for (std::size_t i = 0; i < agents; ++i) {
        ASSERT_EQ(out[i].rows(), static_cast<Eigen::Index>(ref[i].size()));
        for (std::size_t r = 0; r < ref[i].size(); ++r) {
          EXPECT_NEAR(out[i](static_cast<Eigen::Index>(r), b), ref[i][r], 1e-10);
        }
        if (agents > 1) {
          double sum = 0.0;
          for (std::size_t k = 0; k < kappas[i].size(); ++k) {
            EXPECT_NEAR(cache.agents[i].kappa(static_cast<Eigen::Index>(k), b), kappas[i][k], 1e-12);
            sum += cache.agents[i].kappa(static_cast<Eigen::Index>(k), b);
          }
          EXPECT_NEAR(sum, 1.0, 1e-12);
        }
      }
    }
  }
}

INSTANTIATE_TEST_SUITE_P(HeadModes, CriticTranscription, ::testing::Values(true, false));

TEST(Critic, ZeroHeadGivesZeroValues) {
  Rng rng(12);
  const CriticShape shape = small_critic(5, 3);
  Critic critic(shape, rng);
  for (std::size_t i = 0; i < 3; ++i) {
    critic.head_output(i).weight.setZero();
    critic.head_output(i).bias.setZero();
  }
  const auto input = random_input(shape, 4, rng);
  for (const auto& m : critic.forward(input)) EXPECT_EQ(m.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Critic, SwappingIdenticalOthersLeavesValueUnchanged) {
  Rng rng(13);
  const CriticShape shape = small_critic(5, 3);
  Critic critic(shape, rng);
  critic.action_encoder(2) = critic.action_encoder(1);
  auto input = random_input(shape, 4, rng);
  input.obs[2] = input.obs[1];
  const auto before = critic.forward(input);
  std::swap(input.actions[1], input.actions[2]);
  const auto after = critic.forward(input);
  EXPECT_LE((before[0] - after[0]).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Critic, ActionValuesPerCandidate) {
  Rng rng(14);
  for (bool per_action : {true, false}) {
    const CriticShape shape = small_critic(5, 2, per_action);
    const Critic critic(shape, rng);
    auto input = random_input(shape, 3, rng);
    const Matrix values = critic.action_values(input, 1);
    ASSERT_EQ(values.rows(), 5);
    const Matrix taken = critic.taken_values(input, critic.forward(input));
    for (Eigen::Index b = 0; b < 3; ++b) {
      EXPECT_NEAR(values(static_cast<Eigen::Index>(input.actions[1][static_cast<std::size_t>(b)]), b), taken(1, b),
                  1e-12);
    }
  }
}

TEST(Critic, BackwardMatchesFiniteDifferences) {
  Rng rng(15);
  for (bool per_action : {true, false}) {
    const CriticShape shape = small_critic(6, 3, per_action);
    Critic critic(shape, rng);
    oracle::randomize_biases(critic.params(), 2);
    const auto input = random_input(shape, 4, rng);
    std::vector<Matrix> w;
    for (std::size_t i = 0; i < 3; ++i) w.push_back(random_matrix(shape.head_outputs(), 4, rng));
    Critic::Cache cache;
    critic.forward(input, &cache);
    Critic grad = critic.zeros_like();
    critic.backward(input, cache, w, grad);
    const auto numeric = oracle::numeric_gradient(critic.params(), [&] {
      const auto out = critic.forward(input);
      double s = 0.0;
      for (std::size_t i = 0; i < 3; ++i) s += out[i].cwiseProduct(w[i]).sum();
      return s;
    });
    EXPECT_LE(oracle::max_relative_error(grad.params(), numeric), 1e-4) << "per_action=" << per_action;
  }
}

TEST(Critic, InputShapeErrors) {
  Rng rng(16);
  const CriticShape shape = small_critic(5, 2);
  const Critic critic(shape, rng);
  auto input = random_input(shape, 3, rng);
  input.actions[0][1] = 9;
  EXPECT_THROW(critic.forward(input), Error);
  input = random_input(shape, 3, rng);
  input.obs.pop_back();
  EXPECT_THROW(critic.forward(input), Error);
}

TEST(SoftUpdate, Endpoints) {
  Matrix target = Matrix::Zero(2, 2), online = Matrix::Constant(2, 2, 2.0);
  ParamRefs t{{"w", &target}}, o{{"w", &online}};
  soft_update(t, o, 0.0);
  EXPECT_EQ(target, Matrix::Zero(2, 2));
  soft_update(t, o, 0.5);
  EXPECT_EQ(target, Matrix::Constant(2, 2, 1.0));
  soft_update(t, o, 1.0);
  EXPECT_EQ(target, online);
}

TEST(GradientCheck, QuadraticIsExact) {
  Rng rng(17);
  Matrix w = random_matrix(4, 3, rng);
  Matrix g = w;
  ParamRefs params{{"w", &w}}, analytic{{"w", &g}};
  const auto report = gradient_check(params, analytic, [&] { return 0.5 * w.squaredNorm(); });
  EXPECT_EQ(report.checked, 12u);
  EXPECT_LE(report.max_relative_error, 1e-8);
}

TEST(GradientCheck, DetectsWrongGradient) {
  Matrix w = Matrix::Constant(2, 2, 1.0);
  Matrix g = Matrix::Constant(2, 2, 2.0);
  ParamRefs params{{"w", &w}}, analytic{{"w", &g}};
  const auto report = gradient_check(params, analytic, [&] { return 0.5 * w.squaredNorm(); });
  EXPECT_NEAR(report.max_relative_error, 1.0, 1e-6);
}

TEST(GradientCheck, NonFiniteLossThrows) {
  Matrix w = Matrix::Constant(1, 1, 1.0);
  Matrix g = w;
  ParamRefs params{{"w", &w}}, analytic{{"w", &g}};
  EXPECT_THROW(gradient_check(params, analytic, [] { return std::nan(""); }), Error);
}

TEST(ClipGlobalNorm, ScalesDown) {
  Matrix a = Matrix::Constant(1, 1, 3.0), b = Matrix::Constant(1, 1, 4.0);
  ParamRefs g{{"a", &a}, {"b", &b}};
  EXPECT_DOUBLE_EQ(clip_global_norm(g, 1.0), 5.0);
  EXPECT_NEAR(a(0, 0), 0.6, 1e-15);
  EXPECT_NEAR(b(0, 0), 0.8, 1e-15);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Matrix w = Matrix::Constant(1, 2, 1.0);
  Matrix g(1, 2);
  g << 0.5, -2.0;
  Adam opt(0.1);
  opt.step({{"w", &w}}, {{"w", &g}});
  EXPECT_NEAR(w(0, 0), 0.9, 1e-7);
  EXPECT_NEAR(w(0, 1), 1.1, 1e-7);
  EXPECT_EQ(opt.steps(), 1);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  Rng rng(18);
  ActorShape shape;
  shape.n_lines = 9;
  Actor actor(shape, rng);
  Checkpoint ckpt;
  ckpt.meta = {{"method", "maac"}, {"n_lines", 9}};
  ckpt.config_digest = digest_hex("abc");
  ckpt.add("actor0.", actor.params());
  const std::string bytes = ckpt.serialize();
  const Checkpoint back = Checkpoint::deserialize(bytes);
  EXPECT_EQ(back.serialize(), bytes);
  EXPECT_EQ(back.meta, ckpt.meta);
  Actor restored(shape);
  back.load_into("actor0.", restored.params());
  const auto a = actor.params();
  const auto r = restored.params();
  for (std::size_t t = 0; t < a.size(); ++t) EXPECT_EQ(*a[t].value, *r[t].value);
}

TEST(Checkpoint, FileRoundTrip) {
  Checkpoint ckpt;
  ckpt.meta = {{"x", 1}};
  Matrix m = Matrix::Identity(3, 2);
  ckpt.add("", {{"m", &m}});
  const auto path = std::filesystem::temp_directory_path() / "gridattack_ckpt_test.bin";
  ckpt.save(path.string());
  EXPECT_EQ(Checkpoint::load(path.string()).serialize(), ckpt.serialize());
  std::filesystem::remove(path);
}

TEST(Checkpoint, CorruptBytesRejected) {
  Checkpoint ckpt;
  std::string bytes = ckpt.serialize();
  bytes[0] = 'X';
  EXPECT_THROW(Checkpoint::deserialize(bytes), Error);
  EXPECT_THROW(Checkpoint::deserialize(ckpt.serialize().substr(0, 10)), Error);
}

TEST(Checkpoint, ShapeMismatchIsCompatibilityError) {
  Checkpoint ckpt;
  Matrix m = Matrix::Zero(2, 2);
  ckpt.add("", {{"m", &m}});
  Matrix other = Matrix::Zero(3, 2);
  try {
    ckpt.load_into("", {{"m", &other}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Compatibility);
  }
}

TEST(Digest, StableAndSensitive) {
  EXPECT_EQ(digest_hex("abc"), digest_hex("abc"));
  EXPECT_NE(digest_hex("abc"), digest_hex("abd"));
  EXPECT_EQ(digest_hex("").size(), 16u);
}
