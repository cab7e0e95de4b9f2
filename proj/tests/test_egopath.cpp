#include <gtest/gtest.h>

#include <map>
#include <sstream>

#include "sorex/egopath.hpp"
#include "sorex/reaggregate.hpp"
#include "support/oracles.hpp"
#include "support/synthetic.hpp"

using namespace sorex;

namespace {

EgoPath path(std::vector<NodeId> slots) { return {0, std::move(slots)}; }

}  // namespace

TEST(EgoPath, Compaction) {
  // u0=0 u1=1 u2=2 v0=3 v1=4
  const std::vector<NodeId> a{0, 3, 0};
  EXPECT_EQ(to_ego_path(a, 2).slots, (std::vector<NodeId>{3, kEmpty}));
  const std::vector<NodeId> b{0, 1, 4};
  EXPECT_EQ(to_ego_path(b, 2).slots, (std::vector<NodeId>{1, 4}));
  const std::vector<NodeId> c{0, 1, 0, 1};
  EXPECT_EQ(to_ego_path(c, 3).slots, (std::vector<NodeId>{1, kEmpty, kEmpty}));
  EXPECT_EQ(to_ego_path(c, 3).length(), 1);
}

TEST(EgoPath, ChainOnlyWalk) {
  const std::vector<InteractionEdge> inter{{0, 0}};
  const JointGraph g(1, 1, inter, {});
  const auto pool = sample_walks(g, 0, 2, 50, std::uint64_t{3});
  ASSERT_EQ(pool.paths.size(), 50u);
  for (const auto& p : pool.paths) EXPECT_EQ(p.slots, (std::vector<NodeId>{1, kEmpty}));
}

TEST(EgoPath, ToyDistribution) {
  const auto g = sorex::testing::toy_a();
  const auto dist = enumerate_ego_paths(g, 0, 2);
  const std::map<std::vector<NodeId>, double> expect{
      {{3, kEmpty}, 0.25}, {{3, 1}, 0.25}, {{1, kEmpty}, 0.125},
      {{1, 3}, 0.125},     {{1, 4}, 0.125}, {{1, 2}, 0.125}};
  ASSERT_EQ(dist.size(), expect.size());
  double total = 0;
  for (const auto& [p, prob] : dist) {
    ASSERT_TRUE(expect.count(p.slots));
    EXPECT_NEAR(prob, expect.at(p.slots), 1e-12);
    total += prob;
  }
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(EgoPath, StarDistribution) {
  const int r = 5;
  std::vector<InteractionEdge> inter;
  for (int j = 0; j < r; ++j) inter.emplace_back(0, j);
  const JointGraph g(1, r, inter, {});
  const auto dist = enumerate_ego_paths(g, 0, 2);
  ASSERT_EQ(dist.size(), static_cast<std::size_t>(r));
  for (const auto& [p, prob] : dist) {
    EXPECT_EQ(p.slots[1], kEmpty);
    EXPECT_NEAR(prob, 1.0 / r, 1e-12);
  }
}

TEST(EgoPath, EnumerationMatchesDenseOracle) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto edges = sorex::testing::random_edges(5, 5, 0.3, 0.4, seed);
    const auto g = sorex::testing::make_graph(edges);
    const auto adj = oracle::joint_adjacency(edges);
    for (int k = 1; k <= 3; ++k) {
      for (NodeId u = 0; u < g.num_users(); ++u) {
        const auto ref = oracle::ego_paths(adj, u, k);
        const auto got = enumerate_ego_paths(g, u, k);
        ASSERT_EQ(got.size(), ref.size());
        for (const auto& [p, prob] : got) {
          const std::vector<int> key(p.slots.begin(), p.slots.end());
          ASSERT_TRUE(ref.count(key));
          EXPECT_NEAR(prob, ref.at(key), 1e-12);
        }
      }
    }
  }
}

TEST(EgoPath, PoolDeterminismAndIsolation) {
  const auto g = sorex::testing::random_graph(10, 8, 0.3, 0.2, 5);
  const auto a = sample_walks(g, 2, 2, 100, std::uint64_t{42});
  const auto b = sample_walks(g, 2, 2, 100, std::uint64_t{42});
  EXPECT_EQ(a.paths, b.paths);
  EXPECT_EQ(a.seed, 42u);

  const std::vector<InteractionEdge> inter{{0, 0}};
  const JointGraph lonely(2, 1, inter, {});
  EXPECT_THROW(sample_walks(lonely, 1, 2, 4, std::uint64_t{1}), std::invalid_argument);
  const auto pool = user_pool(lonely, 1, 2, 4, 1);
  ASSERT_EQ(pool.paths.size(), 4u);
  for (const auto& p : pool.paths) EXPECT_EQ(p.length(), 0);
}

TEST(Similarity, Examples) {
  Matrix<double> s(5, 2);
  s << 0, 0,  // u0
      0.6, 0.8,  // u1, cos 0.6 with candidate
      0, 0,  //
      1, 0,  // v0, cos 1 with itself
      -0.2, std::sqrt(1 - 0.04);
  // candidate direction (1, 0) placed at row 3
  EXPECT_DOUBLE_EQ(path_similarity(s, path({kEmpty, kEmpty}), 3, 2), 0.0);
  EXPECT_NEAR(path_similarity(s, path({3, kEmpty}), 3, 2), 0.5, 1e-12);
  EXPECT_NEAR(path_similarity(s, path({1, 4}), 3, 2), 0.2, 1e-12);
  EXPECT_DOUBLE_EQ(rescale(-1), 0.0);
  EXPECT_DOUBLE_EQ(rescale(0), 0.5);
  EXPECT_DOUBLE_EQ(rescale(1), 1.0);
}

TEST(Sampling, DegenerateAndMonteCarlo) {
  auto rng = make_rng(1, {});
  const std::vector<double> ends{1.0, 0.0};
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(sample_hard(ends, rng).kept, (std::vector<int>{0}));
  std::vector<double> probs(100000, 0.3);
  const auto draw = sample_hard(probs, rng);
  EXPECT_NEAR(static_cast<double>(draw.kept.size()) / 1e5, 0.3, 0.01);

  const auto relaxed = sample_relaxed(probs, 0.3, rng);
  for (double v : relaxed.draws) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  // Relaxed draws threshold at 0.5 approximately as Bernoulli(p).
  EXPECT_NEAR(static_cast<double>(relaxed.kept.size()) / 1e5, 0.3, 0.01);

  const std::vector<double> ranked{0.2, 0.9, 0.5, 0.9};
  EXPECT_EQ(sample_topk(ranked, 2).kept, (std::vector<int>{1, 3}));
}

TEST(Sampling, LogRelaxedDrawMatchesSigmoid) {
  for (double p : {0.0, 0.1, 0.5, 0.99, 1.0}) {
    for (double noise : {-3.0, 0.0, 2.5}) {
      const double pc = std::clamp(p, kProbabilityClamp, 1 - kProbabilityClamp);
      const double x = (std::log(pc / (1 - pc)) + noise) / 0.4;
      EXPECT_NEAR(log_relaxed_draw(p, noise, 0.4), std::log(1 / (1 + std::exp(-x))), 1e-9);
    }
  }
}

TEST(Config, EgoPathValidation) {
  EgoPathConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.similarity_divisor(), 2);
  c.short_divisor = true;
  EXPECT_EQ(c.similarity_divisor(), 1);
  c.k = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Pool, WriterFormat) {
  const auto g = sorex::testing::toy_a();
  WalkPool pool{0, 2, {path({3, kEmpty}), path({1, 2})}, 0};
  std::ostringstream out;
  write_pool(out, pool, g);
  EXPECT_EQ(out.str(), "u0\tv0,_\nu0\tu1,u2\n");
  EXPECT_EQ(node_label(g, 4), "v1");
}

TEST(Attention, ValuesAndHopSoftmax) {
  Matrix<double> a = Matrix<double>::Zero(3, 64);
  a(0, 0) = 1;
  a(1, 0) = 1;
  a(2, 1) = 1;
  EXPECT_NEAR(node_attention(a, 0, 1), 0.125, 1e-12);
  EXPECT_NEAR(node_attention(a, 0, 2), 0.0, 1e-12);
  Matrix<double> b = Matrix<double>::Zero(2, 16);
  b(0, 0) = 1;
  b(1, 0) = -1;
  EXPECT_NEAR(node_attention(b, 0, 1), -0.25, 1e-12);

  HopAttention att;
  att.hops = {{{0, 1, std::log(2.0), 0}, {1, 2, 0.0, 0}}, {{0, 3, 0.7, 0}}, {}};
  hopwise_normalize(att);
  EXPECT_NEAR(att.hops[0][0].alpha, 2.0 / 3, 1e-12);
  EXPECT_NEAR(att.hops[0][1].alpha, 1.0 / 3, 1e-12);
  EXPECT_DOUBLE_EQ(att.hops[1][0].alpha, 1.0);

  HopAttention eq;
  eq.hops = {{{0, 1, 0.3, 0}, {1, 1, 0.3, 0}}};
  hopwise_normalize(eq);
  EXPECT_DOUBLE_EQ(eq.hops[0][0].alpha, 0.5);

  // log-weights shift logits per path
  HopAttention w;
  w.hops = {{{0, 1, 0.0, 0}, {1, 2, 0.0, 0}}};
  const std::vector<double> lw{std::log(3.0), 0.0};
  hopwise_normalize(w, lw);
  EXPECT_NEAR(w.hops[0][0].alpha, 0.75, 1e-12);
}

TEST(Reaggregate, Examples) {
  Matrix<double> ids(3, 2);
  ids << 1, 2, 3, 4, 5, 6;
  Vector<double> h(2);
  h << 3, 3;
  HopAttention empty;
  empty.hops.resize(2);
  EXPECT_LT((reaggregate<double>(h, empty, ids, 2) - h / 3).norm(), 1e-12);
  EXPECT_LT((reaggregate<double>(h, empty, ids, 2, true) - h).norm(), 1e-12);

  HopAttention one;
  one.hops = {{{0, 1, 0, 1.0}}, {}};
  EXPECT_LT((reaggregate<double>(h, one, ids, 2) - (h + Vector<double>(ids.row(1).transpose())) / 3).norm(), 1e-12);

  HopAttention two;
  two.hops = {{{0, 0, 0, 0.3}, {1, 1, 0, 0.7}}, {{0, 2, 0, 0.4}, {1, 0, 0, 0.6}}};
  const double bound = (h.norm() + 2 * ids.rowwise().norm().maxCoeff()) / 3;
  EXPECT_LE(reaggregate<double>(h, two, ids, 2).norm(), bound + 1e-12);
}

TEST(ExplainedScore, Bilinear) {
  Vector<double> hr(2), hs(2), cr(2), es(2);
  hr << 1, 0;
  hs << 0, 1;
  cr << 0, 1;
  es << 1, 0;
  EXPECT_EQ(explained_score<double>(0, hr, hs, cr, es, true).g, 0.0);
  cr << 0.5, 0.25;
  const auto a = explained_score<double>(0, hr, hs, cr, es, false);
  const auto b = explained_score<double>(0, hr, hs, Vector<double>(2 * cr), es, false);
  EXPECT_DOUBLE_EQ(b.g_r, 2 * a.g_r);
  EXPECT_EQ(a.g, a.g_r);
}
