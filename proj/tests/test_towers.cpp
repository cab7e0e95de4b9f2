#include <gtest/gtest.h>

#include <cmath>

#include "sorex/towers.hpp"
#include "support/oracles.hpp"
#include "support/synthetic.hpp"

using namespace sorex;

namespace {

Matrix<double> random_table(int rows, int d, std::uint64_t seed) {
  return init_embeddings<double>(rows, 0, d, seed, 1.0).interaction;
}

double max_abs(const Matrix<double>& a, const oracle::Dense& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace

TEST(Embeddings, DeterministicBoundedIndependent) {
  const auto a = init_embeddings<double>(5, 7, 8, 3, 0.1);
  const auto b = init_embeddings<double>(5, 7, 8, 3, 0.1);
  EXPECT_EQ(a.interaction, b.interaction);
  EXPECT_EQ(a.social, b.social);
  EXPECT_LE(a.interaction.cwiseAbs().maxCoeff(), 0.1);
  EXPECT_LE(a.social.cwiseAbs().maxCoeff(), 0.1);
  EXPECT_TRUE((a.interaction.array() != a.social.array()).all());
  EXPECT_THROW(init_embeddings<double>(1, 1, 0, 1, 0.1), std::invalid_argument);
}

TEST(InteractionTower, SingleEdge) {
  const std::vector<InteractionEdge> inter{{0, 0}};
  const JointGraph g(1, 1, inter, {});
  Matrix<double> e(2, 2);
  e << 1, 0, 0, 1;
  const auto z = propagate_interaction(e, g, 1);
  EXPECT_NEAR(z(0, 0), 0.5, 1e-12);
  EXPECT_NEAR(z(0, 1), 0.5, 1e-12);
  EXPECT_NEAR(z(1, 0), 0.5, 1e-12);
  EXPECT_NEAR(z(1, 1), 0.5, 1e-12);
}

TEST(InteractionTower, IsolatedItemKeepsEmbedding) {
  const std::vector<InteractionEdge> inter{{0, 0}};
  const JointGraph g(1, 2, inter, {});
  const auto e = random_table(3, 4, 1);
  const auto z = propagate_interaction(e, g, 2);
  EXPECT_LT((z.row(2) - e.row(2)).norm(), 1e-15);
}

TEST(InteractionTower, ToyMatchesDenseOracle) {
  const auto edges = sorex::testing::toy_a_edges();
  const auto e = random_table(5, 6, 7);
  const auto z = propagate_interaction(e, sorex::testing::make_graph(edges), 2);
  EXPECT_LT(max_abs(z, oracle::interaction_tower(edges, e, 2)), 1e-6);
}

TEST(Influence, JaccardCases) {
  const auto g = sorex::testing::toy_a();
  const auto w = jaccard_influence(g);
  EXPECT_NEAR(w.phi_of(0, 1), std::sqrt(0.5), 1e-12);
  EXPECT_NEAR(w.phi_of(1, 0), std::sqrt(0.5), 1e-12);
  EXPECT_NEAR(w.alpha_of(1, 0), 0.5, 1e-12);
  EXPECT_NEAR(w.alpha_of(1, 2), 0.5, 1e-12);
  EXPECT_NEAR(w.alpha_of(0, 1), 1.0, 1e-12);

  const std::vector<InteractionEdge> inter{{0, 0}, {1, 0}, {2, 1}};
  const std::vector<SocialEdge> social{{0, 1}, {1, 2}};
  const JointGraph h(3, 2, inter, social);
  const auto wh = jaccard_influence(h);
  EXPECT_DOUBLE_EQ(wh.phi_of(0, 1), 1.0);
  EXPECT_DOUBLE_EQ(wh.phi_of(1, 2), 0.0);
}

TEST(SocialTower, SingletonAndIsolated) {
  const std::vector<InteractionEdge> inter{{0, 0}, {1, 0}, {2, 0}};
  const std::vector<SocialEdge> social{{0, 1}};
  const JointGraph g(3, 1, inter, social);
  const auto e = random_table(4, 3, 2);
  const auto w = jaccard_influence(g);
  const auto hs = propagate_social(e, g, w, 1);
  EXPECT_LT((hs.row(0) - (e.row(0) + e.row(1)) / 2).norm(), 1e-12);
  EXPECT_LT((hs.row(2) - e.row(2)).norm(), 1e-12);
}

TEST(SocialTower, ItemRepresentation) {
  const std::vector<InteractionEdge> inter{{0, 0}, {1, 1}, {2, 1}};
  const JointGraph g(3, 3, inter, {});
  Matrix<double> users(3, 2);
  users << 1, 2, 3, 4, -3, -4;
  const auto ids = random_table(6, 2, 3);
  EXPECT_EQ(item_social_repr(users, ids, g, 0), Vector<double>(users.row(0).transpose()));
  EXPECT_LT(item_social_repr(users, ids, g, 1).norm(), 1e-12);
  EXPECT_EQ(item_social_repr(users, ids, g, 2), Vector<double>(ids.row(5).transpose()));
  EXPECT_EQ(item_social_repr(users, ids, g, 0, false), Vector<double>(ids.row(3).transpose()));
}

TEST(SocialTower, EncodeMatchesDenseOracle) {
  for (bool influence : {true, false}) {
    for (bool trans : {true, false}) {
      const auto edges = sorex::testing::random_edges(8, 6, 0.3, 0.4, 21);
      const auto g = sorex::testing::make_graph(edges);
      TowerConfig cfg{.d = 5, .k1 = 2, .k2 = 3, .use_social_influence = influence, .trans_item_emb = trans};
      const auto tables = init_embeddings<double>(8, 6, 5, 4, 0.5);
      const auto w = jaccard_influence(g);
      const auto state = encode(tables, build_operators<double>(g, w, cfg), cfg);
      EXPECT_LT(max_abs(state.social, oracle::social_states(edges, tables.social, 3, influence, trans)), 1e-9);
      EXPECT_LT(max_abs(state.interaction, oracle::interaction_tower(edges, tables.interaction, 2)), 1e-9);
    }
  }
}

TEST(BaseScore, Additivity) {
  const auto g = sorex::testing::toy_a();
  TowerConfig cfg{.d = 4};
  auto tables = init_embeddings<double>(3, 2, 4, 1, 0.3);
  const auto w = jaccard_influence(g);
  const auto ops = build_operators<double>(g, w, cfg);
  const auto state = encode(tables, ops, cfg);
  const auto s = base_score(state, tables, g, 1, 0, true);
  EXPECT_DOUBLE_EQ(s.g, s.g_r + s.g_s);
  const auto r = base_score(state, tables, g, 1, 0, false);
  EXPECT_EQ(r.g, r.g_r);
  EXPECT_EQ(r.g_r, s.g_r);

  // orthogonal states in both towers
  EncodedState<double> ortho{Matrix<double>::Zero(5, 2), Matrix<double>::Zero(5, 2)};
  EmbeddingTables<double> t2{Matrix<double>::Zero(5, 2), Matrix<double>::Zero(5, 2)};
  ortho.interaction(0, 0) = 1;
  ortho.interaction(3, 1) = 1;
  ortho.social(0, 0) = 1;
  t2.social(3, 1) = 1;
  EXPECT_EQ(base_score(ortho, t2, g, 0, 0, true).g, 0.0);
}
