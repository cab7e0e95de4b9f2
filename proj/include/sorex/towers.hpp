#pragma once

// Two-tower encoders: LightGCN over the user-item bipartite graph and an
// influence-weighted LightGCN variant over the social graph.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "sorex/graph.hpp"
#include "sorex/rng.hpp"
#include "sorex/types.hpp"

namespace sorex {

struct TowerConfig {
  int d = 64;
  int k1 = 2;
  int k2 = 2;
  bool use_social_influence = true;
  bool use_social_tower = true;
  /// Use mean-pooled interactor states as item representations in the social tower.
  bool trans_item_emb = true;
  double init_scale = 0.1;
};

/// The model's only parameters: one (m + n) x d ID table per tower.
template <typename Scalar>
struct EmbeddingTables {
  Matrix<Scalar> interaction;
  Matrix<Scalar> social;

  template <typename Other>
  EmbeddingTables<Other> cast() const {
    return {interaction.template cast<Other>(), social.template cast<Other>()};
  }
};

/// i.i.d. uniform entries in [-scale, scale]; the two tables use distinct
/// streams derived from `seed`.
template <typename Scalar>
EmbeddingTables<Scalar> init_embeddings(std::int32_t m, std::int32_t n, int d, std::uint64_t seed,
                                        double scale) {
  if (scale <= 0) throw std::invalid_argument("init scale must be positive");
  if (d < 1) throw std::invalid_argument("embedding dimension must be >= 1");
  auto fill = [&](std::uint64_t tag) {
    auto rng = make_rng(seed, {tag});
    Matrix<Scalar> t(m + n, d);
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      t.data()[i] = static_cast<Scalar>((2.0 * uniform01(rng) - 1.0) * scale);
    }
    return t;
  };
  return {fill(stream::kInitInteraction), fill(stream::kInitSocial)};
}

/// Social influence per social CSR entry: phi is the square-rooted Jaccard
/// overlap of the two users' interacted items, alpha its softmax over each
/// user's social neighbors.
struct InfluenceWeights {
  std::vector<std::int64_t> offsets;  // m + 1
  std::vector<NodeId> neighbor;
  std::vector<double> phi;
  std::vector<double> alpha;

  /// phi between a user and one of its social neighbors.
  double phi_of(NodeId user, NodeId friend_id) const;
  double alpha_of(NodeId user, NodeId friend_id) const;
};

InfluenceWeights jaccard_influence(const JointGraph& graph);

/// Symmetrically normalized bipartite adjacency D^-1/2 A^R D^-1/2 over all N
/// nodes, with a unit self-loop on isolated nodes so they keep their ID embedding.
template <typename Scalar>
SparseMatrix<Scalar> interaction_operator(const JointGraph& graph) {
  const NodeId total = graph.num_nodes();
  std::vector<Eigen::Triplet<Scalar>> trips;
  trips.reserve(graph.num_interactions() * 2);
  for (NodeId q = 0; q < total; ++q) {
    const auto nq = graph.neighbors(q, Relation::Interaction);
    // An isolated node carries its own embedding through every layer.
    if (nq.empty()) trips.emplace_back(q, q, Scalar(1));
    for (NodeId i : nq) {
      const double w = 1.0 / (std::sqrt(static_cast<double>(nq.size())) *
                              std::sqrt(static_cast<double>(graph.degree(i, Relation::Interaction))));
      trips.emplace_back(q, i, static_cast<Scalar>(w));
    }
  }
  SparseMatrix<Scalar> op(total, total);
  op.setFromTriplets(trips.begin(), trips.end());
  return op;
}

/// Social aggregation over N nodes (item rows empty). Row q holds the
/// influence softmax weights, or LightGCN normalization when influence is off;
/// socially isolated users get a unit self-loop.
template <typename Scalar>
SparseMatrix<Scalar> social_operator(const JointGraph& graph, const InfluenceWeights& weights,
                                     bool use_social_influence) {
  const NodeId total = graph.num_nodes();
  std::vector<Eigen::Triplet<Scalar>> trips;
  for (NodeId q = 0; q < graph.num_users(); ++q) {
    const auto b = weights.offsets[static_cast<std::size_t>(q)];
    const auto e = weights.offsets[static_cast<std::size_t>(q) + 1];
    if (b == e) trips.emplace_back(q, q, Scalar(1));
    for (auto k = b; k < e; ++k) {
      const NodeId i = weights.neighbor[static_cast<std::size_t>(k)];
      double w;
      if (use_social_influence) {
        w = weights.alpha[static_cast<std::size_t>(k)];
      } else {
        w = 1.0 / (std::sqrt(static_cast<double>(e - b)) *
                   std::sqrt(static_cast<double>(graph.degree(i, Relation::Social))));
      }
      trips.emplace_back(q, i, static_cast<Scalar>(w));
    }
  }
  SparseMatrix<Scalar> op(total, total);
  op.setFromTriplets(trips.begin(), trips.end());
  return op;
}

/// Precomputed sparse operators for one training graph.
template <typename Scalar>
struct TowerOperators {
  SparseMatrix<Scalar> interaction;  // N x N
  SparseMatrix<Scalar> social;       // N x N, user rows only
  SparseMatrix<Scalar> user_select;  // N x N diagonal over users
  SparseMatrix<Scalar> social_lift;  // identity on users, interactor mean on warm items
  SparseMatrix<Scalar> cold_select;  // diagonal over items that keep their ID embedding
};

template <typename Scalar>
TowerOperators<Scalar> build_operators(const JointGraph& graph, const InfluenceWeights& weights,
                                       const TowerConfig& config) {
  const NodeId m = graph.num_users();
  const NodeId total = graph.num_nodes();
  TowerOperators<Scalar> ops;
  ops.interaction = interaction_operator<Scalar>(graph);
  ops.social = social_operator<Scalar>(graph, weights, config.use_social_influence);

  std::vector<Eigen::Triplet<Scalar>> users;
  std::vector<Eigen::Triplet<Scalar>> lift;
  std::vector<Eigen::Triplet<Scalar>> cold;
  for (NodeId u = 0; u < m; ++u) {
    users.emplace_back(u, u, Scalar(1));
    lift.emplace_back(u, u, Scalar(1));
  }
  for (NodeId v = m; v < total; ++v) {
    const auto interactors = graph.neighbors(v, Relation::Interaction);
    if (config.trans_item_emb && !interactors.empty()) {
      const Scalar w = Scalar(1) / static_cast<Scalar>(interactors.size());
      for (NodeId u : interactors) lift.emplace_back(v, u, w);
    } else {
      cold.emplace_back(v, v, Scalar(1));
    }
  }
  auto assemble = [total](std::vector<Eigen::Triplet<Scalar>>& t) {
    SparseMatrix<Scalar> s(total, total);
    s.setFromTriplets(t.begin(), t.end());
    return s;
  };
  ops.user_select = assemble(users);
  ops.social_lift = assemble(lift);
  ops.cold_select = assemble(cold);
  return ops;
}

/// Mean of layer states X, AX, ..., A^layers X.
template <typename Scalar, typename Derived>
Matrix<Scalar> layer_mean(const SparseMatrix<Scalar>& op, const Eigen::MatrixBase<Derived>& x0, int layers) {
  Matrix<Scalar> current = x0;
  Matrix<Scalar> sum = current;
  for (int l = 0; l < layers; ++l) {
    Matrix<Scalar> next = op * current;
    sum += next;
    current.swap(next);
  }
  return sum / static_cast<Scalar>(layers + 1);
}

/// Interaction tower output over all N nodes: rows [0, m) are user states,
/// rows [m, m + n) item states.
template <typename Scalar>
Matrix<Scalar> propagate_interaction(const Matrix<Scalar>& ids, const JointGraph& graph, int k1) {
  if (k1 < 1) throw std::invalid_argument("k1 must be >= 1");
  return layer_mean(interaction_operator<Scalar>(graph), ids, k1);
}

/// Social tower user states (m x d).
template <typename Scalar>
Matrix<Scalar> propagate_social(const Matrix<Scalar>& ids, const JointGraph& graph,
                                const InfluenceWeights& weights, int k2, bool use_social_influence = true) {
  if (k2 < 1) throw std::invalid_argument("k2 must be >= 1");
  const auto op = social_operator<Scalar>(graph, weights, use_social_influence);
  Matrix<Scalar> x0 = Matrix<Scalar>::Zero(ids.rows(), ids.cols());
  x0.topRows(graph.num_users()) = ids.topRows(graph.num_users());
  return layer_mean(op, x0, k2).topRows(graph.num_users());
}

/// Social-tower representation of an item: the mean of its interactors'
/// social states, or its own ID embedding when cold or when the
/// transformation is disabled.
template <typename Scalar>
Vector<Scalar> item_social_repr(const Matrix<Scalar>& social_users, const Matrix<Scalar>& social_ids,
                                const JointGraph& graph, std::int32_t item, bool trans_item_emb = true) {
  const NodeId v = graph.item_id(item);
  const auto interactors = graph.neighbors(v, Relation::Interaction);
  if (!trans_item_emb || interactors.empty()) return social_ids.row(v).transpose();
  Vector<Scalar> acc = Vector<Scalar>::Zero(social_ids.cols());
  for (NodeId u : interactors) acc += social_users.row(u).transpose();
  return acc / static_cast<Scalar>(interactors.size());
}

/// GNN-encoded states of both towers, each N x d and indexed by NodeId.
/// `social` holds h^s for users and the item social representation for items.
template <typename Scalar>
struct EncodedState {
  Matrix<Scalar> interaction;
  Matrix<Scalar> social;
};

template <typename Scalar>
EncodedState<Scalar> encode(const EmbeddingTables<Scalar>& tables, const TowerOperators<Scalar>& ops,
                            const TowerConfig& config) {
  EncodedState<Scalar> state;
  state.interaction = layer_mean(ops.interaction, tables.interaction, config.k1);
  const Matrix<Scalar> users = ops.user_select * tables.social;
  const Matrix<Scalar> hs = layer_mean(ops.social, users, config.k2);
  state.social = ops.social_lift * hs + ops.cold_select * tables.social;
  return state;
}

struct TowerScores {
  double g_r = 0;
  double g_s = 0;
  double g = 0;
};

/// Base two-tower score of (user, item) without explanation re-aggregation.
template <typename Scalar>
TowerScores base_score(const EncodedState<Scalar>& state, const EmbeddingTables<Scalar>& tables,
                       const JointGraph& graph, std::int32_t user, std::int32_t item, bool use_social_tower) {
  const NodeId u = graph.user_id(user);
  const NodeId v = graph.item_id(item);
  TowerScores s;
  s.g_r = static_cast<double>(state.interaction.row(u).dot(state.interaction.row(v)));
  if (use_social_tower) s.g_s = static_cast<double>(state.social.row(u).dot(tables.social.row(v)));
  s.g = s.g_r + s.g_s;
  return s;
}

}  // namespace sorex
