#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "sorex/types.hpp"

namespace sorex {

enum class NodeKind : std::uint8_t { User, Item };

struct NodeRef {
  NodeKind kind = NodeKind::User;
  std::int32_t index = 0;

  static NodeRef user(std::int32_t i) { return {NodeKind::User, i}; }
  static NodeRef item(std::int32_t j) { return {NodeKind::Item, j}; }

  friend bool operator==(const NodeRef&, const NodeRef&) = default;
  friend auto operator<=>(const NodeRef&, const NodeRef&) = default;
};

enum class Relation : std::uint8_t { Interaction, Social, Joint };

/// (user index, item index) pair.
using InteractionEdge = std::pair<std::int32_t, std::int32_t>;
/// (user index, user index) pair.
using SocialEdge = std::pair<std::int32_t, std::int32_t>;

/// Immutable joint graph over users and items.
///
/// Users take global ids [0, m) and items [m, m + n), so every neighbor list
/// is a sorted span of global ids. The user-item relation is stored in both
/// directions; the social relation is symmetric with self-loops removed.
class JointGraph {
 public:
  JointGraph() = default;

  /// Builds the graph from local-index edge lists. Duplicates are merged,
  /// social edges are symmetrized and self-loops dropped. Throws
  /// std::invalid_argument on out-of-range indices.
  JointGraph(std::int32_t num_users, std::int32_t num_items,
             std::span<const InteractionEdge> interactions,
             std::span<const SocialEdge> social);

  std::int32_t num_users() const { return m_; }
  std::int32_t num_items() const { return n_; }
  std::int32_t num_nodes() const { return m_ + n_; }

  NodeId id(NodeRef ref) const { return ref.kind == NodeKind::User ? ref.index : m_ + ref.index; }
  NodeId user_id(std::int32_t u) const { return u; }
  NodeId item_id(std::int32_t j) const { return m_ + j; }
  NodeRef ref(NodeId id) const {
    return id < m_ ? NodeRef::user(id) : NodeRef::item(id - m_);
  }
  bool is_user(NodeId id) const { return id < m_; }
  bool valid(NodeRef ref) const;

  /// Sorted global-id neighbor list under a relation. Items have no social
  /// neighbors; Joint is the union for users and the interaction list for items.
  std::span<const NodeId> neighbors(NodeId node, Relation relation) const;
  std::vector<NodeRef> neighbors(NodeRef node, Relation relation) const;

  std::int32_t degree(NodeId node, Relation relation) const {
    return static_cast<std::int32_t>(neighbors(node, relation).size());
  }

  /// True when an edge of the joint graph connects a and b.
  bool adjacent(NodeId a, NodeId b) const;

  /// Number of user-item edges.
  std::size_t num_interactions() const { return interaction_index_.size() / 2; }
  /// Number of undirected social edges.
  std::size_t num_social_edges() const { return social_index_.size() / 2; }

  /// Interaction edges as (user, item) local pairs sorted lexicographically.
  std::vector<InteractionEdge> interaction_edges() const;
  /// Undirected social edges as (i, j) with i < j, sorted.
  std::vector<SocialEdge> social_edges() const;

  /// Raw CSR arrays, exposed for serialization and sparse-operator assembly.
  std::span<const std::int64_t> interaction_offsets() const { return interaction_offsets_; }
  std::span<const NodeId> interaction_index() const { return interaction_index_; }
  std::span<const std::int64_t> social_offsets() const { return social_offsets_; }
  std::span<const NodeId> social_index() const { return social_index_; }

  friend bool operator==(const JointGraph&, const JointGraph&) = default;

 private:
  std::int32_t m_ = 0;
  std::int32_t n_ = 0;
  // Over all N nodes; indices are global ids.
  std::vector<std::int64_t> interaction_offsets_{0};
  std::vector<NodeId> interaction_index_;
  // Over users only.
  std::vector<std::int64_t> social_offsets_{0};
  std::vector<NodeId> social_index_;
  // Over all N nodes.
  std::vector<std::int64_t> joint_offsets_{0};
  std::vector<NodeId> joint_index_;
};

/// Binary graph cache: magic "SRXG", u32 version, u32 m, u32 n, u32 user-item
/// nnz, u32 social nnz, then the user->item CSR (offsets m+1, item indices)
/// and the user->user CSR (offsets m+1, user indices); all little-endian u32.
inline constexpr std::uint32_t kGraphFormatVersion = 1;

void save_graph(const JointGraph& graph, const std::filesystem::path& path);
JointGraph load_graph(const std::filesystem::path& path);

}  // namespace sorex
