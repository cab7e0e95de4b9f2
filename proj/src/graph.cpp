#include "sorex/graph.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>
#include <string>

#include "sorex/binary_io.hpp"

namespace sorex {
namespace {

// Builds a CSR from (row, col) pairs, sorting and deduplicating each row.
void build_csr(std::int64_t rows, std::vector<std::pair<NodeId, NodeId>>& pairs,
               std::vector<std::int64_t>& offsets, std::vector<NodeId>& index) {
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  offsets.assign(static_cast<std::size_t>(rows) + 1, 0);
  index.clear();
  index.reserve(pairs.size());
  for (const auto& [r, c] : pairs) {
    ++offsets[static_cast<std::size_t>(r) + 1];
    index.push_back(c);
  }
  for (std::size_t i = 1; i < offsets.size(); ++i) offsets[i] += offsets[i - 1];
}

std::span<const NodeId> row(const std::vector<std::int64_t>& offsets,
                            const std::vector<NodeId>& index, NodeId r) {
  const auto b = static_cast<std::size_t>(offsets[static_cast<std::size_t>(r)]);
  const auto e = static_cast<std::size_t>(offsets[static_cast<std::size_t>(r) + 1]);
  return {index.data() + b, e - b};
}

}  // namespace

JointGraph::JointGraph(std::int32_t num_users, std::int32_t num_items,
                       std::span<const InteractionEdge> interactions,
                       std::span<const SocialEdge> social)
    : m_(num_users), n_(num_items) {
  if (num_users < 0 || num_items < 0) throw std::invalid_argument("negative node count");
  const NodeId total = m_ + n_;

  std::vector<std::pair<NodeId, NodeId>> pairs;
  pairs.reserve(interactions.size() * 2);
  for (const auto& [u, j] : interactions) {
    if (u < 0 || u >= m_ || j < 0 || j >= n_) {
      throw std::invalid_argument("interaction edge (" + std::to_string(u) + ", " +
                                  std::to_string(j) + ") out of range");
    }
    pairs.emplace_back(u, m_ + j);
    pairs.emplace_back(m_ + j, u);
  }
  build_csr(total, pairs, interaction_offsets_, interaction_index_);

  pairs.clear();
  pairs.reserve(social.size() * 2);
  for (const auto& [a, b] : social) {
    if (a < 0 || a >= m_ || b < 0 || b >= m_) {
      throw std::invalid_argument("social edge (" + std::to_string(a) + ", " +
                                  std::to_string(b) + ") out of range");
    }
    if (a == b) continue;
    pairs.emplace_back(a, b);
    pairs.emplace_back(b, a);
  }
  build_csr(m_, pairs, social_offsets_, social_index_);

  // Users' joint lists: social ids (< m) precede item ids (>= m), so
  // concatenation keeps them sorted.
  joint_offsets_.assign(static_cast<std::size_t>(total) + 1, 0);
  joint_index_.clear();
  joint_index_.reserve(interaction_index_.size() + social_index_.size());
  for (NodeId v = 0; v < total; ++v) {
    if (v < m_) {
      auto s = row(social_offsets_, social_index_, v);
      joint_index_.insert(joint_index_.end(), s.begin(), s.end());
    }
    auto r = row(interaction_offsets_, interaction_index_, v);
    joint_index_.insert(joint_index_.end(), r.begin(), r.end());
    joint_offsets_[static_cast<std::size_t>(v) + 1] = static_cast<std::int64_t>(joint_index_.size());
  }
}

bool JointGraph::valid(NodeRef ref) const {
  if (ref.index < 0) return false;
  return ref.kind == NodeKind::User ? ref.index < m_ : ref.index < n_;
}

std::span<const NodeId> JointGraph::neighbors(NodeId node, Relation relation) const {
  switch (relation) {
    case Relation::Interaction:
      return row(interaction_offsets_, interaction_index_, node);
    case Relation::Social:
      if (node >= m_) return {};
      return row(social_offsets_, social_index_, node);
    case Relation::Joint:
      return row(joint_offsets_, joint_index_, node);
  }
  return {};
}

std::vector<NodeRef> JointGraph::neighbors(NodeRef node, Relation relation) const {
  std::vector<NodeRef> out;
  for (NodeId v : neighbors(id(node), relation)) out.push_back(ref(v));
  return out;
}

bool JointGraph::adjacent(NodeId a, NodeId b) const {
  auto list = neighbors(a, Relation::Joint);
  return std::binary_search(list.begin(), list.end(), b);
}

std::vector<InteractionEdge> JointGraph::interaction_edges() const {
  std::vector<InteractionEdge> out;
  out.reserve(num_interactions());
  for (NodeId u = 0; u < m_; ++u) {
    for (NodeId j : neighbors(u, Relation::Interaction)) out.emplace_back(u, j - m_);
  }
  return out;
}

std::vector<SocialEdge> JointGraph::social_edges() const {
  std::vector<SocialEdge> out;
  out.reserve(num_social_edges());
  for (NodeId u = 0; u < m_; ++u) {
    for (NodeId v : neighbors(u, Relation::Social)) {
      if (u < v) out.emplace_back(u, v);
    }
  }
  return out;
}

void save_graph(const JointGraph& graph, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");

  const auto m = static_cast<std::uint32_t>(graph.num_users());
  const auto interactions = graph.interaction_edges();
  const auto& soc_offsets = graph.social_offsets();
  const auto& soc_index = graph.social_index();

  io::write_magic(out, "SRXG");
  io::write_pod(out, kGraphFormatVersion);
  io::write_pod(out, m);
  io::write_pod(out, static_cast<std::uint32_t>(graph.num_items()));
  io::write_pod(out, static_cast<std::uint32_t>(interactions.size()));
  io::write_pod(out, static_cast<std::uint32_t>(soc_index.size()));

  // user -> item CSR
  std::vector<std::uint32_t> offsets(m + 1, 0);
  std::vector<std::uint32_t> index;
  index.reserve(interactions.size());
  for (const auto& [u, j] : interactions) {
    ++offsets[static_cast<std::size_t>(u) + 1];
    index.push_back(static_cast<std::uint32_t>(j));
  }
  for (std::size_t i = 1; i < offsets.size(); ++i) offsets[i] += offsets[i - 1];
  io::write_array(out, offsets.data(), offsets.size());
  io::write_array(out, index.data(), index.size());

  // user -> user CSR
  offsets.assign(soc_offsets.begin(), soc_offsets.end());
  index.assign(soc_index.begin(), soc_index.end());
  io::write_array(out, offsets.data(), offsets.size());
  io::write_array(out, index.data(), index.size());
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

JointGraph load_graph(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  io::expect_magic(in, "SRXG");
  const auto version = io::read_pod<std::uint32_t>(in);
  if (version != kGraphFormatVersion) {
    throw io::FormatError("unsupported graph cache version " + std::to_string(version));
  }
  const auto m = io::read_pod<std::uint32_t>(in);
  const auto n = io::read_pod<std::uint32_t>(in);
  const auto inter_nnz = io::read_pod<std::uint32_t>(in);
  const auto soc_nnz = io::read_pod<std::uint32_t>(in);

  auto read_csr = [&](std::uint32_t nnz) {
    std::vector<std::uint32_t> offsets(m + 1);
    std::vector<std::uint32_t> index(nnz);
    io::read_array(in, offsets.data(), offsets.size());
    io::read_array(in, index.data(), index.size());
    if (offsets.front() != 0 || offsets.back() != nnz) throw io::FormatError("corrupt CSR offsets");
    std::vector<std::pair<std::int32_t, std::int32_t>> edges;
    edges.reserve(nnz);
    for (std::uint32_t u = 0; u < m; ++u) {
      if (offsets[u] > offsets[u + 1]) throw io::FormatError("corrupt CSR offsets");
      for (std::uint32_t e = offsets[u]; e < offsets[u + 1]; ++e) {
        edges.emplace_back(static_cast<std::int32_t>(u), static_cast<std::int32_t>(index[e]));
      }
    }
    return edges;
  };
  const auto interactions = read_csr(inter_nnz);
  const auto social = read_csr(soc_nnz);
  return JointGraph(static_cast<std::int32_t>(m), static_cast<std::int32_t>(n), interactions, social);
}

}  // namespace sorex
