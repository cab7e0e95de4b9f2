#include "sorex/towers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace sorex {
namespace {

std::size_t intersection_size(std::span<const NodeId> a, std::span<const NodeId> b) {
  std::size_t count = 0;
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j) {
      ++i;
    } else if (*j < *i) {
      ++j;
    } else {
      ++count;
      ++i;
      ++j;
    }
  }
  return count;
}

}  // namespace

double InfluenceWeights::phi_of(NodeId user, NodeId friend_id) const {
  const auto b = neighbor.begin() + offsets[static_cast<std::size_t>(user)];
  const auto e = neighbor.begin() + offsets[static_cast<std::size_t>(user) + 1];
  const auto it = std::lower_bound(b, e, friend_id);
  if (it == e || *it != friend_id) return std::numeric_limits<double>::quiet_NaN();
  return phi[static_cast<std::size_t>(it - neighbor.begin())];
}

double InfluenceWeights::alpha_of(NodeId user, NodeId friend_id) const {
  const auto b = neighbor.begin() + offsets[static_cast<std::size_t>(user)];
  const auto e = neighbor.begin() + offsets[static_cast<std::size_t>(user) + 1];
  const auto it = std::lower_bound(b, e, friend_id);
  if (it == e || *it != friend_id) return std::numeric_limits<double>::quiet_NaN();
  return alpha[static_cast<std::size_t>(it - neighbor.begin())];
}

InfluenceWeights jaccard_influence(const JointGraph& graph) {
  InfluenceWeights w;
  const auto offsets = graph.social_offsets();
  const auto index = graph.social_index();
  w.offsets.assign(offsets.begin(), offsets.end());
  w.neighbor.assign(index.begin(), index.end());
  w.phi.resize(index.size());
  w.alpha.resize(index.size());

  for (NodeId q = 0; q < graph.num_users(); ++q) {
    const auto items_q = graph.neighbors(q, Relation::Interaction);
    const auto b = static_cast<std::size_t>(offsets[static_cast<std::size_t>(q)]);
    const auto e = static_cast<std::size_t>(offsets[static_cast<std::size_t>(q) + 1]);
    double max_phi = 0.0;
    for (std::size_t k = b; k < e; ++k) {
      const auto items_i = graph.neighbors(index[k], Relation::Interaction);
      const auto inter = intersection_size(items_q, items_i);
      const auto uni = items_q.size() + items_i.size() - inter;
      w.phi[k] = uni == 0 ? 0.0 : std::sqrt(static_cast<double>(inter) / static_cast<double>(uni));
      max_phi = std::max(max_phi, w.phi[k]);
    }
    double z = 0.0;
    for (std::size_t k = b; k < e; ++k) {
      w.alpha[k] = std::exp(w.phi[k] - max_phi);
      z += w.alpha[k];
    }
    for (std::size_t k = b; k < e; ++k) w.alpha[k] /= z;
  }
  return w;
}

}  // namespace sorex
