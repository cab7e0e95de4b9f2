#pragma once

// Small random graphs and a planted-community dataset for tests.

#include <algorithm>
#include <cstdint>
#include <set>
#include <utility>
#include <vector>

#include "sorex/graph.hpp"
#include "sorex/rng.hpp"
#include "support/oracles.hpp"

namespace sorex::testing {

/// u0, u1, u2; v0, v1; u0-v0, u1-v0, u1-v1, u2-v1; friends u0-u1, u1-u2.
inline JointGraph toy_a() {
  const std::vector<InteractionEdge> inter{{0, 0}, {1, 0}, {1, 1}, {2, 1}};
  const std::vector<SocialEdge> social{{0, 1}, {1, 2}};
  return JointGraph(3, 2, inter, social);
}

/// Random bipartite + social graph; every user gets at least one interaction.
inline JointGraph random_graph(std::int32_t m, std::int32_t n, double p_inter, double p_social, std::uint64_t seed) {
  auto rng = make_rng(seed, {0xabc});
  std::vector<InteractionEdge> inter;
  std::vector<SocialEdge> social;
  for (std::int32_t u = 0; u < m; ++u) {
    bool any = false;
    for (std::int32_t j = 0; j < n; ++j) {
      if (uniform01(rng) < p_inter) {
        inter.emplace_back(u, j);
        any = true;
      }
    }
    if (!any) inter.emplace_back(u, static_cast<std::int32_t>(uniform_below(rng, static_cast<std::uint64_t>(n))));
    for (std::int32_t q = u + 1; q < m; ++q) {
      if (uniform01(rng) < p_social) social.emplace_back(u, q);
    }
  }
  return JointGraph(m, n, inter, social);
}

/// Users and items belong to `communities` groups; interactions and
/// friendships fall inside the group with probability `purity`.
inline JointGraph planted_graph(std::int32_t m, std::int32_t n, int communities, int per_user, int friends,
                                double purity, std::uint64_t seed) {
  auto rng = make_rng(seed, {0xdef});
  auto group_of_user = [&](std::int32_t u) { return u % communities; };
  std::vector<std::vector<std::int32_t>> items_of(static_cast<std::size_t>(communities));
  for (std::int32_t j = 0; j < n; ++j) items_of[static_cast<std::size_t>(j % communities)].push_back(j);
  std::vector<std::vector<std::int32_t>> users_of(static_cast<std::size_t>(communities));
  for (std::int32_t u = 0; u < m; ++u) users_of[static_cast<std::size_t>(group_of_user(u))].push_back(u);

  std::set<InteractionEdge> inter;
  std::set<SocialEdge> social;
  for (std::int32_t u = 0; u < m; ++u) {
    const auto g = static_cast<std::size_t>(group_of_user(u));
    for (int t = 0; t < per_user; ++t) {
      std::size_t c = g;
      if (uniform01(rng) >= purity) c = uniform_below(rng, static_cast<std::uint64_t>(communities));
      const auto& pool = items_of[c];
      // Popularity skew within a group: lower positions are likelier.
      const double r = uniform01(rng);
      const auto pos = static_cast<std::size_t>(r * r * static_cast<double>(pool.size()));
      inter.emplace(u, pool[std::min(pos, pool.size() - 1)]);
    }
    for (int f = 0; f < friends; ++f) {
      std::size_t c = g;
      if (uniform01(rng) >= purity) c = uniform_below(rng, static_cast<std::uint64_t>(communities));
      const auto& pool = users_of[c];
      const auto q = pool[uniform_below(rng, pool.size())];
      if (q != u) social.emplace(std::min(u, q), std::max(u, q));
    }
  }
  const std::vector<InteractionEdge> ie(inter.begin(), inter.end());
  const std::vector<SocialEdge> se(social.begin(), social.end());
  return JointGraph(m, n, ie, se);
}

/// Raw random edge lists, possibly with repeated edges and both social
/// orientations; users may end up without interactions.
inline oracle::EdgeLists random_edges(int m, int n, double p_inter, double p_social, std::uint64_t seed) {
  auto rng = make_rng(seed, {0x5eed});
  oracle::EdgeLists e{m, n, {}, {}};
  for (int u = 0; u < m; ++u) {
    for (int j = 0; j < n; ++j)
      if (uniform01(rng) < p_inter) e.inter.emplace_back(u, j);
    for (int q = 0; q < m; ++q)
      if (q != u && uniform01(rng) < p_social / 2) e.social.emplace_back(u, q);
  }
  if (!e.inter.empty() && uniform01(rng) < 0.5) e.inter.push_back(e.inter.front());
  return e;
}

inline JointGraph make_graph(const oracle::EdgeLists& e) {
  std::vector<InteractionEdge> inter(e.inter.begin(), e.inter.end());
  std::vector<SocialEdge> social(e.social.begin(), e.social.end());
  return JointGraph(e.m, e.n, inter, social);
}

inline oracle::EdgeLists toy_a_edges() { return {3, 2, {{0, 0}, {1, 0}, {1, 1}, {2, 1}}, {{0, 1}, {1, 2}}}; }

}  // namespace sorex::testing
