#pragma once

// Candidate-aware hop-wise attention over sampled ego-paths and the
// explanation-enhanced user representation built from it.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "sorex/egopath.hpp"
#include "sorex/types.hpp"

namespace sorex {

/// Everything one tower needs to score a candidate: encoded states used for
/// similarity and attention, the ID table re-aggregated into the user, and
/// the matrix whose candidate row the final user vector is dotted with.
template <typename Scalar>
struct TowerView {
  const Matrix<Scalar>* states = nullptr;
  const Matrix<Scalar>* ids = nullptr;
  const Matrix<Scalar>* target = nullptr;
};

/// Transformer-style attention: cos(state_q, state_candidate) / sqrt(d).
template <typename Scalar>
double node_attention(const Matrix<Scalar>& states, NodeId q, NodeId candidate) {
  return cosine(states.row(q), states.row(candidate)) / std::sqrt(static_cast<double>(states.cols()));
}

struct HopEntry {
  int path = 0;
  NodeId node = kEmpty;
  double raw = 0;
  double alpha = 0;
};

/// hops[l] lists every non-empty slot occurrence at hop l + 1 across the
/// paths taking part; repeated paths give separate entries.
struct HopAttention {
  std::vector<std::vector<HopEntry>> hops;

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& h : hops) n += h.size();
    return n;
  }
};

/// Raw attention for every non-empty slot of the listed paths.
template <typename Scalar>
HopAttention hop_attention(const WalkPool& pool, std::span<const int> paths, const Matrix<Scalar>& states,
                           NodeId candidate) {
  HopAttention att;
  att.hops.resize(static_cast<std::size_t>(pool.k));
  for (int t : paths) {
    const auto& slots = pool.paths[static_cast<std::size_t>(t)].slots;
    for (std::size_t l = 0; l < slots.size(); ++l) {
      if (slots[l] == kEmpty) continue;
      att.hops[l].push_back({t, slots[l], node_attention(states, slots[l], candidate), 0.0});
    }
  }
  return att;
}

/// Softmax of the raw attentions within each hop. When `path_log_weights` is
/// given (indexed by path), entry logits become raw + log_weight[path].
inline void hopwise_normalize(HopAttention& att, std::span<const double> path_log_weights = {}) {
  for (auto& hop : att.hops) {
    if (hop.empty()) continue;
    double max_logit = -std::numeric_limits<double>::infinity();
    auto logit = [&](const HopEntry& e) {
      return path_log_weights.empty() ? e.raw : e.raw + path_log_weights[static_cast<std::size_t>(e.path)];
    };
    for (const auto& e : hop) max_logit = std::max(max_logit, logit(e));
    double z = 0;
    for (auto& e : hop) {
      e.alpha = std::exp(logit(e) - max_logit);
      z += e.alpha;
    }
    for (auto& e : hop) e.alpha /= z;
  }
}

/// h_hat = (h + sum_q alpha_q e_q) / (k + 1), with e_q rows of the ID table.
/// With `renorm_empty`, an explanation without entries returns h unchanged.
template <typename Scalar, typename Derived>
Vector<Scalar> reaggregate(const Eigen::MatrixBase<Derived>& h, const HopAttention& att, const Matrix<Scalar>& ids,
                           int k, bool renorm_empty = false) {
  Vector<Scalar> acc = h;
  if (renorm_empty && att.size() == 0) return acc;
  for (const auto& hop : att.hops) {
    for (const auto& e : hop) acc += static_cast<Scalar>(e.alpha) * ids.row(e.node).transpose();
  }
  return acc / static_cast<Scalar>(k + 1);
}

struct ExplainedScore {
  std::int32_t candidate = 0;
  double g_r = 0;
  double g_s = 0;
  double g = 0;
};

template <typename Scalar, typename A, typename B, typename C, typename D>
ExplainedScore explained_score(std::int32_t candidate, const Eigen::MatrixBase<A>& h_hat_r,
                               const Eigen::MatrixBase<B>& h_hat_s, const Eigen::MatrixBase<C>& c_r,
                               const Eigen::MatrixBase<D>& e_s, bool use_social_tower) {
  ExplainedScore s;
  s.candidate = candidate;
  s.g_r = static_cast<double>(h_hat_r.dot(c_r));
  if (use_social_tower) s.g_s = static_cast<double>(h_hat_s.dot(e_s));
  s.g = s.g_r + s.g_s;
  return s;
}

/// Similarity-derived sampling probabilities of every pool path.
template <typename Scalar>
std::vector<double> path_probabilities(const WalkPool& pool, const Matrix<Scalar>& states, NodeId candidate,
                                       int divisor) {
  std::vector<double> probs;
  probs.reserve(pool.paths.size());
  for (const auto& path : pool.paths) {
    const double s = path_similarity(states, path, candidate, divisor);
    probs.push_back(divisor == pool.k ? rescale(s) : std::clamp((s + 1.0) / 2.0, 0.0, 1.0));
  }
  return probs;
}

}  // namespace sorex
