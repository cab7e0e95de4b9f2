#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "sorex/autodiff.hpp"
#include "sorex/egopath.hpp"
#include "sorex/graph.hpp"
#include "sorex/reaggregate.hpp"
#include "sorex/rng.hpp"
#include "sorex/towers.hpp"

namespace sorex {

struct ModelConfig {
  TowerConfig tower;
  EgoPathConfig egopath;
  bool reaggregation = true;
  /// Leave the user vector unscaled when a candidate's explanation is empty.
  bool renorm_empty = false;
};

template <typename Scalar>
struct Model {
  ModelConfig config;
  EmbeddingTables<Scalar> tables;
};

/// Graph-derived structure shared by training and scoring: influence weights
/// and sparse operators, computed once from training interactions.
template <typename Scalar>
struct ModelContext {
  const JointGraph* graph = nullptr;
  InfluenceWeights influence;
  TowerOperators<Scalar> ops;

  ModelContext(const JointGraph& g, const TowerConfig& config)
      : graph(&g), influence(jaccard_influence(g)), ops(build_operators<Scalar>(g, influence, config)) {}
};

/// Counter-based uniforms keyed by (tower, candidate, path, salt), so a
/// candidate's draws do not depend on evaluation order or threading.
struct DrawSource {
  std::uint64_t key = 0;

  double uniform(Tower tower, std::int32_t item, int path, std::uint64_t salt = 0) const {
    std::uint64_t h = splitmix64(key ^ splitmix64(static_cast<std::uint64_t>(tower) + 1));
    h = splitmix64(h ^ splitmix64(static_cast<std::uint64_t>(static_cast<std::uint32_t>(item)) + 0x51ed27ULL));
    h = splitmix64(h ^ splitmix64(static_cast<std::uint64_t>(path) + 0x2545f491ULL));
    h = splitmix64(h ^ salt);
    double u = static_cast<double>(h >> 11) * 0x1.0p-53;
    return u == 0.0 ? 0x1.0p-54 : u;
  }
  double logistic(Tower tower, std::int32_t item, int path) const {
    const double u = uniform(tower, item, path, 0x10c15f1cULL);
    return std::log(u) - std::log1p(-u);
  }
};

/// One user-item pair scored in a step; `pool` indexes BatchPlan::pools.
struct PairRef {
  std::int32_t user = 0;
  std::int32_t item = 0;
  int pool = 0;
};

/// Every stochastic choice of one optimization step, fixed up front so the
/// loss is a deterministic function of the embedding tables.
struct BatchPlan {
  std::vector<WalkPool> pools;
  std::vector<PairRef> pairs;
  std::vector<std::pair<int, int>> triples;                // (positive pair, negative pair)
  std::vector<std::array<std::int32_t, 3>> friend_triples;  // (u, u+, u-)
  SampleMode mode = SampleMode::Relaxed;
  double tau = 1.0;
  /// Per tower, per pair, per pool path: logistic noise (relaxed) or a uniform (hard).
  std::array<std::vector<double>, 2> noise;
  std::array<std::vector<double>, 2> uniforms;
};

struct LossWeights {
  double gamma = 0.5;
  double lambda = 0.001;
};

template <typename Scalar>
struct LossVars {
  using Var = typename Tape<Scalar>::Var;
  Var main_r, main_s, main_fused, aux, reg, total;
  /// Per-pair scores in plan order.
  Var g_r, g_s, g;
  Var social_users;  // N x d social-tower states (user rows)
};

/// Keeps sparse constants referenced by tape nodes alive until backward.
template <typename Scalar>
struct ForwardArena {
  std::deque<SparseMatrix<Scalar>> sparse;
};

namespace detail {

template <typename Scalar>
typename Tape<Scalar>::Var layer_mean(Tape<Scalar>& tape, const SparseMatrix<Scalar>& op,
                                      typename Tape<Scalar>::Var x0, int layers) {
  auto current = x0;
  auto sum = x0;
  for (int l = 0; l < layers; ++l) {
    current = tape.spmm(op, current);
    sum = tape.add(sum, current);
  }
  return tape.affine(sum, Scalar(1) / static_cast<Scalar>(layers + 1));
}

template <typename Scalar>
typename Tape<Scalar>::Var bpr(Tape<Scalar>& tape, typename Tape<Scalar>::Var scores,
                               const std::vector<std::pair<int, int>>& triples) {
  std::vector<int> pos;
  std::vector<int> neg;
  pos.reserve(triples.size());
  neg.reserve(triples.size());
  for (const auto& [a, b] : triples) {
    pos.push_back(a);
    neg.push_back(b);
  }
  auto margin = tape.sub(tape.gather(scores, std::move(pos)), tape.gather(scores, std::move(neg)));
  return tape.affine(tape.sum(tape.log_sigmoid(margin)), Scalar(-1));
}

/// Explained scores of every plan pair in one tower.
template <typename Scalar>
typename Tape<Scalar>::Var explained_tower(Tape<Scalar>& tape, ForwardArena<Scalar>& arena,
                                           typename Tape<Scalar>::Var states, typename Tape<Scalar>::Var ids,
                                           typename Tape<Scalar>::Var target, const JointGraph& graph,
                                           const ModelConfig& config, const BatchPlan& plan, Tower tower) {
  using Var = typename Tape<Scalar>::Var;
  const int k = config.egopath.k;
  const int divisor = config.egopath.similarity_divisor();
  const auto d = static_cast<double>(states.cols());
  const auto npairs = static_cast<int>(plan.pairs.size());
  const auto t_index = static_cast<std::size_t>(tower);

  // All non-empty slots of every pair's pool, grouped by (pair, path).
  std::vector<int> slot_node;
  std::vector<int> slot_cand;
  std::vector<int> slot_path;  // global path id = pair * n_w + t
  std::vector<int> slot_hop;
  std::vector<int> path_offsets{0};
  std::vector<int> path_pair;
  for (int c = 0; c < npairs; ++c) {
    const auto& pr = plan.pairs[static_cast<std::size_t>(c)];
    const auto& pool = plan.pools[static_cast<std::size_t>(pr.pool)];
    const NodeId cand = graph.item_id(pr.item);
    for (const auto& path : pool.paths) {
      const int global_path = static_cast<int>(path_pair.size());
      for (int l = 0; l < k; ++l) {
        const NodeId q = path.slots[static_cast<std::size_t>(l)];
        if (q == kEmpty) continue;
        slot_node.push_back(q);
        slot_cand.push_back(cand);
        slot_path.push_back(global_path);
        slot_hop.push_back(l);
      }
      path_pair.push_back(c);
      path_offsets.push_back(static_cast<int>(slot_node.size()));
    }
  }
  const auto nslots = static_cast<int>(slot_node.size());
  const auto npaths = static_cast<int>(path_pair.size());

  Var cosines = tape.row_cosine(states, slot_node, states, slot_cand);
  std::vector<int> identity(static_cast<std::size_t>(nslots));
  for (int s = 0; s < nslots; ++s) identity[static_cast<std::size_t>(s)] = s;
  Var inv_div = tape.constant(Matrix<Scalar>::Constant(nslots, 1, Scalar(1) / static_cast<Scalar>(divisor)));
  Var similarity = tape.weighted_row_sum(cosines, identity, inv_div, path_offsets);
  Var probs = tape.affine(similarity, Scalar(0.5), Scalar(0.5));

  // Which paths take part, and with which log-weight.
  std::vector<char> active(static_cast<std::size_t>(npaths), 1);
  std::optional<Var> log_draw;
  if (plan.mode == SampleMode::Relaxed) {
    std::vector<Scalar> noise(plan.noise[t_index].begin(), plan.noise[t_index].end());
    log_draw = tape.concrete_log_draw(probs, std::move(noise), static_cast<Scalar>(plan.tau),
                                      static_cast<Scalar>(kProbabilityClamp));
  } else if (plan.mode == SampleMode::Hard) {
    for (int p = 0; p < npaths; ++p) {
      active[static_cast<std::size_t>(p)] =
          plan.uniforms[t_index][static_cast<std::size_t>(p)] < static_cast<double>(probs.value()(p, 0));
    }
  } else {
    const int keep = config.egopath.topk.value_or(config.egopath.n_w);
    for (int c = 0, p0 = 0; c < npairs; ++c) {
      const auto& pool = plan.pools[static_cast<std::size_t>(plan.pairs[static_cast<std::size_t>(c)].pool)];
      std::vector<double> pc(pool.paths.size());
      for (std::size_t t = 0; t < pc.size(); ++t) pc[t] = static_cast<double>(probs.value()(p0 + static_cast<int>(t), 0));
      const auto top = sample_topk(pc, keep);
      for (std::size_t t = 0; t < pc.size(); ++t) active[static_cast<std::size_t>(p0) + t] = 0;
      for (int t : top.kept) active[static_cast<std::size_t>(p0 + t)] = 1;
      p0 += static_cast<int>(pool.paths.size());
    }
  }

  // Re-order participating slots by (pair, hop) for the hop-wise softmax.
  std::vector<int> order;
  order.reserve(static_cast<std::size_t>(nslots));
  std::vector<int> hop_offsets{0};
  std::vector<int> pair_offsets{0};
  {
    std::vector<std::vector<int>> by_hop(static_cast<std::size_t>(k));
    int p = 0;
    for (int c = 0; c < npairs; ++c) {
      for (auto& h : by_hop) h.clear();
      const auto& pool = plan.pools[static_cast<std::size_t>(plan.pairs[static_cast<std::size_t>(c)].pool)];
      for (std::size_t t = 0; t < pool.paths.size(); ++t, ++p) {
        if (!active[static_cast<std::size_t>(p)]) continue;
        for (int s = path_offsets[static_cast<std::size_t>(p)]; s < path_offsets[static_cast<std::size_t>(p) + 1]; ++s) {
          by_hop[static_cast<std::size_t>(slot_hop[static_cast<std::size_t>(s)])].push_back(s);
        }
      }
      for (const auto& h : by_hop) {
        order.insert(order.end(), h.begin(), h.end());
        hop_offsets.push_back(static_cast<int>(order.size()));
      }
      pair_offsets.push_back(static_cast<int>(order.size()));
    }
  }

  Var logits = tape.affine(tape.gather(cosines, order), static_cast<Scalar>(1.0 / std::sqrt(d)));
  if (log_draw) {
    std::vector<int> owner;
    owner.reserve(order.size());
    for (int s : order) owner.push_back(slot_path[static_cast<std::size_t>(s)]);
    logits = tape.add(logits, tape.gather(*log_draw, std::move(owner)));
  }
  Var alpha = tape.segment_softmax(logits, std::move(hop_offsets));
  std::vector<int> nodes;
  nodes.reserve(order.size());
  for (int s : order) nodes.push_back(slot_node[static_cast<std::size_t>(s)]);
  Var aggregated = tape.weighted_row_sum(ids, std::move(nodes), alpha, pair_offsets);

  std::vector<int> users;
  std::vector<int> cands;
  users.reserve(static_cast<std::size_t>(npairs));
  cands.reserve(static_cast<std::size_t>(npairs));
  for (const auto& pr : plan.pairs) {
    users.push_back(graph.user_id(pr.user));
    cands.push_back(graph.item_id(pr.item));
  }
  Var h = tape.gather(states, users);
  Var h_hat;
  if (config.renorm_empty) {
    std::vector<Eigen::Triplet<Scalar>> diag;
    for (int c = 0; c < npairs; ++c) {
      const bool empty = pair_offsets[static_cast<std::size_t>(c)] == pair_offsets[static_cast<std::size_t>(c) + 1];
      diag.emplace_back(c, c, empty ? Scalar(1) : Scalar(1) / static_cast<Scalar>(k + 1));
    }
    auto& scale = arena.sparse.emplace_back(npairs, npairs);
    scale.setFromTriplets(diag.begin(), diag.end());
    h_hat = tape.spmm(scale, tape.add(h, aggregated));
  } else {
    h_hat = tape.affine(tape.add(h, aggregated), Scalar(1) / static_cast<Scalar>(k + 1));
  }
  std::vector<int> rows(static_cast<std::size_t>(npairs));
  for (int c = 0; c < npairs; ++c) rows[static_cast<std::size_t>(c)] = c;
  return tape.row_dot(h_hat, std::move(rows), target, std::move(cands));
}

}  // namespace detail

/// Records the full multi-task objective for one plan on `tape`.
template <typename Scalar>
LossVars<Scalar> forward_loss(Tape<Scalar>& tape, ForwardArena<Scalar>& arena,
                              typename Tape<Scalar>::Var interaction_ids, typename Tape<Scalar>::Var social_ids,
                              const ModelContext<Scalar>& ctx, const ModelConfig& config, const BatchPlan& plan,
                              const LossWeights& weights) {
  using Var = typename Tape<Scalar>::Var;
  const auto& graph = *ctx.graph;
  const auto& ops = ctx.ops;
  const bool social_on = config.tower.use_social_tower;
  LossVars<Scalar> out;

  Var zr = detail::layer_mean(tape, ops.interaction, interaction_ids, config.tower.k1);
  Var zs;
  if (social_on) {
    Var users = tape.spmm(ops.user_select, social_ids);
    out.social_users = detail::layer_mean(tape, ops.social, users, config.tower.k2);
    zs = tape.add(tape.spmm(ops.social_lift, out.social_users), tape.spmm(ops.cold_select, social_ids));
  }

  std::vector<int> users;
  std::vector<int> cands;
  for (const auto& pr : plan.pairs) {
    users.push_back(graph.user_id(pr.user));
    cands.push_back(graph.item_id(pr.item));
  }

  if (config.reaggregation) {
    out.g_r = detail::explained_tower(tape, arena, zr, interaction_ids, zr, graph, config, plan, Tower::Interaction);
    if (social_on) {
      out.g_s = detail::explained_tower(tape, arena, zs, social_ids, social_ids, graph, config, plan, Tower::Social);
    }
  } else {
    out.g_r = tape.row_dot(zr, users, zr, cands);
    if (social_on) out.g_s = tape.row_dot(zs, users, social_ids, cands);
  }

  const Var zero = tape.constant(Matrix<Scalar>::Zero(1, 1));
  out.main_r = detail::bpr(tape, out.g_r, plan.triples);
  if (social_on) {
    out.g = tape.add(out.g_r, out.g_s);
    out.main_s = detail::bpr(tape, out.g_s, plan.triples);
  } else {
    out.g = out.g_r;
    out.main_s = zero;
  }
  out.main_fused = detail::bpr(tape, out.g, plan.triples);

  if (social_on && weights.gamma > 0 && !plan.friend_triples.empty()) {
    std::vector<int> u;
    std::vector<int> pos;
    std::vector<int> neg;
    for (const auto& t : plan.friend_triples) {
      u.push_back(t[0]);
      pos.push_back(t[1]);
      neg.push_back(t[2]);
    }
    Var f_pos = tape.row_dot(out.social_users, u, out.social_users, std::move(pos));
    Var f_neg = tape.row_dot(out.social_users, std::move(u), out.social_users, std::move(neg));
    out.aux = tape.affine(tape.sum(tape.log_sigmoid(tape.sub(f_pos, f_neg))), Scalar(-1));
  } else {
    out.aux = zero;
  }

  out.reg = tape.affine(tape.add(tape.squared_norm(interaction_ids), tape.squared_norm(social_ids)),
                        static_cast<Scalar>(weights.lambda));
  Var main = tape.add(tape.add(out.main_r, out.main_s), out.main_fused);
  out.total = tape.add(tape.add(main, tape.affine(out.aux, static_cast<Scalar>(weights.gamma))), out.reg);
  return out;
}

enum class Removal : std::uint8_t { None, Explanation, Random };

/// Which paths one candidate kept in one tower, with their probabilities.
struct TowerExplanation {
  std::vector<double> probs;
  std::vector<int> kept;
};

struct CandidateExplanation {
  std::int32_t item = 0;
  std::array<TowerExplanation, 2> towers;  // indexed by Tower
};

/// Inference-time scorer over a fixed model. Encodes both towers once and
/// scores many candidates against one shared walk pool per user.
template <typename Scalar>
class Scorer {
 public:
  struct Options {
    SampleMode mode = SampleMode::Hard;
    double tau = 0.3;
    Removal removal = Removal::None;
  };

  Scorer(const ModelContext<Scalar>& ctx, const Model<Scalar>& model)
      : ctx_(&ctx), model_(&model), state_(encode(model.tables, ctx.ops, model.config.tower)) {}

  const EncodedState<Scalar>& state() const { return state_; }
  const ModelConfig& config() const { return model_->config; }
  const ModelContext<Scalar>& context() const { return *ctx_; }

  /// Evaluation-time sampling: hard draws, or relaxed at the final temperature.
  Options eval_options(Removal removal = Removal::None) const {
    Options o;
    o.mode = config().egopath.hard_eval ? SampleMode::Hard : SampleMode::Relaxed;
    o.tau = config().egopath.tau_end;
    o.removal = removal;
    return o;
  }
  const Model<Scalar>& model() const { return *model_; }

  /// Base two-tower scores for many items.
  std::vector<ExplainedScore> base_scores(std::int32_t user, std::span<const std::int32_t> items) const {
    std::vector<ExplainedScore> out;
    out.reserve(items.size());
    for (auto j : items) {
      const auto s = base_score(state_, model_->tables, *ctx_->graph, user, j, config().tower.use_social_tower);
      out.push_back({j, s.g_r, s.g_s, s.g});
    }
    return out;
  }

  /// Explained scores of `items` for `user`. When `removal` is set, the
  /// re-aggregation uses the complement of the sampled subset (Explanation)
  /// or a uniformly random subset of the same size (Random). `record`, when
  /// given, receives the sampled (not the removed) subsets.
  std::vector<ExplainedScore> score(std::int32_t user, const WalkPool& pool, std::span<const std::int32_t> items,
                                    const DrawSource& draws, const Options& options,
                                    std::vector<CandidateExplanation>* record = nullptr) const {
    const auto& cfg = config();
    if (!cfg.reaggregation) {
      if (record) record->assign(items.size(), {});
      return base_scores(user, items);
    }
    std::vector<ExplainedScore> out(items.size());
    if (record) record->assign(items.size(), {});
    for (std::size_t c = 0; c < items.size(); ++c) {
      out[c].candidate = items[c];
      if (record) (*record)[c].item = items[c];
    }
    score_tower(Tower::Interaction, user, pool, items, draws, options, out, record);
    if (cfg.tower.use_social_tower) score_tower(Tower::Social, user, pool, items, draws, options, out, record);
    for (auto& s : out) s.g = s.g_r + s.g_s;
    return out;
  }

  TowerView<Scalar> view(Tower tower) const {
    if (tower == Tower::Interaction) return {&state_.interaction, &model_->tables.interaction, &state_.interaction};
    return {&state_.social, &model_->tables.social, &model_->tables.social};
  }

 private:
  void score_tower(Tower tower, std::int32_t user, const WalkPool& pool, std::span<const std::int32_t> items,
                   const DrawSource& draws, const Options& options, std::vector<ExplainedScore>& out,
                   std::vector<CandidateExplanation>* record) const {
    const auto& cfg = config();
    const auto& graph = *ctx_->graph;
    const auto tv = view(tower);
    const int k = cfg.egopath.k;
    const int divisor = cfg.egopath.similarity_divisor();
    const auto n_w = static_cast<int>(pool.paths.size());
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(tv.states->cols()));

    // Distinct pool nodes and per-slot local indices (-1 for padding).
    std::vector<NodeId> nodes;
    std::vector<int> slot_local(static_cast<std::size_t>(n_w * k), -1);
    {
      std::vector<NodeId> sorted;
      for (const auto& p : pool.paths)
        for (NodeId q : p.slots)
          if (q != kEmpty) sorted.push_back(q);
      std::sort(sorted.begin(), sorted.end());
      sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
      nodes = std::move(sorted);
      for (int t = 0; t < n_w; ++t) {
        for (int l = 0; l < k; ++l) {
          const NodeId q = pool.paths[static_cast<std::size_t>(t)].slots[static_cast<std::size_t>(l)];
          if (q == kEmpty) continue;
          slot_local[static_cast<std::size_t>(t * k + l)] =
              static_cast<int>(std::lower_bound(nodes.begin(), nodes.end(), q) - nodes.begin());
        }
      }
    }
    const auto nq = static_cast<Eigen::Index>(nodes.size());
    const auto nc = static_cast<Eigen::Index>(items.size());
    const auto d = tv.states->cols();

    auto normalized = [](auto row) -> RowVector<double> {
      RowVector<double> r = row.template cast<double>();
      const double n = r.norm();
      return n == 0 ? RowVector<double>(RowVector<double>::Zero(r.size())) : RowVector<double>(r / n);
    };
    Matrix<double> node_dir(nq, d);
    Matrix<double> node_ids(nq, d);
    for (Eigen::Index i = 0; i < nq; ++i) {
      node_dir.row(i) = normalized(tv.states->row(nodes[static_cast<std::size_t>(i)]));
      node_ids.row(i) = tv.ids->row(nodes[static_cast<std::size_t>(i)]).template cast<double>();
    }
    Matrix<double> cand_dir(nc, d);
    Matrix<double> cand_target(nc, d);
    for (Eigen::Index c = 0; c < nc; ++c) {
      const NodeId v = graph.item_id(items[static_cast<std::size_t>(c)]);
      cand_dir.row(c) = normalized(tv.states->row(v));
      cand_target.row(c) = tv.target->row(v).template cast<double>();
    }
    const Matrix<double> cos = (node_dir * cand_dir.transpose()).cwiseMax(-1.0).cwiseMin(1.0);  // nq x nc
    const Matrix<double> contrib = node_ids * cand_target.transpose();   // nq x nc
    const Vector<double> base = cand_target * tv.states->row(graph.user_id(user)).template cast<double>().transpose();

    std::vector<double> probs(static_cast<std::size_t>(n_w));
    std::vector<double> log_w(static_cast<std::size_t>(n_w));
    std::vector<char> active(static_cast<std::size_t>(n_w));
    std::vector<double> logits;
    std::vector<double> values;
    for (Eigen::Index c = 0; c < nc; ++c) {
      const std::int32_t item = items[static_cast<std::size_t>(c)];
      for (int t = 0; t < n_w; ++t) {
        double s = 0;
        for (int l = 0; l < k; ++l) {
          const int qi = slot_local[static_cast<std::size_t>(t * k + l)];
          if (qi >= 0) s += cos(qi, c);
        }
        s /= divisor;
        probs[static_cast<std::size_t>(t)] = divisor == k ? rescale(s) : std::clamp((s + 1.0) / 2.0, 0.0, 1.0);
      }

      bool weighted = false;
      std::vector<int> kept;
      if (cfg.egopath.topk) {
        kept = sample_topk(probs, *cfg.egopath.topk).kept;
      } else if (options.mode == SampleMode::Relaxed) {
        weighted = true;
        for (int t = 0; t < n_w; ++t) {
          log_w[static_cast<std::size_t>(t)] =
              log_relaxed_draw(probs[static_cast<std::size_t>(t)], draws.logistic(tower, item, t), options.tau);
          if (log_w[static_cast<std::size_t>(t)] > std::log(0.5)) kept.push_back(t);
        }
      } else {
        for (int t = 0; t < n_w; ++t) {
          if (draws.uniform(tower, item, t) < probs[static_cast<std::size_t>(t)]) kept.push_back(t);
        }
      }
      if (record) {
        auto& rec = (*record)[static_cast<std::size_t>(c)].towers[static_cast<std::size_t>(tower)];
        rec.probs = probs;
        rec.kept = kept;
      }

      std::fill(active.begin(), active.end(), 0);
      if (weighted && options.removal == Removal::None) {
        std::fill(active.begin(), active.end(), 1);
      } else {
        for (int t : kept) active[static_cast<std::size_t>(t)] = 1;
        if (options.removal == Removal::Explanation) {
          for (auto& a : active) a = !a;
        } else if (options.removal == Removal::Random) {
          const auto removed = static_cast<std::size_t>(kept.size());
          std::vector<std::pair<double, int>> keyed(static_cast<std::size_t>(n_w));
          for (int t = 0; t < n_w; ++t) {
            keyed[static_cast<std::size_t>(t)] = {draws.uniform(tower, item, t, stream::kRandomRemoval), t};
          }
          std::sort(keyed.begin(), keyed.end());
          std::fill(active.begin(), active.end(), 1);
          for (std::size_t r = 0; r < removed; ++r) active[static_cast<std::size_t>(keyed[r].second)] = 0;
        }
        weighted = false;
      }

      double agg = 0;
      bool any = false;
      for (int l = 0; l < k; ++l) {
        logits.clear();
        values.clear();
        for (int t = 0; t < n_w; ++t) {
          if (!active[static_cast<std::size_t>(t)]) continue;
          const int qi = slot_local[static_cast<std::size_t>(t * k + l)];
          if (qi < 0) continue;
          double logit = cos(qi, c) * inv_sqrt_d;
          if (weighted) logit += log_w[static_cast<std::size_t>(t)];
          logits.push_back(logit);
          values.push_back(contrib(qi, c));
        }
        if (logits.empty()) continue;
        any = true;
        const double mx = *std::max_element(logits.begin(), logits.end());
        double z = 0;
        double acc = 0;
        for (std::size_t e = 0; e < logits.size(); ++e) {
          const double w = std::exp(logits[e] - mx);
          z += w;
          acc += w * values[e];
        }
        agg += acc / z;
      }
      const double g = (cfg.renorm_empty && !any) ? base(c) : (base(c) + agg) / static_cast<double>(k + 1);
      if (tower == Tower::Interaction) {
        out[static_cast<std::size_t>(c)].g_r = g;
      } else {
        out[static_cast<std::size_t>(c)].g_s = g;
      }
    }
  }

  const ModelContext<Scalar>* ctx_;
  const Model<Scalar>* model_;
  EncodedState<Scalar> state_;
};

}  // namespace sorex
