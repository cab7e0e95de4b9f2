#include "sorex/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace sorex {

RankingResult rank_items(std::int32_t user, std::int32_t truth, std::span<const std::int32_t> candidates,
                         std::span<const double> scores) {
  if (candidates.size() != scores.size()) throw std::invalid_argument("candidates and scores differ in length");
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return candidates[a] < candidates[b];
  });
  RankingResult r;
  r.user = user;
  r.truth = truth;
  for (std::size_t i = 0; i < order.size(); ++i) {
    r.candidates.push_back(candidates[order[i]]);
    r.scores.push_back(scores[order[i]]);
    if (candidates[order[i]] == truth) r.rank_of_truth = static_cast<int>(i) + 1;
  }
  if (r.rank_of_truth == 0) throw std::invalid_argument("truth item missing from candidates");
  return r;
}

int rank_of(std::int32_t truth, double truth_score, std::span<const std::int32_t> candidates,
            std::span<const double> scores) {
  int rank = 1;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (scores[i] > truth_score || (scores[i] == truth_score && candidates[i] < truth)) ++rank;
  }
  return rank;
}

double ndcg_at(int rank, int k) {
  return rank <= k ? 1.0 / std::log2(static_cast<double>(rank) + 1.0) : 0.0;
}

MetricReport metrics(std::span<const int> ranks, int k) {
  if (ranks.empty()) throw std::invalid_argument("no rankings to summarize");
  if (k < 1) throw std::invalid_argument("K must be >= 1");
  MetricReport r;
  r.k = k;
  r.pairs = ranks.size();
  for (int rank : ranks) {
    r.hr += rank <= k ? 1.0 : 0.0;
    r.ndcg += ndcg_at(rank, k);
    r.mrr += 1.0 / rank;
  }
  const auto n = static_cast<double>(ranks.size());
  r.hr /= n;
  r.ndcg /= n;
  r.mrr /= n;
  return r;
}

int test_rank(std::int32_t truth, std::span<const std::int32_t> cands, std::span<const double> scores,
              const EvalData& data, std::int32_t user) {
  const auto it = std::lower_bound(cands.begin(), cands.end(), truth);
  const double ts = scores[static_cast<std::size_t>(it - cands.begin())];
  int rank = 1;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    const auto j = cands[i];
    if (j == truth) continue;
    if (data.interacted.contains(user, j)) continue;  // another held-out test item
    if (scores[i] > ts || (scores[i] == ts && j < truth)) ++rank;
  }
  return rank;
}

const char* to_string(EvalMode mode) { return mode == EvalMode::Validation ? "validation" : "test"; }

EvalData::EvalData(const JointGraph& full, const DatasetSplit& split)
    : num_users(full.num_users()), num_items(full.num_items()), valid(split.valid), test(split.test) {
  train = UserItemSets(num_users, split.train);
  interacted = UserItemSets(num_users, full.interaction_edges());
}

std::vector<std::vector<std::int32_t>> validation_candidates(const EvalData& data, int count, std::uint64_t seed) {
  std::vector<std::vector<std::int32_t>> out;
  out.reserve(data.valid.size());
  auto rng = Rng(seed);
  for (const auto& edge : data.valid) {
    auto batch = sample_negatives(data.train, data.num_items, edge, count, rng);
    std::vector<std::int32_t> c{edge.second};
    c.insert(c.end(), batch.negatives.begin(), batch.negatives.end());
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<std::int32_t> test_candidates(const EvalData& data, std::int32_t user) {
  std::vector<std::int32_t> out;
  for (std::int32_t j = 0; j < data.num_items; ++j) {
    if (!data.interacted.contains(user, j)) out.push_back(j);
  }
  for (const auto& [u, j] : data.test) {
    if (u == user) out.push_back(j);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::uint64_t PassKeys::pool_seed(int pass, std::int32_t user) const {
  return derive_seed(seed, {stream::kEvalWalks, tag, static_cast<std::uint64_t>(pass), static_cast<std::uint64_t>(user)});
}

DrawSource PassKeys::draws(int pass, std::int32_t user) const {
  return {derive_seed(seed, {stream::kEvalDraws, tag, static_cast<std::uint64_t>(pass), static_cast<std::uint64_t>(user)})};
}

void parallel_users(std::int32_t num_users, int threads, const std::function<void(std::int32_t)>& fn) {
  threads = std::max(1, std::min<int>(threads, std::max<std::int32_t>(num_users, 1)));
  if (threads == 1) {
    for (std::int32_t u = 0; u < num_users; ++u) fn(u);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        // Interleaved assignment balances users with many pairs.
        for (std::int32_t u = t; u < num_users; u += threads) fn(u);
      } catch (...) {
        errors[static_cast<std::size_t>(t)] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

namespace {

std::vector<std::vector<std::size_t>> pairs_by_user(std::span<const InteractionEdge> pairs, std::int32_t num_users) {
  std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(num_users));
  for (std::size_t i = 0; i < pairs.size(); ++i) out[static_cast<std::size_t>(pairs[i].first)].push_back(i);
  return out;
}

std::vector<double> totals(const std::vector<ExplainedScore>& s) {
  std::vector<double> g(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) g[i] = s[i].g;
  return g;
}

}  // namespace

template <typename Scalar>
MetricReport evaluate(const Scorer<Scalar>& scorer, const EvalData& data, EvalMode mode, const EvalConfig& config,
                      const PassKeys& keys, const std::vector<std::vector<std::int32_t>>* val_candidates) {
  const auto& pairs = mode == EvalMode::Validation ? data.valid : data.test;
  if (mode == EvalMode::Validation && (!val_candidates || val_candidates->size() != pairs.size())) {
    throw std::invalid_argument("validation needs one candidate list per pair");
  }
  const auto by_user = pairs_by_user(pairs, data.num_users);
  const auto& ep = scorer.config().egopath;
  const auto options = scorer.eval_options(Removal::None);
  const int passes = std::max(1, config.passes);
  std::vector<int> ranks(pairs.size() * static_cast<std::size_t>(passes));
  const auto& graph = *scorer.context().graph;

  for (int pass = 0; pass < passes; ++pass) {
    parallel_users(data.num_users, config.threads, [&](std::int32_t u) {
      const auto& mine = by_user[static_cast<std::size_t>(u)];
      if (mine.empty()) return;
      const auto pool = user_pool(graph, u, ep.k, ep.n_w, keys.pool_seed(pass, u));
      const auto draws = keys.draws(pass, u);
      const std::size_t base = static_cast<std::size_t>(pass) * pairs.size();
      if (mode == EvalMode::Validation) {
        for (std::size_t i : mine) {
          const auto& cands = (*val_candidates)[i];
          const auto g = totals(scorer.score(u, pool, cands, draws, options));
          ranks[base + i] = rank_of(cands.front(), g.front(), cands, g);
        }
      } else {
        const auto cands = test_candidates(data, u);
        const auto g = totals(scorer.score(u, pool, cands, draws, options));
        for (std::size_t i : mine) ranks[base + i] = test_rank(pairs[i].second, cands, g, data, u);
      }
    });
  }
  if (ranks.empty()) throw std::invalid_argument(std::string("no ") + to_string(mode) + " pairs to evaluate");
  auto report = metrics(ranks, config.k);
  report.pairs = pairs.size();
  report.passes = passes;
  return report;
}

template <typename Scalar>
FidelityReport fidelity(const Scorer<Scalar>& scorer, const EvalData& data, const EvalConfig& config,
                        const PassKeys& keys) {
  const auto& pairs = data.test;
  const auto by_user = pairs_by_user(pairs, data.num_users);
  const auto& ep = scorer.config().egopath;
  const int passes = std::max(1, config.passes);
  const auto& graph = *scorer.context().graph;
  constexpr double kSkipped = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> expl(pairs.size() * static_cast<std::size_t>(passes), kSkipped);
  std::vector<double> rand(expl.size(), kSkipped);

  for (int pass = 0; pass < passes; ++pass) {
    parallel_users(data.num_users, config.threads, [&](std::int32_t u) {
      const auto& mine = by_user[static_cast<std::size_t>(u)];
      if (mine.empty()) return;
      const auto pool = user_pool(graph, u, ep.k, ep.n_w, keys.pool_seed(pass, u));
      const auto draws = keys.draws(pass, u);
      const auto cands = test_candidates(data, u);
      const auto g = totals(scorer.score(u, pool, cands, draws, scorer.eval_options(Removal::None)));
      const auto g_expl = totals(scorer.score(u, pool, cands, draws, scorer.eval_options(Removal::Explanation)));
      const auto g_rand = totals(scorer.score(u, pool, cands, draws, scorer.eval_options(Removal::Random)));
      for (std::size_t i : mine) {
        const auto truth = pairs[i].second;
        const int rank = test_rank(truth, cands, g, data, u);
        const double base = ndcg_at(rank, config.k);
        if (base == 0.0 || (config.fidelity_top5 && rank > 5)) continue;
        const std::size_t slot = static_cast<std::size_t>(pass) * pairs.size() + i;
        expl[slot] = 100.0 * (base - ndcg_at(test_rank(truth, cands, g_expl, data, u), config.k)) / base;
        rand[slot] = 100.0 * (base - ndcg_at(test_rank(truth, cands, g_rand, data, u), config.k)) / base;
      }
    });
  }
  FidelityReport r;
  for (std::size_t s = 0; s < expl.size(); ++s) {
    if (std::isnan(expl[s])) {
      ++r.skipped;
      continue;
    }
    r.explanation_drops.push_back(expl[s]);
    r.random_drops.push_back(rand[s]);
  }
  r.pairs = r.explanation_drops.size();
  if (r.pairs > 0) {
    r.explanation_pct = std::accumulate(r.explanation_drops.begin(), r.explanation_drops.end(), 0.0) / r.pairs;
    r.random_pct = std::accumulate(r.random_drops.begin(), r.random_drops.end(), 0.0) / r.pairs;
  }
  return r;
}

nlohmann::json metrics_json(const std::string& dataset, EvalMode mode, const MetricReport& report,
                            const FidelityReport* fid) {
  nlohmann::json j;
  j["dataset"] = dataset;
  j["mode"] = to_string(mode);
  j["K"] = report.k;
  j["passes"] = report.passes;
  j["hr"] = report.hr;
  j["ndcg"] = report.ndcg;
  j["mrr"] = report.mrr;
  if (fid) {
    j["fidelity_pct"] = fid->explanation_pct;
    j["random_fidelity_pct"] = fid->random_pct;
    j["skipped_pairs"] = fid->skipped;
  } else {
    j["fidelity_pct"] = nullptr;
    j["random_fidelity_pct"] = nullptr;
    j["skipped_pairs"] = 0;
  }
  return j;
}

template MetricReport evaluate<float>(const Scorer<float>&, const EvalData&, EvalMode, const EvalConfig&,
                                      const PassKeys&, const std::vector<std::vector<std::int32_t>>*);
template MetricReport evaluate<double>(const Scorer<double>&, const EvalData&, EvalMode, const EvalConfig&,
                                       const PassKeys&, const std::vector<std::vector<std::int32_t>>*);
template FidelityReport fidelity<float>(const Scorer<float>&, const EvalData&, const EvalConfig&, const PassKeys&);
template FidelityReport fidelity<double>(const Scorer<double>&, const EvalData&, const EvalConfig&, const PassKeys&);

}  // namespace sorex
