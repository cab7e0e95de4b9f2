#pragma once

// Ranking protocol, HR/NDCG/MRR, and removal-based fidelity.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "sorex/dataset.hpp"
#include "sorex/model.hpp"

namespace sorex {

struct RankingResult {
  std::int32_t user = 0;
  std::int32_t truth = 0;
  std::vector<std::int32_t> candidates;  // ranked, best first
  std::vector<double> scores;            // parallel to candidates
  int rank_of_truth = 0;                 // 1-based
};

/// Sorts by descending score, ties by ascending item index.
RankingResult rank_items(std::int32_t user, std::int32_t truth, std::span<const std::int32_t> candidates,
                         std::span<const double> scores);

/// 1-based rank of `truth` among `candidates` (which must contain it) under
/// the same ordering as rank_items, without sorting.
int rank_of(std::int32_t truth, double truth_score, std::span<const std::int32_t> candidates,
            std::span<const double> scores);

double ndcg_at(int rank, int k);

struct MetricReport {
  double hr = 0;
  double ndcg = 0;
  double mrr = 0;
  int k = 10;
  std::size_t pairs = 0;
  int passes = 1;
};

/// Means over single-relevant-item rankings. Throws on empty input.
MetricReport metrics(std::span<const int> ranks, int k);

enum class EvalMode : std::uint8_t { Validation, Test };

const char* to_string(EvalMode mode);

struct EvalConfig {
  int k = 10;
  int passes = 5;
  int threads = 1;
  int val_negatives = 1000;
  /// Restrict fidelity to pairs whose truth ranks within the top 5.
  bool fidelity_top5 = false;
};

/// Read-only protocol state derived from the full graph and a split.
struct EvalData {
  std::int32_t num_users = 0;
  std::int32_t num_items = 0;
  UserItemSets train;
  UserItemSets interacted;  // train, valid and test
  std::vector<InteractionEdge> valid;
  std::vector<InteractionEdge> test;

  EvalData(const JointGraph& full, const DatasetSplit& split);
};

/// Per validation pair: the truth followed by `count` negatives drawn
/// against the user's training items.
std::vector<std::vector<std::int32_t>> validation_candidates(const EvalData& data, int count, std::uint64_t seed);

/// Test candidates of one user: every item never interacted with, plus the
/// user's test items. Sorted ascending.
std::vector<std::int32_t> test_candidates(const EvalData& data, std::int32_t user);

/// Rank of `truth` among one user's test universe: `candidates` (sorted, as
/// from test_candidates) minus the user's other held-out items.
int test_rank(std::int32_t truth, std::span<const std::int32_t> candidates, std::span<const double> scores,
              const EvalData& data, std::int32_t user);

/// Per-pass evaluation randomness: one walk pool per (user, pass) and
/// counter-based draws keyed by (pass, user).
struct PassKeys {
  std::uint64_t seed = 0;
  std::uint64_t tag = 0;  // separates validation epochs from test runs

  std::uint64_t pool_seed(int pass, std::int32_t user) const;
  DrawSource draws(int pass, std::int32_t user) const;
};

template <typename Scalar>
MetricReport evaluate(const Scorer<Scalar>& scorer, const EvalData& data, EvalMode mode, const EvalConfig& config,
                      const PassKeys& keys, const std::vector<std::vector<std::int32_t>>* val_candidates = nullptr);

struct FidelityReport {
  double explanation_pct = 0;  // mean relative NDCG drop, explanation removed
  double random_pct = 0;       // same, size-matched random removal
  std::size_t pairs = 0;       // contributing (pair, pass) trials
  std::size_t skipped = 0;     // trials with zero base NDCG (or outside top 5)
  std::vector<double> explanation_drops;
  std::vector<double> random_drops;
};

template <typename Scalar>
FidelityReport fidelity(const Scorer<Scalar>& scorer, const EvalData& data, const EvalConfig& config,
                        const PassKeys& keys);

nlohmann::json metrics_json(const std::string& dataset, EvalMode mode, const MetricReport& report,
                            const FidelityReport* fidelity = nullptr);

/// Runs fn(user) for every user, split into contiguous blocks over `threads`.
void parallel_users(std::int32_t num_users, int threads, const std::function<void(std::int32_t)>& fn);

}  // namespace sorex
