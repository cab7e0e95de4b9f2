#pragma once

// Multi-task BPR training: batch planning, Adam, early stopping, checkpoints.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "sorex/dataset.hpp"
#include "sorex/evaluation.hpp"
#include "sorex/model.hpp"

namespace sorex {

struct TrainConfig {
  double gamma = 0.5;
  double lambda = 0.001;
  double lr = 0.001;
  int batch_size = 512;  // positive anchors per step
  int train_negatives = 10;
  int epochs = 500;
  int patience = 10;
  /// Epochs over which tau goes from tau_start to tau_end; 0 means `epochs`.
  int tau_anneal_epochs = 0;
  bool no_aux_loss = false;
  std::uint64_t seed = 0;
  /// Validation protocol run after every epoch.
  EvalConfig validation{.k = 10, .passes = 1, .threads = 1, .val_negatives = 1000, .fidelity_top5 = false};

  void validate() const;
  double effective_gamma(const ModelConfig& model) const {
    return (no_aux_loss || !model.tower.use_social_tower) ? 0.0 : gamma;
  }
};

struct LossBreakdown {
  double main_r = 0;
  double main_s = 0;
  double main_fused = 0;
  double aux = 0;
  double reg = 0;
  double total = 0;

  double main() const { return main_r + main_s + main_fused; }
  LossBreakdown& operator+=(const LossBreakdown& o);
};

/// -log sigmoid(pos - neg), computed stably.
double bpr(double pos, double neg);

/// Friend score: dot product of two social-tower user states.
template <typename A, typename B>
double friend_score(const Eigen::MatrixBase<A>& h_i, const Eigen::MatrixBase<B>& h_q) {
  return static_cast<double>(h_i.dot(h_q));
}

template <typename Scalar>
struct OptimizerState {
  Matrix<Scalar> m_interaction, v_interaction, m_social, v_social;
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static OptimizerState zeros_like(const EmbeddingTables<Scalar>& t) {
    OptimizerState s;
    s.m_interaction = Matrix<Scalar>::Zero(t.interaction.rows(), t.interaction.cols());
    s.v_interaction = s.m_interaction;
    s.m_social = Matrix<Scalar>::Zero(t.social.rows(), t.social.cols());
    s.v_social = s.m_social;
    return s;
  }
};

/// One Adam update of a single table with bias correction at `step` (1-based).
/// Throws on a non-finite gradient.
template <typename Scalar>
void adam_update(Matrix<Scalar>& param, const Matrix<Scalar>& grad, Matrix<Scalar>& m, Matrix<Scalar>& v,
                 std::uint64_t step, double lr, double beta1, double beta2, double eps) {
  if (!grad.allFinite()) throw std::runtime_error("non-finite gradient");
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  const auto b1 = static_cast<Scalar>(beta1);
  const auto b2 = static_cast<Scalar>(beta2);
  m = b1 * m + (Scalar(1) - b1) * grad;
  v = b2 * v + (Scalar(1) - b2) * grad.cwiseProduct(grad);
  const auto step_size = static_cast<Scalar>(lr / c1);
  const auto denom_scale = static_cast<Scalar>(1.0 / std::sqrt(c2));
  param.array() -= step_size * m.array() / ((v.array().sqrt() * denom_scale) + static_cast<Scalar>(eps));
}

template <typename Scalar>
void adam_step(OptimizerState<Scalar>& state, EmbeddingTables<Scalar>& params, const Matrix<Scalar>& grad_r,
               const Matrix<Scalar>& grad_s, double lr) {
  ++state.step;
  adam_update(params.interaction, grad_r, state.m_interaction, state.v_interaction, state.step, lr, state.beta1,
              state.beta2, state.eps);
  adam_update(params.social, grad_s, state.m_social, state.v_social, state.step, lr, state.beta1, state.beta2,
              state.eps);
}

/// Relaxation temperature for an epoch under linear annealing.
double temperature(const EgoPathConfig& egopath, const TrainConfig& train, int epoch);

/// One (u, u+, u-) triple per directed social edge, negatives uniform over
/// users that are neither u nor a friend of u, shuffled.
std::vector<std::array<std::int32_t, 3>> friend_triples(const JointGraph& graph, std::uint64_t seed, int epoch);

/// Everything random about one optimization step.
BatchPlan make_plan(const JointGraph& graph, const UserItemSets& train_sets, std::span<const InteractionEdge> anchors,
                    std::vector<std::array<std::int32_t, 3>> friends, const ModelConfig& model,
                    const TrainConfig& train, int epoch, int step);

/// Loss (and gradients) of one plan.
template <typename Scalar>
LossBreakdown loss_and_grad(const ModelContext<Scalar>& ctx, const Model<Scalar>& model, const BatchPlan& plan,
                            const LossWeights& weights, Matrix<Scalar>* grad_r, Matrix<Scalar>* grad_s);

struct EpochLog {
  int epoch = 0;
  LossBreakdown loss;
  double val_hr = 0;
  double val_ndcg = 0;
  double seconds = 0;
};

void write_log_header(std::ostream& out);
void write_log_row(std::ostream& out, const EpochLog& row);

template <typename Scalar>
struct TrainResult {
  Model<Scalar> best;
  OptimizerState<Scalar> optimizer;  // state at the best epoch
  int best_epoch = -1;
  double best_val_ndcg = -1;
  std::vector<EpochLog> log;
};

template <typename Scalar>
struct TrainCallbacks {
  /// After every epoch's validation.
  std::function<void(const EpochLog&)> on_epoch;
  /// Whenever validation NDCG improves; use it to persist the best checkpoint.
  std::function<void(const Model<Scalar>&, const OptimizerState<Scalar>&)> on_improve;
};

/// Trains on `split.train` and early-stops on validation NDCG@K. Throws
/// std::runtime_error on a non-finite loss; whatever on_improve persisted
/// last remains the good checkpoint.
template <typename Scalar>
TrainResult<Scalar> train(const JointGraph& full, const DatasetSplit& split, const ModelConfig& model_config,
                          const TrainConfig& config, const TrainCallbacks<Scalar>& callbacks = {});

/// FNV-1a 64 over canonical key=value lines.
std::uint64_t config_digest(const std::vector<std::string>& canonical_lines);

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointHeader {
  std::uint64_t digest = 0;
  std::uint32_t m = 0;
  std::uint32_t n = 0;
  std::uint32_t d = 0;
};

/// Tables and optimizer moments are stored as 32-bit floats.
template <typename Scalar>
void save_checkpoint(const std::filesystem::path& path, std::uint64_t digest, std::int32_t m, std::int32_t n,
                     const EmbeddingTables<Scalar>& tables, const OptimizerState<Scalar>& optimizer);

struct Checkpoint {
  CheckpointHeader header;
  EmbeddingTables<float> tables;
  OptimizerState<float> optimizer;
};

/// Throws io::FormatError on corrupt files or when `expected_digest` is given
/// and differs from the stored one.
Checkpoint load_checkpoint(const std::filesystem::path& path, std::optional<std::uint64_t> expected_digest = {});

}  // namespace sorex
