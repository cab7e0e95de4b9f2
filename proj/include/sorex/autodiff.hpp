#pragma once

// Minimal reverse-mode differentiation over row-major Eigen matrices.
//
// The op set is closed: every node records one of the kinds in Tape::Op and
// backward() dispatches on it. Index-carrying ops (gathers, pairwise
// cosines, weighted row sums) avoid materializing per-slot embedding copies.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "sorex/types.hpp"

namespace sorex {

template <typename Scalar>
class Tape {
 public:
  using Mat = Matrix<Scalar>;
  using Sparse = SparseMatrix<Scalar>;

  enum class Op : std::uint8_t {
    Leaf,
    SpMM,            // A * X, A constant sparse
    RowGather,       // X.row(idx[s])
    Add,
    Sub,
    Affine,          // scale * X + shift
    RowCosine,       // cos(A.row(l[s]), B.row(r[s]))
    RowDot,          // A.row(l[s]) . B.row(r[s])
    WeightedRowSum,  // out.row(c) = sum_{s in seg c} w[s] * X.row(idx[s])
    SegmentSoftmax,  // softmax of a column vector within contiguous segments
    Concrete,        // log of a binary-concrete draw from probabilities
    LogSigmoid,
    Sum,
    SquaredNorm,     // squared Frobenius norm
  };

  class Var {
   public:
    Var() = default;
    Var(Tape* tape, int id) : tape_(tape), id_(id) {}
    const Mat& value() const { return tape_->nodes_[static_cast<std::size_t>(id_)].value; }
    Scalar scalar() const { return value()(0, 0); }
    int id() const { return id_; }
    Tape* tape() const { return tape_; }
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }

   private:
    Tape* tape_ = nullptr;
    int id_ = -1;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Trainable input; its gradient is kept after backward().
  Var parameter(Mat value) { return push(Op::Leaf, std::move(value), -1, -1, std::monostate{}, true); }
  Var constant(Mat value) { return push(Op::Leaf, std::move(value), -1, -1, std::monostate{}, false); }

  /// `op` must outlive the tape.
  Var spmm(const Sparse& op, Var x) {
    check(x);
    Mat out = op * x.value();
    return push(Op::SpMM, std::move(out), x.id(), -1, SpmmData{&op});
  }

  Var gather(Var x, std::vector<int> idx) {
    check(x);
    const auto& xv = x.value();
    Mat out(static_cast<Eigen::Index>(idx.size()), xv.cols());
    for (std::size_t s = 0; s < idx.size(); ++s) out.row(static_cast<Eigen::Index>(s)) = xv.row(idx[s]);
    return push(Op::RowGather, std::move(out), x.id(), -1, IndexData{std::move(idx)});
  }

  Var add(Var a, Var b) {
    check(a), check(b);
    return push(Op::Add, a.value() + b.value(), a.id(), b.id(), std::monostate{});
  }

  Var sub(Var a, Var b) {
    check(a), check(b);
    return push(Op::Sub, a.value() - b.value(), a.id(), b.id(), std::monostate{});
  }

  Var affine(Var a, Scalar scale, Scalar shift = Scalar(0)) {
    check(a);
    Mat out = (a.value().array() * scale + shift).matrix();
    return push(Op::Affine, std::move(out), a.id(), -1, AffineData{scale, shift});
  }

  Var row_cosine(Var a, std::vector<int> left, Var b, std::vector<int> right) {
    check(a), check(b);
    const auto& av = a.value();
    const auto& bv = b.value();
    Mat out(static_cast<Eigen::Index>(left.size()), 1);
    for (std::size_t s = 0; s < left.size(); ++s) {
      const auto x = av.row(left[s]);
      const auto y = bv.row(right[s]);
      const Scalar nx = x.norm();
      const Scalar ny = y.norm();
      out(static_cast<Eigen::Index>(s), 0) = (nx == 0 || ny == 0) ? Scalar(0) : x.dot(y) / (nx * ny);
    }
    return push(Op::RowCosine, std::move(out), a.id(), b.id(), PairData{std::move(left), std::move(right)});
  }

  Var row_dot(Var a, std::vector<int> left, Var b, std::vector<int> right) {
    check(a), check(b);
    const auto& av = a.value();
    const auto& bv = b.value();
    Mat out(static_cast<Eigen::Index>(left.size()), 1);
    for (std::size_t s = 0; s < left.size(); ++s) {
      out(static_cast<Eigen::Index>(s), 0) = av.row(left[s]).dot(bv.row(right[s]));
    }
    return push(Op::RowDot, std::move(out), a.id(), b.id(), PairData{std::move(left), std::move(right)});
  }

  /// offsets has one entry per output row plus a terminator; weights is a column.
  Var weighted_row_sum(Var x, std::vector<int> idx, Var weights, std::vector<int> offsets) {
    check(x), check(weights);
    const auto& xv = x.value();
    const auto& wv = weights.value();
    if (wv.rows() != static_cast<Eigen::Index>(idx.size()) || offsets.empty() ||
        offsets.back() != static_cast<int>(idx.size())) {
      throw std::invalid_argument("weighted_row_sum: inconsistent index/weight/segment sizes");
    }
    Mat out = Mat::Zero(static_cast<Eigen::Index>(offsets.size() - 1), xv.cols());
    for (std::size_t c = 0; c + 1 < offsets.size(); ++c) {
      for (int s = offsets[c]; s < offsets[c + 1]; ++s) {
        out.row(static_cast<Eigen::Index>(c)) += wv(s, 0) * xv.row(idx[static_cast<std::size_t>(s)]);
      }
    }
    return push(Op::WeightedRowSum, std::move(out), x.id(), weights.id(),
                WeightedSumData{std::move(idx), std::move(offsets)});
  }

  Var segment_softmax(Var logits, std::vector<int> offsets) {
    check(logits);
    const auto& lv = logits.value();
    Mat out(lv.rows(), 1);
    for (std::size_t c = 0; c + 1 < offsets.size(); ++c) {
      const int b = offsets[c];
      const int e = offsets[c + 1];
      if (b == e) continue;
      Scalar mx = lv(b, 0);
      for (int s = b + 1; s < e; ++s) mx = std::max(mx, lv(s, 0));
      Scalar z = 0;
      for (int s = b; s < e; ++s) {
        out(s, 0) = std::exp(lv(s, 0) - mx);
        z += out(s, 0);
      }
      for (int s = b; s < e; ++s) out(s, 0) /= z;
    }
    return push(Op::SegmentSoftmax, std::move(out), logits.id(), -1, SegmentData{std::move(offsets)});
  }

  /// log sigmoid((logit(clamp(p)) + noise) / tau) elementwise over a column.
  Var concrete_log_draw(Var probs, std::vector<Scalar> noise, Scalar tau, Scalar clamp) {
    check(probs);
    const auto& pv = probs.value();
    if (pv.rows() != static_cast<Eigen::Index>(noise.size())) {
      throw std::invalid_argument("concrete_log_draw: noise size mismatch");
    }
    Mat out(pv.rows(), 1);
    for (Eigen::Index t = 0; t < pv.rows(); ++t) {
      const Scalar p = std::clamp(pv(t, 0), clamp, Scalar(1) - clamp);
      const Scalar x = (std::log(p) - std::log1p(-p) + noise[static_cast<std::size_t>(t)]) / tau;
      out(t, 0) = log_sigmoid(x);
    }
    return push(Op::Concrete, std::move(out), probs.id(), -1, ConcreteData{std::move(noise), tau, clamp});
  }

  Var log_sigmoid(Var x) {
    check(x);
    Mat out = x.value().unaryExpr([](Scalar v) { return log_sigmoid(v); });
    return push(Op::LogSigmoid, std::move(out), x.id(), -1, std::monostate{});
  }

  Var sum(Var x) {
    check(x);
    Mat out(1, 1);
    out(0, 0) = x.value().sum();
    return push(Op::Sum, std::move(out), x.id(), -1, std::monostate{});
  }

  Var squared_norm(Var x) {
    check(x);
    Mat out(1, 1);
    out(0, 0) = x.value().squaredNorm();
    return push(Op::SquaredNorm, std::move(out), x.id(), -1, std::monostate{});
  }

  /// Reverse sweep from a 1x1 root.
  void backward(Var root) {
    check(root);
    if (root.rows() != 1 || root.cols() != 1) throw std::invalid_argument("backward root must be a scalar");
    for (auto& n : nodes_) n.grad.resize(0, 0);
    grad_ref(root.id()) = Mat::Constant(1, 1, Scalar(1));
    for (int id = root.id(); id >= 0; --id) {
      Node& n = nodes_[static_cast<std::size_t>(id)];
      if (n.grad.size() == 0 || !n.needs_grad) continue;
      propagate(n);
    }
  }

  /// Gradient of the last backward() root with respect to `v`; zeros when
  /// `v` did not influence the root.
  Mat grad(Var v) const {
    const Node& n = nodes_[static_cast<std::size_t>(v.id())];
    if (n.grad.size() == 0) return Mat::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  std::size_t size() const { return nodes_.size(); }
  Op op(Var v) const { return nodes_[static_cast<std::size_t>(v.id())].op; }

  static Scalar log_sigmoid(Scalar x) {
    return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
  }
  static Scalar sigmoid(Scalar x) {
    if (x >= 0) return Scalar(1) / (Scalar(1) + std::exp(-x));
    const Scalar e = std::exp(x);
    return e / (Scalar(1) + e);
  }

 private:
  struct SpmmData {
    const Sparse* op;
  };
  struct IndexData {
    std::vector<int> idx;
  };
  struct AffineData {
    Scalar scale;
    Scalar shift;
  };
  struct PairData {
    std::vector<int> left;
    std::vector<int> right;
  };
  struct WeightedSumData {
    std::vector<int> idx;
    std::vector<int> offsets;
  };
  struct SegmentData {
    std::vector<int> offsets;
  };
  struct ConcreteData {
    std::vector<Scalar> noise;
    Scalar tau;
    Scalar clamp;
  };
  using Payload = std::variant<std::monostate, SpmmData, IndexData, AffineData, PairData, WeightedSumData,
                               SegmentData, ConcreteData>;

  struct Node {
    Op op;
    Mat value;
    Mat grad;
    int a;
    int b;
    bool needs_grad;
    Payload data;
  };

  void check(Var v) const {
    if (v.tape() != this || v.id() < 0 || v.id() >= static_cast<int>(nodes_.size())) {
      throw std::invalid_argument("variable does not belong to this tape");
    }
  }

  Var push(Op op, Mat value, int a, int b, Payload data, bool leaf_grad = false) {
    bool needs = leaf_grad;
    if (op != Op::Leaf) {
      needs = (a >= 0 && nodes_[static_cast<std::size_t>(a)].needs_grad) ||
              (b >= 0 && nodes_[static_cast<std::size_t>(b)].needs_grad);
    }
    nodes_.push_back(Node{op, std::move(value), Mat(), a, b, needs, std::move(data)});
    return Var(this, static_cast<int>(nodes_.size()) - 1);
  }

  Mat& grad_ref(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  bool wants(int id) const { return id >= 0 && nodes_[static_cast<std::size_t>(id)].needs_grad; }

  void propagate(Node& n) {
    // grad_ref only touches other nodes' buffers, never nodes_ itself.
    const Mat& g = n.grad;
    switch (n.op) {
      case Op::Leaf:
        return;
      case Op::SpMM: {
        const auto& d = std::get<SpmmData>(n.data);
        if (wants(n.a)) grad_ref(n.a).noalias() += d.op->transpose() * g;
        return;
      }
      case Op::RowGather: {
        const auto& d = std::get<IndexData>(n.data);
        if (!wants(n.a)) return;
        Mat& ga = grad_ref(n.a);
        for (std::size_t s = 0; s < d.idx.size(); ++s) ga.row(d.idx[s]) += g.row(static_cast<Eigen::Index>(s));
        return;
      }
      case Op::Add:
        if (wants(n.a)) grad_ref(n.a) += g;
        if (wants(n.b)) grad_ref(n.b) += g;
        return;
      case Op::Sub:
        if (wants(n.a)) grad_ref(n.a) += g;
        if (wants(n.b)) grad_ref(n.b) -= g;
        return;
      case Op::Affine: {
        const auto& d = std::get<AffineData>(n.data);
        if (wants(n.a)) grad_ref(n.a) += d.scale * g;
        return;
      }
      case Op::RowCosine: {
        const auto& d = std::get<PairData>(n.data);
        const bool wa = wants(n.a);
        const bool wb = wants(n.b);
        if (!wa && !wb) return;
        Mat* ga = wa ? &grad_ref(n.a) : nullptr;
        Mat* gb = wb ? &grad_ref(n.b) : nullptr;
        const Mat& av = nodes_[static_cast<std::size_t>(n.a)].value;
        const Mat& bv = nodes_[static_cast<std::size_t>(n.b)].value;
        for (std::size_t s = 0; s < d.left.size(); ++s) {
          const Scalar gs = g(static_cast<Eigen::Index>(s), 0);
          if (gs == 0) continue;
          const auto x = av.row(d.left[s]);
          const auto y = bv.row(d.right[s]);
          const Scalar nx = x.norm();
          const Scalar ny = y.norm();
          if (nx == 0 || ny == 0) continue;
          const Scalar c = n.value(static_cast<Eigen::Index>(s), 0);
          if (ga) ga->row(d.left[s]) += gs * (y / (nx * ny) - c * x / (nx * nx));
          if (gb) gb->row(d.right[s]) += gs * (x / (nx * ny) - c * y / (ny * ny));
        }
        return;
      }
      case Op::RowDot: {
        const auto& d = std::get<PairData>(n.data);
        const bool wa = wants(n.a);
        const bool wb = wants(n.b);
        if (!wa && !wb) return;
        Mat* ga = wa ? &grad_ref(n.a) : nullptr;
        Mat* gb = wb ? &grad_ref(n.b) : nullptr;
        const Mat& av = nodes_[static_cast<std::size_t>(n.a)].value;
        const Mat& bv = nodes_[static_cast<std::size_t>(n.b)].value;
        for (std::size_t s = 0; s < d.left.size(); ++s) {
          const Scalar gs = g(static_cast<Eigen::Index>(s), 0);
          if (ga) ga->row(d.left[s]) += gs * bv.row(d.right[s]);
          if (gb) gb->row(d.right[s]) += gs * av.row(d.left[s]);
        }
        return;
      }
      case Op::WeightedRowSum: {
        const auto& d = std::get<WeightedSumData>(n.data);
        const bool wx = wants(n.a);
        const bool ww = wants(n.b);
        if (!wx && !ww) return;
        Mat* gx = wx ? &grad_ref(n.a) : nullptr;
        Mat* gw = ww ? &grad_ref(n.b) : nullptr;
        const Mat& xv = nodes_[static_cast<std::size_t>(n.a)].value;
        const Mat& wv = nodes_[static_cast<std::size_t>(n.b)].value;
        for (std::size_t c = 0; c + 1 < d.offsets.size(); ++c) {
          const auto gc = g.row(static_cast<Eigen::Index>(c));
          for (int s = d.offsets[c]; s < d.offsets[c + 1]; ++s) {
            const int row = d.idx[static_cast<std::size_t>(s)];
            if (gx) gx->row(row) += wv(s, 0) * gc;
            if (gw) (*gw)(s, 0) += xv.row(row).dot(gc);
          }
        }
        return;
      }
      case Op::SegmentSoftmax: {
        const auto& d = std::get<SegmentData>(n.data);
        if (!wants(n.a)) return;
        Mat& ga = grad_ref(n.a);
        for (std::size_t c = 0; c + 1 < d.offsets.size(); ++c) {
          Scalar inner = 0;
          for (int s = d.offsets[c]; s < d.offsets[c + 1]; ++s) inner += n.value(s, 0) * g(s, 0);
          for (int s = d.offsets[c]; s < d.offsets[c + 1]; ++s) ga(s, 0) += n.value(s, 0) * (g(s, 0) - inner);
        }
        return;
      }
      case Op::Concrete: {
        const auto& d = std::get<ConcreteData>(n.data);
        if (!wants(n.a)) return;
        Mat& ga = grad_ref(n.a);
        const Mat& pv = nodes_[static_cast<std::size_t>(n.a)].value;
        for (Eigen::Index t = 0; t < pv.rows(); ++t) {
          const Scalar p = pv(t, 0);
          if (p <= d.clamp || p >= Scalar(1) - d.clamp) continue;
          // d/dp log sigmoid(x) = (1 - sigmoid(x)) * dx/dp, dx/dp = 1 / (tau p (1 - p))
          const Scalar one_minus = Scalar(1) - std::exp(n.value(t, 0));
          ga(t, 0) += g(t, 0) * one_minus / (d.tau * p * (Scalar(1) - p));
        }
        return;
      }
      case Op::LogSigmoid: {
        if (!wants(n.a)) return;
        const Mat& xv = nodes_[static_cast<std::size_t>(n.a)].value;
        grad_ref(n.a).array() += g.array() * xv.unaryExpr([](Scalar v) { return sigmoid(-v); }).array();
        return;
      }
      case Op::Sum:
        if (wants(n.a)) grad_ref(n.a).array() += g(0, 0);
        return;
      case Op::SquaredNorm:
        if (wants(n.a)) grad_ref(n.a) += (Scalar(2) * g(0, 0)) * nodes_[static_cast<std::size_t>(n.a)].value;
        return;
    }
    throw std::logic_error("backward: unrecorded op kind " + std::to_string(static_cast<int>(n.op)));
  }

  std::vector<Node> nodes_;
};

}  // namespace sorex
