#pragma once

#include <algorithm>
#include <cstdint>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

namespace sorex {

/// Global node id on the joint graph: users occupy [0, m), items [m, m + n).
using NodeId = std::int32_t;

/// Padding sentinel inside ego-paths.
inline constexpr NodeId kEmpty = -1;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

template <typename Scalar>
using SparseMatrix = Eigen::SparseMatrix<Scalar, Eigen::RowMajor, int>;

enum class Tower : std::uint8_t { Interaction, Social };

inline const char* to_string(Tower t) {
  return t == Tower::Interaction ? "interaction" : "social";
}

/// Cosine similarity; zero when either vector has zero norm.
template <typename A, typename B>
double cosine(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  const double na = static_cast<double>(a.norm());
  const double nb = static_cast<double>(b.norm());
  if (na == 0.0 || nb == 0.0) return 0.0;
  // rounding can push parallel vectors just past +-1
  return std::clamp(static_cast<double>(a.dot(b)) / (na * nb), -1.0, 1.0);
}

}  // namespace sorex
