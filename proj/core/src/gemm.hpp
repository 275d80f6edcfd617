#pragma once

#include <Eigen/Core>
#include <cstddef>

namespace illama::detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// C[m,n] = alpha * op(A) * op(B) + beta * C, all row-major and contiguous.
/// A is stored [m,k] (or [k,m] when trans_a), B is [k,n] (or [n,k]).
template <typename T>
void gemm(const T* a, bool trans_a, const T* b, bool trans_b, T* c,
          std::size_t m, std::size_t n, std::size_t k, T alpha, T beta) {
  using Map = Eigen::Map<RowMat<T>>;
  using CMap = Eigen::Map<const RowMat<T>>;
  const auto em = static_cast<Eigen::Index>(m);
  const auto en = static_cast<Eigen::Index>(n);
  const auto ek = static_cast<Eigen::Index>(k);
  Map C(c, em, en);
  CMap A(a, trans_a ? ek : em, trans_a ? em : ek);
  CMap B(b, trans_b ? en : ek, trans_b ? ek : en);
  if (beta == T{0}) {
    C.setZero();
  } else if (beta != T{1}) {
    C *= beta;
  }
  if (!trans_a && !trans_b) {
    C.noalias() += alpha * (A * B);
  } else if (!trans_a && trans_b) {
    C.noalias() += alpha * (A * B.transpose());
  } else if (trans_a && !trans_b) {
    C.noalias() += alpha * (A.transpose() * B);
  } else {
    C.noalias() += alpha * (A.transpose() * B.transpose());
  }
}

}  // namespace illama::detail
