#include "sdseg/tensor.hpp"

#include <Eigen/Core>

namespace sdseg {

namespace {

template <typename T>
using MatMap = Eigen::Map<
    Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>,
    Eigen::Unaligned, Eigen::OuterStride<Eigen::Dynamic>>;

template <typename T>
using ConstMatMap = Eigen::Map<
    const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>,
    Eigen::Unaligned, Eigen::OuterStride<Eigen::Dynamic>>;

}  // namespace

template <typename T>
void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, T alpha,
          const T* a, int64_t lda, const T* b, int64_t ldb, T beta, T* c, int64_t ldc) {
  ConstMatMap<T> ma(a, trans_a ? k : m, trans_a ? m : k, Eigen::OuterStride<>(lda));
  ConstMatMap<T> mb(b, trans_b ? n : k, trans_b ? k : n, Eigen::OuterStride<>(ldb));
  MatMap<T> mc(c, m, n, Eigen::OuterStride<>(ldc));

  if (beta == T(0)) {
    mc.setZero();
  } else if (beta != T(1)) {
    mc *= beta;
  }
  if (trans_a) {
    if (trans_b) {
      mc.noalias() += alpha * (ma.transpose() * mb.transpose());
    } else {
      mc.noalias() += alpha * (ma.transpose() * mb);
    }
  } else {
    if (trans_b) {
      mc.noalias() += alpha * (ma * mb.transpose());
    } else {
      mc.noalias() += alpha * (ma * mb);
    }
  }
}

template void gemm<float>(bool, bool, int64_t, int64_t, int64_t, float,
                          const float*, int64_t, const float*, int64_t, float, float*, int64_t);
template void gemm<double>(bool, bool, int64_t, int64_t, int64_t, double,
                           const double*, int64_t, const double*, int64_t, double, double*, int64_t);

}  // namespace sdseg
