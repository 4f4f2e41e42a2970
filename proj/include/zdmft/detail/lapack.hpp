#pragma once

#include <Eigen/Dense>

#include <complex>
#include <stdexcept>
#include <string>
#include <utility>

#include <lapacke.h>

namespace zdmft::detail {

static_assert(sizeof(lapack_complex_double) == sizeof(std::complex<double>));

/// Eigenvalues with right (columns of `right`) and left (columns of `left`,
/// u^H A = lambda u^H) eigenvectors, each of unit 2-norm.
struct EigenPairs {
  Eigen::VectorXcd values;
  Eigen::MatrixXcd right;
  Eigen::MatrixXcd left;
};

inline EigenPairs zgeev(Eigen::MatrixXcd a, bool with_left) {
  const auto n = static_cast<lapack_int>(a.rows());
  if (a.rows() != a.cols()) throw std::invalid_argument("zgeev: matrix must be square");
  EigenPairs out{Eigen::VectorXcd(n), Eigen::MatrixXcd(n, n), Eigen::MatrixXcd(with_left ? n : 0, with_left ? n : 0)};
  if (n == 0) return out;
  const lapack_int info = LAPACKE_zgeev(
      LAPACK_COL_MAJOR, with_left ? 'V' : 'N', 'V', n, reinterpret_cast<lapack_complex_double*>(a.data()), n,
      reinterpret_cast<lapack_complex_double*>(out.values.data()),
      with_left ? reinterpret_cast<lapack_complex_double*>(out.left.data()) : nullptr, with_left ? n : 1,
      reinterpret_cast<lapack_complex_double*>(out.right.data()), n);
  if (info != 0) throw std::runtime_error("zgeev failed with info = " + std::to_string(info));
  return out;
}

inline EigenPairs zgeev_both(Eigen::MatrixXcd a) { return zgeev(std::move(a), true); }
inline EigenPairs zgeev_right(Eigen::MatrixXcd a) { return zgeev(std::move(a), false); }

/// Eigenvalues of an upper Hessenberg matrix (entries below the subdiagonal are ignored).
inline Eigen::VectorXcd zhseqr_values(Eigen::MatrixXcd h) {
  const auto n = static_cast<lapack_int>(h.rows());
  if (h.rows() != h.cols()) throw std::invalid_argument("zhseqr_values: matrix must be square");
  Eigen::VectorXcd w(n);
  if (n == 0) return w;
  const lapack_int info =
      LAPACKE_zhseqr(LAPACK_COL_MAJOR, 'E', 'N', n, 1, n, reinterpret_cast<lapack_complex_double*>(h.data()), n,
                     reinterpret_cast<lapack_complex_double*>(w.data()), nullptr, 1);
  if (info != 0) throw std::runtime_error("zhseqr failed with info = " + std::to_string(info));
  return w;
}

}  // namespace zdmft::detail
