#ifndef HYMLAB_MATFUN_HPP
#define HYMLAB_MATFUN_HPP

// Pointwise functions of Hermitian matrices. All routines are templated on the
// Eigen expression type so they work for fixed, bounded and dynamic sizes.

#include "hymlab/types.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <sstream>

namespace hymlab {

/// Eigenvalues at or below this threshold are a hard error for log/dlog.
inline constexpr double kEigenFloor = 1e-14;

template <typename Derived>
typename Derived::PlainObject hermitian_part(const Eigen::MatrixBase<Derived>& m) {
  return (m + m.adjoint()) * 0.5;
}

template <typename Derived>
double anti_hermitian_defect(const Eigen::MatrixBase<Derived>& m) {
  return (m - m.adjoint()).cwiseAbs().maxCoeff() * 0.5;
}

/// (log a - log b)/(a - b), with the limit 1/a on the diagonal.
inline double log_divided_difference(double a, double b) {
  const double sum = a + b;
  const double delta = (a - b) / sum;
  if (std::abs(delta) < 1e-4) {
    const double d2 = delta * delta;
    return 2.0 / sum * (1.0 + d2 / 3.0 + d2 * d2 / 5.0 + d2 * d2 * d2 / 7.0);
  }
  return 2.0 * std::atanh(delta) / (delta * sum);
}

/// (exp a - exp b)/(a - b), with the limit exp a on the diagonal.
inline double exp_divided_difference(double a, double b) {
  const double d = a - b;
  if (std::abs(d) < 1e-6) return std::exp(0.5 * (a + b)) * (1.0 + d * d / 24.0);
  return (std::exp(a) - std::exp(b)) / d;
}

/// Eigendecomposition m = V diag(w) V* of a Hermitian matrix, reused by the
/// matrix functions and their derivatives.
template <typename Mat>
struct HermitianSpectrum {
  using RealVec = typename Eigen::SelfAdjointEigenSolver<Mat>::RealVectorType;
  Mat vectors;
  RealVec values;

  HermitianSpectrum() = default;
  explicit HermitianSpectrum(const Mat& m) {
    Eigen::SelfAdjointEigenSolver<Mat> es(m);
    if (es.info() != Eigen::Success) throw Error("Hermitian eigensolver failed");
    vectors = es.eigenvectors();
    values = es.eigenvalues();
  }

  double min() const { return values.minCoeff(); }
  double max() const { return values.maxCoeff(); }

  void require_positive(const char* what) const {
    if (values.minCoeff() <= kEigenFloor) {
      std::ostringstream os;
      os << what << ": non-positive eigenvalue " << values.minCoeff();
      throw PositivityError(os.str());
    }
  }

  template <typename F>
  Mat apply(F&& f) const {
    Mat d = Mat::Zero(values.size(), values.size());
    for (Eigen::Index i = 0; i < values.size(); ++i) d(i, i) = f(values(i));
    return vectors * d * vectors.adjoint();
  }

  /// Directional derivative of the spectral function with divided differences `dd`.
  template <typename DD, typename Derived>
  Mat differential(DD&& dd, const Eigen::MatrixBase<Derived>& direction) const {
    Mat x = vectors.adjoint() * direction * vectors;
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) *= dd(values(i), values(j));
    return vectors * x * vectors.adjoint();
  }

  Mat log() const {
    require_positive("matrix logarithm");
    return apply([](double v) { return cplx(std::log(v), 0.0); });
  }

  Mat dlog(const Mat& direction) const {
    require_positive("matrix logarithm differential");
    return differential(log_divided_difference, direction);
  }
};

/// Principal logarithm of a Hermitian positive definite matrix.
template <typename Derived>
typename Derived::PlainObject log_hermitian(const Eigen::MatrixBase<Derived>& m) {
  using Mat = typename Derived::PlainObject;
  return HermitianSpectrum<Mat>(m.eval()).log();
}

template <typename Derived>
typename Derived::PlainObject exp_hermitian(const Eigen::MatrixBase<Derived>& m) {
  using Mat = typename Derived::PlainObject;
  return HermitianSpectrum<Mat>(hermitian_part(m)).apply(
      [](double v) { return cplx(std::exp(v), 0.0); });
}

/// d/ds log(m + s v) at s = 0 for Hermitian positive m. `v` need not be Hermitian.
template <typename DerivedM, typename DerivedV>
typename DerivedM::PlainObject dlog_hermitian(const Eigen::MatrixBase<DerivedM>& m,
                                              const Eigen::MatrixBase<DerivedV>& v) {
  using Mat = typename DerivedM::PlainObject;
  return HermitianSpectrum<Mat>(m.eval()).dlog(v.eval());
}

/// Isometric real coordinates of an r x r Hermitian matrix (r^2 numbers):
/// diagonal entries, then sqrt(2)*Re and sqrt(2)*Im of the strict upper part.
template <typename Derived, typename Out>
void pack_hermitian(const Eigen::MatrixBase<Derived>& m, Out&& out) {
  const Eigen::Index r = m.rows();
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < r; ++i) out[k++] = std::real(m(i, i));
  const double s = std::sqrt(2.0);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = i + 1; j < r; ++j) {
      const cplx z = 0.5 * (m(i, j) + std::conj(m(j, i)));
      out[k++] = s * z.real();
      out[k++] = s * z.imag();
    }
}

template <typename Mat, typename In>
Mat unpack_hermitian(Eigen::Index r, const In& in) {
  Mat m(r, r);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < r; ++i) m(i, i) = cplx(in[k++], 0.0);
  const double s = 1.0 / std::sqrt(2.0);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = i + 1; j < r; ++j) {
      const double re = in[k++] * s;
      const double im = in[k++] * s;
      m(i, j) = cplx(re, im);
      m(j, i) = cplx(re, -im);
    }
  return m;
}

}  // namespace hymlab

#endif  // HYMLAB_MATFUN_HPP
