#ifndef HYMLAB_TYPES_HPP
#define HYMLAB_TYPES_HPP

#include <Eigen/Dense>

#include <complex>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>

namespace hymlab {

using cplx = std::complex<double>;

/// Upper bound on n*r handled by the pointwise kernels (n <= 2, r <= 3).
inline constexpr int kMaxBlock = 6;

/// Small dense complex matrix with inline storage; no heap traffic in kernels.
using SmallMat = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor,
                               kMaxBlock, kMaxBlock>;
using SmallVec = Eigen::Matrix<cplx, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxBlock, 1>;
using SmallRealVec = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxBlock, 1>;

/// Field storage: one column per grid point, one row per component.
using ComponentArray = Eigen::MatrixXcd;

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A Hermitian matrix that was required to be positive definite is not.
class PositivityError : public Error {
 public:
  using Error::Error;
};

/// Two fields or a field and an operation disagree on the domain or shape.
class DomainMismatch : public Error {
 public:
  using Error::Error;
};

/// Resolution diagnostics (e.g. Hermitian symmetrization defect) exceeded tolerance.
class ResolutionError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Number of worker threads used by pointwise kernels. Results never depend on it.
void set_num_threads(int threads);
int num_threads();

/// Static-chunked parallel loop over [0, count). Each index is visited exactly once.
void parallel_for(std::ptrdiff_t count, const std::function<void(std::ptrdiff_t)>& body);

}  // namespace hymlab

#endif  // HYMLAB_TYPES_HPP
