#ifndef HYMLAB_TORUS_HPP
#define HYMLAB_TORUS_HPP

// Discretized flat complex torus X = C^n / (Z^n + Lambda Z^n), fields on it,
// Wirtinger derivatives and integration against the flat Kahler form.
//
// Grid points sit at lattice coordinates (x, y) in [0,1)^{2n}, z = x + Lambda y.
// Real axes are ordered x_1..x_n, y_1..y_n; axis 0 varies fastest in the
// point index.

#include "hymlab/types.hpp"

#include <array>
#include <cstdint>
#include <memory>
#include <vector>

namespace hymlab {

enum class DerivativeScheme { Spectral, FiniteDifference4 };

const char* to_string(DerivativeScheme scheme);
DerivativeScheme derivative_scheme_from_string(const std::string& name);

struct TorusParams {
  int n = 1;
  Eigen::MatrixXcd period;       // n x n; columns are the second family of periods
  int resolution = 32;           // points per real axis
  Eigen::MatrixXcd kappa_shape;  // positive Hermitian; rescaled by Torus::create
  DerivativeScheme scheme = DerivativeScheme::Spectral;

  static TorusParams square(int n, int resolution);
};

class DiffOps;

class Torus {
 public:
  /// Builds the torus with omega_0 = s * kappa_shape, where the scale s makes
  /// the integral of (2 pi)^{-n} omega_0^n (determinant convention) equal to
  /// `top_chern`.
  static std::shared_ptr<const Torus> create(const TorusParams& params, double top_chern);

  int dim() const { return n_; }
  int num_axes() const { return 2 * n_; }
  int resolution() const { return N_; }
  Eigen::Index num_points() const { return points_; }
  DerivativeScheme scheme() const { return params_.scheme; }
  const TorusParams& params() const { return params_; }
  double top_chern() const { return top_chern_; }

  const Eigen::MatrixXcd& period() const { return params_.period; }
  /// Coefficients kappa_{jk} of omega_0 = sum kappa_{jk} i dz_j ^ dzbar_k.
  const Eigen::MatrixXcd& kappa() const { return kappa_; }
  const Eigen::MatrixXcd& kappa_inverse() const { return kappa_inv_; }
  double det_kappa() const { return det_kappa_; }
  double kappa_min_eigenvalue() const { return kappa_min_; }

  double lebesgue_volume() const { return volume_; }
  double cell_volume() const { return volume_ / static_cast<double>(points_); }
  /// Density of omega_0^n (determinant convention) against Lebesgue measure.
  double omega_density() const;

  /// d/dz_j = sum_a dz()(j, a) d/da over real lattice axes a.
  const Eigen::MatrixXcd& dz() const { return dz_; }
  const Eigen::MatrixXcd& dzbar() const { return dzbar_; }

  std::array<int, 4> multi_index(Eigen::Index p) const;
  Eigen::Index index(const std::array<int, 4>& multi) const;
  /// Lattice coordinate of point p along real axis a, in [0, 1).
  double coordinate(Eigen::Index p, int axis) const;
  Eigen::VectorXd lattice_point(Eigen::Index p) const;
  Eigen::VectorXcd z(Eigen::Index p) const;

  std::uint64_t hash() const { return hash_; }
  const DiffOps& ops() const { return *ops_; }

 private:
  Torus() = default;

  TorusParams params_;
  int n_ = 1;
  int N_ = 0;
  Eigen::Index points_ = 0;
  double top_chern_ = 1.0;
  Eigen::MatrixXcd kappa_, kappa_inv_, dz_, dzbar_;
  double det_kappa_ = 1.0;
  double kappa_min_ = 1.0;
  double volume_ = 1.0;
  std::uint64_t hash_ = 0;
  std::shared_ptr<const DiffOps> ops_;
};

using TorusPtr = std::shared_ptr<const Torus>;

/// Lattice twist of a matrix-valued field along one real axis:
/// f(x + e_axis) = left * f(x) * right.
struct Twist {
  int axis = -1;
  SmallMat left, right, left_inv, right_inv;

  bool periodic() const { return axis < 0; }
  static Twist none() { return {}; }
  static Twist make(int axis, const SmallMat& left, const SmallMat& right);
  bool same_as(const Twist& other, double tol = 1e-14) const;
};

class ScalarField {
 public:
  ScalarField() = default;
  explicit ScalarField(TorusPtr torus);
  ScalarField(TorusPtr torus, Eigen::VectorXcd values);

  static ScalarField constant(TorusPtr torus, cplx value);
  template <typename F>
  static ScalarField from_function(TorusPtr torus, F&& f) {
    ScalarField s(torus);
    for (Eigen::Index p = 0; p < torus->num_points(); ++p) s.values_(p) = f(torus->lattice_point(p));
    return s;
  }

  const Torus& torus() const { return *torus_; }
  const TorusPtr& torus_ptr() const { return torus_; }
  Eigen::Index size() const { return values_.size(); }
  Eigen::VectorXcd& values() { return values_; }
  const Eigen::VectorXcd& values() const { return values_; }
  cplx& operator[](Eigen::Index p) { return values_(p); }
  cplx operator[](Eigen::Index p) const { return values_(p); }

  double sup_norm() const { return values_.cwiseAbs().maxCoeff(); }
  double max_abs_imag() const { return values_.imag().cwiseAbs().maxCoeff(); }
  double min_real() const { return values_.real().minCoeff(); }
  double max_real() const { return values_.real().maxCoeff(); }

  ScalarField& operator+=(const ScalarField& o);
  ScalarField& operator-=(const ScalarField& o);
  ScalarField& operator*=(cplx s);

 private:
  TorusPtr torus_;
  Eigen::VectorXcd values_;
};

ScalarField operator+(ScalarField a, const ScalarField& b);
ScalarField operator-(ScalarField a, const ScalarField& b);
ScalarField operator*(cplx s, ScalarField a);

/// A d x d complex matrix at every grid point, with a lattice twist. Used for
/// endomorphism fields, Hermitian form fields and metric matrices alike.
class MatrixField {
 public:
  MatrixField() = default;
  MatrixField(TorusPtr torus, int dim, Twist twist = Twist::none());

  static MatrixField identity(TorusPtr torus, int dim, Twist twist = Twist::none());
  static MatrixField zero(TorusPtr torus, int dim, Twist twist = Twist::none());

  const Torus& torus() const { return *torus_; }
  const TorusPtr& torus_ptr() const { return torus_; }
  int dim() const { return dim_; }
  Eigen::Index num_points() const { return data_.cols(); }
  const Twist& twist() const { return twist_; }
  void set_twist(Twist t) { twist_ = std::move(t); }

  ComponentArray& data() { return data_; }
  const ComponentArray& data() const { return data_; }

  SmallMat at(Eigen::Index p) const;
  void set(Eigen::Index p, const SmallMat& m);

  double sup_norm() const;
  /// max over points of the anti-Hermitian part (entrywise).
  double anti_hermitian_defect() const;
  double max_trace_abs() const;

  MatrixField& operator+=(const MatrixField& o);
  MatrixField& operator-=(const MatrixField& o);
  MatrixField& operator*=(cplx s);

 private:
  TorusPtr torus_;
  int dim_ = 0;
  Twist twist_;
  ComponentArray data_;
};

using EndoField = MatrixField;

MatrixField operator+(MatrixField a, const MatrixField& b);
MatrixField operator-(MatrixField a, const MatrixField& b);
MatrixField operator*(cplx s, MatrixField a);

enum class Wirtinger { Z, ZBar };
struct ComplexAxis {
  int index = 0;
  Wirtinger kind = Wirtinger::Z;
};

/// Discrete d/dz_j or d/dzbar_j. Spectral for periodic fields when the torus
/// scheme is spectral; fourth-order central differences otherwise, applying
/// the twist at wrap-around.
ScalarField partial(const ScalarField& f, ComplexAxis axis);
MatrixField partial(const MatrixField& f, ComplexAxis axis);

/// Integral against Lebesgue measure on the fundamental domain.
double integrate(const ScalarField& density, double imag_tolerance = 1e-9);

/// Coefficient matrix u_{jk} = d^2 u / dz_j dzbar_k of i ddbar u, an n x n
/// Hermitian form field.
MatrixField i_del_delbar(const ScalarField& u);

/// Low-level derivative engine shared by all modules. Operates on component
/// arrays (rows = components, columns = points); matrix-valued inputs with a
/// non-trivial twist must have dim*dim rows.
class DiffOps {
 public:
  explicit DiffOps(const Torus& torus);

  struct Derivatives {
    std::vector<ComponentArray> dz;        // index j
    std::vector<ComponentArray> dzbar;     // index k
    std::vector<ComponentArray> dzbar_dz;  // index j * n + k: dzbar_k dz_j
  };

  /// All first and mixed second Wirtinger derivatives in one pass.
  Derivatives all(const ComponentArray& f, int dim, const Twist& twist) const;
  /// Only the mixed second derivatives dzbar_k dz_j (index j * n + k).
  std::vector<ComponentArray> mixed_second(const ComponentArray& f, int dim,
                                           const Twist& twist) const;
  ComponentArray wirtinger(const ComponentArray& f, int dim, const Twist& twist,
                           ComplexAxis axis) const;
  /// Derivative along one real lattice axis.
  ComponentArray real_axis(const ComponentArray& f, int dim, const Twist& twist, int axis,
                           DerivativeScheme scheme) const;

  /// Scheme used for a field with the given twist.
  DerivativeScheme scheme_for(const Twist& twist) const;

  /// Fourier symbol (acting on exp(2 pi i m.x)) of dzbar_k dz_j for the
  /// discrete operator of `scheme`, at FFT mode index `mode`.
  cplx symbol_mixed(int j, int k, Eigen::Index mode, DerivativeScheme scheme) const;
  cplx symbol_first_axis(int axis, Eigen::Index mode, DerivativeScheme scheme) const;
  cplx symbol_second_axes(int a, int b, Eigen::Index mode, DerivativeScheme scheme) const;

  /// In-place multidimensional FFT of every row.
  void fft_forward(ComponentArray& f) const;
  void fft_inverse(ComponentArray& f) const;

 private:
  ComponentArray fd_first(const ComponentArray& f, int dim, const Twist& twist, int axis) const;
  ComponentArray fd_second(const ComponentArray& f, int dim, const Twist& twist, int axis) const;

  const Torus* torus_;
  int n_;
  int N_;
  Eigen::Index points_;
};

}  // namespace hymlab

#endif  // HYMLAB_TORUS_HPP
