#ifndef HYMLAB_CURVATURE_HPP
#define HYMLAB_CURVATURE_HPP

// Chern curvature of a metric, the block matrix theta(t, h), positivity probes
// (Griffiths, Nakano, dual Nakano) and the determinant root form.
//
// Curvature convention: Theta = i sum c_{jk lambda mu} dz_j ^ dzbar_k (x) e*_lambda (x) e_mu
// in an h-orthonormal frame, i.e. c_{jk lambda mu} = (Theta_jk)(mu, lambda) where
// Theta_jk is the endomorphism coefficient of i dz_j ^ dzbar_k.

#include "hymlab/bundle.hpp"

#include <cstdint>
#include <vector>

namespace hymlab {

/// Pointwise quantities derived from one metric; shared by the curvature,
/// the residual, its linearization and the volume gradient.
class MetricGeometry {
 public:
  explicit MetricGeometry(MetricField h);

  const MetricField& metric() const { return h_; }
  const Bundle& bundle() const { return h_.bundle(); }
  const Torus& torus() const { return h_.torus(); }
  int n() const { return n_; }
  int r() const { return r_; }

  /// dz_j K, dzbar_k K and dzbar_k dz_j K of the metric matrix.
  const DiffOps::Derivatives& dK() const { return dK_; }

  SmallMat K(Eigen::Index p) const { return h_.at(p); }
  SmallMat K_inverse(Eigen::Index p) const { return block(Kinv_, p, 0); }
  /// C with C^* K C = Id.
  SmallMat frame(Eigen::Index p) const { return block(C_, p, 0); }
  SmallMat frame_inverse(Eigen::Index p) const { return block(Cinv_, p, 0); }
  /// M_jk = (dzbar_k K) K^{-1} (dz_j K) - dzbar_k dz_j K.
  SmallMat M(Eigen::Index p, int j, int k) const { return block(M_, p, j * n_ + k); }
  /// Curvature endomorphism Theta_jk in the holomorphic frame.
  SmallMat theta_holomorphic(Eigen::Index p, int j, int k) const {
    return block(theta_hol_, p, j * n_ + k);
  }
  /// Curvature endomorphism in the orthonormal frame (Hermitian-symmetrized).
  SmallMat theta_orthonormal(Eigen::Index p, int j, int k) const {
    return block(theta_hat_, p, j * n_ + k);
  }
  const ComponentArray& theta_orthonormal_data() const { return theta_hat_; }
  double symmetry_defect() const { return defect_; }

 private:
  SmallMat block(const ComponentArray& a, Eigen::Index p, int b) const {
    return Eigen::Map<const Eigen::MatrixXcd>(a.col(p).data() + b * r_ * r_, r_, r_);
  }

  MetricField h_;
  int n_, r_;
  DiffOps::Derivatives dK_;
  ComponentArray Kinv_, C_, Cinv_, M_, theta_hol_, theta_hat_;
  double defect_ = 0.0;
};

class CurvatureField {
 public:
  CurvatureField() = default;
  CurvatureField(TorusPtr torus, int rank);

  const Torus& torus() const { return *torus_; }
  const TorusPtr& torus_ptr() const { return torus_; }
  int n() const { return n_; }
  int r() const { return r_; }
  Eigen::Index num_points() const { return data_.cols(); }

  /// Endomorphism coefficient of i dz_j ^ dzbar_k (orthonormal frame).
  SmallMat block(Eigen::Index p, int j, int k) const;
  void set_block(Eigen::Index p, int j, int k, const SmallMat& m);
  cplx c(Eigen::Index p, int j, int k, int lambda, int mu) const { return block(p, j, k)(mu, lambda); }

  ComponentArray& data() { return data_; }
  const ComponentArray& data() const { return data_; }

  /// Largest |c_{jk lambda mu} - conj(c_{kj mu lambda})| before symmetrization.
  double symmetrization_defect = 0.0;

 private:
  TorusPtr torus_;
  int n_ = 1, r_ = 1;
  ComponentArray data_;
};

struct CurvatureOptions {
  /// Symmetrization defect (relative to the curvature scale) treated as under-resolution.
  double symmetry_tolerance = 1e-8;
};

CurvatureField chern_curvature(const MetricGeometry& g, const CurvatureOptions& opts = {});
CurvatureField chern_curvature(const MetricField& h, const CurvatureOptions& opts = {});
/// Theta° = Theta - (1/r) tr(Theta) Id.
CurvatureField trace_free(const CurvatureField& c);
CurvatureField trace_free_curvature(const MetricField& h, const CurvatureOptions& opts = {});
/// c + s kappa_{jk} delta_{lambda mu}.
CurvatureField with_offset(const CurvatureField& c, double s);

struct BigHermitianField {
  MatrixField theta;  // nr x nr, index (j, lambda) -> j * r + lambda
  int n = 1, r = 1;
  double t = 1.0, alpha = 0.0;
};

/// theta_{(j,lambda),(k,mu)} = c_{jk mu lambda} + (1-t) alpha kappa_{jk} delta_{lambda mu}.
BigHermitianField big_theta(const CurvatureField& c, double t, double alpha);
BigHermitianField big_theta(const MetricField& h, double t, double alpha);

/// Pointwise determinant root det(theta)^{1/r} (signed when det < 0 and not demanded positive).
ScalarField det_root_form(const BigHermitianField& theta, bool demand_positive = false);

enum class PositivityKind { Griffiths, Nakano, DualNakano };
const char* to_string(PositivityKind kind);

struct PositivityReport {
  PositivityKind kind = PositivityKind::DualNakano;
  double margin = 0.0;  // in units of omega_0 (x) h
  Eigen::Index location = 0;
  Eigen::VectorXcd xi, v;   // Griffiths argmin
  Eigen::VectorXcd tensor;  // tau_{j lambda} at index j * r + lambda
  bool converged = true;
};

struct ProbeOptions {
  int random_starts = 8;
  int max_iterations = 200;
  double tolerance = 1e-12;
  std::uint64_t seed = 1;
};

/// Normalized value of the positivity form of `kind` at point p on the tensor
/// tau (Nakano/dual) or xi (x) v (Griffiths: tau = xi (x) v).
double positivity_form(const CurvatureField& c, PositivityKind kind, Eigen::Index p,
                       const Eigen::VectorXcd& tau);

/// Per-point margins; the probe is their minimum.
Eigen::VectorXd pointwise_margins(const CurvatureField& c, PositivityKind kind,
                                  const ProbeOptions& opts = {});
PositivityReport positivity_probe(const CurvatureField& c, PositivityKind kind,
                                  const ProbeOptions& opts = {});
/// Dual-Nakano style margin of a block matrix field (generalized eigenvalues against kappa (x) Id).
PositivityReport positivity_probe(const BigHermitianField& theta);

}  // namespace hymlab

#endif  // HYMLAB_CURVATURE_HPP
