#ifndef HYMLAB_BUNDLE_HPP
#define HYMLAB_BUNDLE_HPP

// Bundle models on the torus: E = L_d^{(+)r} (split) or E = L_d (x) F with F a
// flat bundle of unipotent monodromy A = exp(N) along one lattice axis
// (extension). Metrics are stored as the Hermitian matrix K of h in the
// holomorphic frame with the ample weight e^{-phi_0} divided out, so K obeys
// K(x + e_axis) = A^{-*} K(x) A^{-1} and only the constant Hessian of phi_0
// enters the curvature.

#include "hymlab/torus.hpp"

#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace hymlab {

enum class BundleModel { Split, Extension };

const char* to_string(BundleModel model);
BundleModel bundle_model_from_string(const std::string& name);

struct BundleSpec {
  int rank = 1;
  int degree = 1;
  BundleModel model = BundleModel::Split;
  Eigen::MatrixXcd nilpotent;  // r x r with N^2 = 0 (extension only)
  int twist_axis = 0;          // real lattice axis carrying the monodromy

  /// The standard non-split extension: N = E_{0,r-1}.
  static BundleSpec extension(int rank, int degree, int axis = 0);
  static BundleSpec split(int rank, int degree);
};

struct ChernNumbers {
  long long c1_top = 0;               // c_1(E)^n
  std::vector<long long> per_factor;  // c_1 of the graded pieces, to the n-th power
};

ChernNumbers chern_numbers(const BundleSpec& spec, int n);

class Bundle;
using BundlePtr = std::shared_ptr<const Bundle>;

class Bundle {
 public:
  /// Creates the torus normalized so that (2 pi)^{-n} omega_0^n integrates to c_1(E)^n.
  static BundlePtr create(const TorusParams& params, const BundleSpec& spec);
  /// Uses an existing torus; its normalization must match c_1(E)^n.
  static BundlePtr create(TorusPtr torus, const BundleSpec& spec);

  const BundleSpec& spec() const { return spec_; }
  const Torus& torus() const { return *torus_; }
  const TorusPtr& torus_ptr() const { return torus_; }
  int rank() const { return spec_.rank; }
  int dim() const { return torus_->dim(); }
  bool split() const { return spec_.model == BundleModel::Split; }
  /// +1 for E, -1 for the dual bundle (sign of the ample weight's Hessian).
  double line_sign() const { return line_sign_; }
  const SmallMat& nilpotent() const { return nilpotent_; }

  /// u(x+1) = A u(x) A^{-1}
  const Twist& endo_twist() const { return endo_twist_; }
  /// K(x+1) = A^{-*} K(x) A^{-1}
  const Twist& form_twist() const { return form_twist_; }

  /// Unipotent gauge g(x) = exp(-x N); g(x+1) = g(x) A^{-1}.
  SmallMat gauge(Eigen::Index p) const;
  SmallMat gauge_inverse(Eigen::Index p) const;
  /// Reference metric matrix B = g^* g (identity in the split model).
  SmallMat reference(Eigen::Index p) const;

  /// The dual bundle E^* with the induced twist.
  BundlePtr dual() const;

  std::uint64_t hash() const { return hash_; }

 private:
  Bundle() = default;

  BundleSpec spec_;
  TorusPtr torus_;
  double line_sign_ = 1.0;
  SmallMat nilpotent_;
  Twist endo_twist_, form_twist_;
  std::uint64_t hash_ = 0;
};

class MetricField {
 public:
  MetricField() = default;
  MetricField(BundlePtr bundle, MatrixField matrix);

  const Bundle& bundle() const { return *bundle_; }
  const BundlePtr& bundle_ptr() const { return bundle_; }
  const Torus& torus() const { return bundle_->torus(); }
  int rank() const { return bundle_->rank(); }
  const MatrixField& matrix() const { return K_; }
  MatrixField& matrix() { return K_; }
  SmallMat at(Eigen::Index p) const { return K_.at(p); }

  /// Periodic representative g^{-*} K g^{-1} of the metric at p.
  SmallMat periodic_form(Eigen::Index p) const;
  /// Frame C with C^* K C = Id (C = g^{-1} L^{-*}, L the Cholesky factor of the periodic form).
  SmallMat orthonormal_frame(Eigen::Index p) const;
  double min_eigenvalue() const;
  /// Largest pointwise condition number of the metric relative to the reference.
  double max_condition_number() const;

  /// h^* on E^*: matrix conj(K)^{-1}.
  MetricField dual() const;

  /// h * exp(u) for a pointwise K-Hermitian endomorphism u.
  MetricField exp_update(const EndoField& u, double step = 1.0) const;

 private:
  BundlePtr bundle_;
  MatrixField K_;
};

/// H_0: h~ = B(x).
MetricField reference_metric(const BundlePtr& bundle);

/// h~ = B^{-1} K, the endomorphism of h relative to H_0.
EndoField relative_endo(const MetricField& h);

/// q~ = K^{-1} Q for a Hermitian form field Q with the form twist.
EndoField form_to_endo(const MatrixField& q, const MetricField& h);

/// u = tau Id + u_circ with tau = tr(u)/r.
std::pair<ScalarField, EndoField> trace_free_split(const EndoField& u);

/// h~° = h~ det(h~)^{-1/r}.
EndoField normalized_endo(const MetricField& h);

/// Principal logarithm of a pointwise Hermitian positive definite field.
EndoField log_herm(const EndoField& u);
/// d/ds log(u + s v) at s = 0 (divided-difference formula in the eigenbasis of u).
EndoField dlog_herm(const EndoField& u, const EndoField& v);

/// log h~° computed in the periodic gauge: g^{-1} log(g^{-*} K° g^{-1}) g.
EndoField log_normalized_endo(const MetricField& h);

}  // namespace hymlab

#endif  // HYMLAB_BUNDLE_HPP
