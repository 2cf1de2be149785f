#ifndef HYMLAB_HYM_SYSTEM_HPP
#define HYMLAB_HYM_SYSTEM_HPP

// The coupled determinant / trace-free system along the continuity path
//
//   omega_0^{-n} det(theta(t, h))^{1/r} = (det H_0 / det h)^lambda a_0,
//   omega_0^{-n} (omega_t^{n-1} ^ Theta°) + eps (det H_0 / det h)^mu log h~° = 0,
//
// with theta(t, h) = ^T Theta_{E,h} + (1 - t) alpha omega_0 (x) Id. Unknowns are
// updated as h <- h exp(u); internally u is carried in an h-orthonormal frame
// as a Hermitian matrix U = C^{-1} u C.

#include "hymlab/curvature.hpp"
#include "hymlab/krylov.hpp"

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace hymlab {

enum class OmegaVariant { Fixed, Beta };
enum class AlphaPolicy { Auto, Raise, Fixed };
enum class TerminalStatus { ReachedT1, StepUnderflow, PositivityLost, NewtonFail };

const char* to_string(OmegaVariant v);
const char* to_string(AlphaPolicy p);
const char* to_string(TerminalStatus s);
OmegaVariant omega_variant_from_string(const std::string& s);
AlphaPolicy alpha_policy_from_string(const std::string& s);

struct StepSchedule {
  double initial_step = 0.25;
  double min_step = 1.0 / 256.0;
  double grow = 2.0;
  double shrink = 0.5;
  int easy_iterations = 4;  // grow after a Newton solve needing at most this many iterations
};

struct NewtonOptions {
  int max_iterations = 25;
  double tolerance = 1e-10;  // sup-norm of both residual parts
  int max_backtracks = 10;
  double sufficient_decrease = 1e-4;
  int gmres_restart = 40;
  int gmres_max_iterations = 400;
};

struct SystemConfig {
  double alpha = 0.0;
  AlphaPolicy alpha_policy = AlphaPolicy::Auto;
  double epsilon = 1.0;
  double lambda = 1.0;
  double mu = 0.0;
  OmegaVariant omega = OmegaVariant::Fixed;
  StepSchedule schedule;
  NewtonOptions newton;
  double positivity_margin_floor = 1e-6;
  int max_retries = 4;
  /// Initial data h_0 exp(-a psi), psi = sum_axes cos(2 pi x_a): a non-constant determinant.
  double initial_conformal = 0.0;

  void validate() const;
};

struct SystemResidual {
  ScalarField ma;        // r_MA
  EndoField tf;          // r_TF, holomorphic frame
  double ma_sup = 0.0;   // max |r_MA|
  double tf_sup = 0.0;   // max pointwise h-norm of r_TF
  double sup() const { return std::max(ma_sup, tf_sup); }
};

/// a_0 = omega_0^{-n} det(theta(0, h0))^{1/r} (det h0 / det H0)^lambda, so that h0 solves the
/// determinant equation at t = 0. Throws PositivityError naming the required alpha.
ScalarField a0_init(const MetricField& h0, double alpha, double lambda = 0.0);

/// Minimum over points of the smallest eigenvalue of ^T Theta + offset omega_0 (x) Id
/// against omega_0 (x) h (the dual arrangement).
double theta_margin(const MetricGeometry& g, double offset = 0.0);

/// Smallest alpha with theta(0, h) min eigenvalue (in omega_0 (x) h units) at least `margin`.
double required_alpha(const MetricField& h, double margin);

SystemResidual residual(const MetricField& h, double t, const SystemConfig& cfg, const ScalarField& a0);

/// Directional derivative of the residual along h exp(s u), u h-Hermitian.
std::pair<ScalarField, EndoField> linearized_apply(const MetricField& h, double t, const SystemConfig& cfg,
                                                   const ScalarField& a0, const EndoField& u);

/// Discretized system at a fixed metric: residual, exact Jacobian and a
/// per-Fourier-mode constant-coefficient preconditioner, all on packed
/// orthonormal-frame coordinates (r^2 reals per point, point-major).
class LinearizedSystem {
 public:
  enum class Mode { Full, Cushioned };

  LinearizedSystem(const MetricField& h, double t, const SystemConfig& cfg, const ScalarField* a0,
                   Mode mode = Mode::Full);

  Eigen::Index size() const { return static_cast<Eigen::Index>(r_) * r_ * P_; }
  const MetricGeometry& geometry() const { return geo_; }

  /// Packed residual (r_TF + r_MA Id, or the cushioned residual) in the orthonormal frame.
  const Eigen::VectorXd& packed_residual() const { return packed_; }
  const SystemResidual& residual() const { return res_; }
  /// RMS of the packed residual, used as the line-search merit.
  double merit() const;

  Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
  Eigen::VectorXd precondition(const Eigen::VectorXd& y) const;

  /// Holomorphic-frame endomorphism u = C U C^{-1} of packed coordinates.
  EndoField unpack_direction(const Eigen::VectorXd& x) const;
  Eigen::VectorXd pack_direction(const EndoField& u) const;

  /// (delta r_MA, delta r_TF in the holomorphic frame) for an endomorphism u.
  std::pair<ScalarField, EndoField> apply_endo(const EndoField& u) const;

 private:
  void build_preconditioner() const;
  // U: r^2 x P orthonormal-frame Hermitian matrices. Outputs the scalar part and
  // the trace-free orthonormal part of the derivative.
  void apply_raw(const ComponentArray& U, Eigen::VectorXd& scalar, ComponentArray& tf_hat) const;

  MetricGeometry geo_;
  SystemConfig cfg_;
  double t_;
  Mode mode_;
  int n_, r_;
  Eigen::Index P_;
  ScalarField a0_;
  // per-point data, one column per point
  ComponentArray theta_inv_;  // (nr)^2: inverse of the orthonormal block matrix theta
  ComponentArray log_hat_;    // r^2: C^{-1} log h~° C
  ComponentArray gmat_;       // n^2: trace weights G
  ComponentArray tf_hat_;     // n^2 r^2: trace-free orthonormal curvature blocks
  ComponentArray spec_vecs_;  // r^2: eigenvectors of the periodic form
  Eigen::MatrixXd spec_vals_; // r x P
  Eigen::VectorXd P_root_, f_rhs_, friction_;
  SystemResidual res_;
  Eigen::VectorXd packed_;
  mutable std::vector<Eigen::MatrixXcd> mode_inverse_;
};

/// Principal symbol at a grid point, acting on r x r Hermitian matrices in the
/// orthonormal frame: u -> (scalar part, trace-free part).
class PrincipalSymbol {
 public:
  PrincipalSymbol(const MetricField& h, double t, const SystemConfig& cfg, Eigen::Index point);
  PrincipalSymbol(const MetricGeometry& g, double t, const SystemConfig& cfg, Eigen::Index point);

  struct Action {
    cplx ma;
    SmallMat tf;
  };

  Action apply(const Eigen::VectorXcd& xi, const SmallMat& u) const;
  /// Closed-form inverse (Fixed variant).
  SmallMat inverse(const Eigen::VectorXcd& xi, const Action& y) const;
  /// Operator norm of the inverse in isometric Hermitian coordinates.
  double inverse_norm(const Eigen::VectorXcd& xi) const;
  /// |xi|^2 = xi^T kappa^{-1} conj(xi).
  double xi_norm2(const Eigen::VectorXcd& xi) const;

  /// Hilbert-Schmidt tolerance for a perturbation of the symbol that keeps it invertible.
  static double tolerated_perturbation(int r, int n);

 private:
  int n_, r_;
  Eigen::MatrixXcd theta_, theta_inv_, kappa_inv_;
  double det_theta_, det_kappa_;
};

struct NewtonResult {
  MetricField h;
  bool converged = false;
  int iterations = 0;
  int linear_iterations = 0;
  std::vector<double> history;  // residual sup-norm per iteration
  SystemResidual residual;
  std::string diagnostic;
};

NewtonResult newton_solve(const MetricField& h_init, double t, const SystemConfig& cfg, const ScalarField& a0);

/// omega_0^{n-1} ^ Theta° + eps omega_0^n log h~° = 0 with det h = det H_0, by damped Newton
/// on the trace-free unknown. Starts from `start` (default H_0), rescaled to det H_0.
NewtonResult cushioned_solve(const BundlePtr& bundle, double eps, const SystemConfig& cfg,
                             const std::optional<MetricField>& start = std::nullopt);

/// Maximum pointwise h-norm of the cushioned residual.
double cushioned_residual_sup(const MetricField& h, double eps);

struct StepRecord {
  int index = 0;
  double t = 0.0;
  double step = 0.0;
  double ma_residual = 0.0;
  double tf_residual = 0.0;
  double theta_margin = 0.0;        // min eigenvalue of theta(t, h), omega_0 (x) h units
  double dual_nakano_margin = 0.0;  // of ^T Theta_{E,h}
  double det_ratio_min = 0.0;       // det H_0 / det h
  double det_ratio_max = 0.0;
  int newton_iterations = 0;
  int linear_iterations = 0;
  double epsilon = 0.0;
  double lambda = 0.0;
  double wall_seconds = 0.0;
};

/// Everything the driver needs to continue a run.
struct ContinuityState {
  MetricField h;
  double t = 0.0;
  double step = 0.0;
  double alpha = 0.0;
  double epsilon = 1.0;
  double lambda = 1.0;
  int retries_used = 0;
  int steps_taken = 0;
  ScalarField a0_base;  // omega_0^{-n} det(theta(0, h0))^{1/r}
  ScalarField logdet0;  // log det(h0 / H0)

  ScalarField a0() const;
};

struct SolverTrace {
  std::vector<StepRecord> steps;
  std::vector<std::string> events;  // retries, rejections and failure diagnostics
  TerminalStatus status = TerminalStatus::NewtonFail;
  std::string diagnostic;
  double alpha = 0.0;
  double final_dual_nakano_margin = 0.0;
  std::optional<MetricField> final_metric;
  std::optional<ContinuityState> final_state;
};

struct ContinuityHooks {
  std::function<void(const StepRecord&, const ContinuityState&)> on_step;
};

/// Cushioned start, alpha selection and the t = 0 state.
ContinuityState continuity_start(const BundlePtr& bundle, const SystemConfig& cfg, SolverTrace& trace);
SolverTrace continuity_run(const BundlePtr& bundle, const SystemConfig& cfg, const ContinuityHooks& hooks = {});
SolverTrace continuity_resume(ContinuityState state, const SystemConfig& cfg, const ContinuityHooks& hooks = {});

struct SplitSolution {
  std::vector<ScalarField> potentials;  // h_j = H_0 e^{-u_j}
  MetricField metric;                   // block-diagonal assembly
  std::vector<double> normalizations;   // integral of f_j against (omega_0 / 2 pi)^n
  double holder_lhs = 0.0;              // integral of (prod f_j)^{1/r}
  double holder_rhs = 0.0;              // (prod c_1(E_j)^n)^{1/r}
};

/// Integral of f against (2 pi)^{-n} omega_0^n.
double chern_measure_integral(const ScalarField& f);

/// Solves Theta_{E_j, h_j}^n = f_j omega_0^n for each line factor (n = 1).
SplitSolution split_solve(const BundlePtr& bundle, const std::vector<ScalarField>& f_parts,
                          double normalization_tolerance = 1e-8);

}  // namespace hymlab

#endif  // HYMLAB_HYM_SYSTEM_HPP
