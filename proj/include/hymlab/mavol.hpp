#ifndef HYMLAB_MAVOL_HPP
#define HYMLAB_MAVOL_HPP

// Monge-Ampere volume of a metric: the integral of det((2 pi)^{-1} ^T Theta)^{1/r},
// its gradient under logarithmic variations, gradient ascent, and the
// split-bundle families used to probe its supremum.

#include "hymlab/hym_system.hpp"

#include <vector>

namespace hymlab {

struct MavolReport {
  double value = 0.0;
  double upper_bound = 0.0;                  // r^{-n} c_1(E)^n
  double eigenvalue_identity_defect = 0.0;   // max |sum lambda_j - n|
  double el_residual_norm = 0.0;             // L^2 norm of the gradient
  PositivityKind kind = PositivityKind::DualNakano;
  double margin = 0.0;
  bool positive = true;
  double condition_number = 1.0;             // of h relative to H_0
};

/// Value, bound, eigenvalue identity and positivity. With `demand_positive`, a
/// non-positive determinant throws PositivityError.
MavolReport mavol_value(const MetricField& h, bool demand_positive = false, bool with_gradient = true);

/// Per-point sum of the eigenvalues of (2 pi)^{-1} ^T Theta against omega (x) h,
/// omega = (2 pi)^{-1} Theta_{det E, det h}.
ScalarField eigenvalue_sums(const MetricGeometry& g);

/// L^2 gradient E (holomorphic frame, h-Hermitian) with
/// d/ds value(h exp(s u)) = integral of tr(E u) dLebesgue.
EndoField el_residual(const MetricField& h);

struct AscentOptions {
  int max_steps = 200;
  double initial_step = 0.05;
  double min_step = 1e-8;
  double gradient_tolerance = 1e-8;
  double margin_floor = 1e-6;
  double smoothing = 16.0;  // gradient smoothing (1 + smoothing |m|^2)^{-2} per Fourier mode
  /// Also rescale by (det^{1/r} theta tr theta^{-1} / r)^{-1/2} pointwise. Tends to stall at the margin floor.
  bool pointwise_rescaling = false;
  int max_backtracks = 30;
};

struct AscentRecord {
  int step = 0;
  double value = 0.0;
  double margin = 0.0;
  double gradient_norm = 0.0;
  double step_size = 0.0;
  double condition_number = 1.0;
};

struct AscentResult {
  MetricField h;
  std::vector<AscentRecord> trace;
  std::string stop_reason;
};

AscentResult mavol_ascend(const MetricField& h_init, const AscentOptions& opts = {});

struct ShrinkPoint {
  double s = 1.0;
  double value = 0.0;
  double holder_integral = 0.0;  // integral of (prod f_j)^{1/r}
  double margin = 0.0;
  double condition_number = 1.0;
};

/// Normalized periodic bumps f_j concentrated near c_j = (j + 1/2)/r on every axis,
/// exp(-(s - 1) sum_a sin^2(pi (x_a - c_j))), scaled to integrate to c_1(E_j)^n.
std::vector<ScalarField> shrink_densities(const BundlePtr& bundle, double s);

/// The value series over concentrations s for the split bundle (r >= 2, n = 1).
std::vector<ShrinkPoint> shrink_family(const BundlePtr& bundle, const std::vector<double>& concentrations);

}  // namespace hymlab

#endif  // HYMLAB_MAVOL_HPP
