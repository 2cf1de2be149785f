#include "hymlab/mavol.hpp"

#include "hymlab/matfun.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace hymlab {

namespace {

inline Eigen::Map<const Eigen::MatrixXcd> cblock(const ComponentArray& a, Eigen::Index p, int b, int rows,
                                                 int cols) {
  return Eigen::Map<const Eigen::MatrixXcd>(a.col(p).data() + b * rows * cols, rows, cols);
}

inline Eigen::Map<Eigen::MatrixXcd> mblock(ComponentArray& a, Eigen::Index p, int b, int rows, int cols) {
  return Eigen::Map<Eigen::MatrixXcd>(a.col(p).data() + b * rows * cols, rows, cols);
}

SmallMat big_theta_hat(const MetricGeometry& g, Eigen::Index p) {
  const int n = g.n(), r = g.r();
  SmallMat big(n * r, n * r);
  for (int j = 0; j < n; ++j)
    for (int k = 0; k < n; ++k) big.block(j * r, k * r, r, r) = g.theta_orthonormal(p, j, k);
  return hermitian_part(big);
}

// Density weight turning a determinant root (per det kappa) into the value integrand.
double value_weight(const Torus& T) { return T.omega_density() / std::pow(2.0 * std::numbers::pi, T.dim()); }

struct PointValue {
  double root = 0.0;  // det(theta)^{1/r} / det kappa, signed
  bool positive = false;
  SmallMat inverse;   // theta^{-1} when positive
};

PointValue point_value(const MetricGeometry& g, Eigen::Index p) {
  const int nr = g.n() * g.r();
  const SmallMat th = big_theta_hat(g, p);
  PointValue v;
  Eigen::LLT<SmallMat> llt(th);
  const double detk = g.torus().det_kappa();
  if (llt.info() == Eigen::Success) {
    double logdet = 0.0;
    for (int i = 0; i < nr; ++i) logdet += 2.0 * std::log(llt.matrixLLT()(i, i).real());
    v.root = std::exp(logdet / g.r()) / detk;
    v.positive = true;
    v.inverse = llt.solve(SmallMat::Identity(nr, nr));
  } else {
    const double d = th.determinant().real();
    v.root = (d < 0.0 ? -1.0 : 1.0) * std::pow(std::abs(d), 1.0 / g.r()) / detk;
  }
  return v;
}

// Orthonormal-frame gradient G^ (r^2 x P, Hermitian per point) with
// d value = cell_volume * sum_p tr(G^_p U_p).
ComponentArray gradient_hat(const MetricGeometry& geo) {
  const MetricField& h = geo.metric();
  const Torus& T = h.torus();
  const Bundle& B = h.bundle();
  const DiffOps& ops = T.ops();
  const int n = geo.n(), r = geo.r(), r2 = r * r;
  const Eigen::Index P = T.num_points();
  const double w = value_weight(T);
  const DiffOps::Derivatives& dK = geo.dK();

  ComponentArray Z(r2, P);
  std::vector<ComponentArray> phi_bar(n, ComponentArray(r2, P)), phi(n, ComponentArray(r2, P));
  std::vector<ComponentArray> psi(n * n, ComponentArray(r2, P));

  parallel_for(P, [&](std::ptrdiff_t p) {
    const PointValue pv = point_value(geo, p);
    if (!pv.positive) throw PositivityError("theta is not positive definite; the volume gradient is undefined");
    const SmallMat C = geo.frame(p), Cinv = geo.frame_inverse(p);
    const SmallMat K = h.at(p), Kinv = geo.K_inverse(p);
    const double c = w * pv.root / r;

    SmallMat A[4], Bm[4];
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        A[j * n + k] = c * C * SmallMat(pv.inverse.block(k * r, j * r, r, r)) * Cinv;
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) Bm[j * n + k] = 0.5 * (A[j * n + k] + Kinv * A[k * n + j].adjoint() * K);

    SmallMat z = SmallMat::Zero(r, r);
    for (int j = 0; j < n; ++j) {
      mblock(phi[j], p, 0, r, r).setZero();
      mblock(phi_bar[j], p, 0, r, r).setZero();
    }
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        const int jk = j * n + k;
        const SmallMat DjK = cblock(dK.dz[j], p, 0, r, r);
        const SmallMat DbkK = cblock(dK.dzbar[k], p, 0, r, r);
        const SmallMat Y = Kinv * geo.theta_holomorphic(p, k, j).adjoint() * K;
        const SmallMat E = Bm[jk] * Kinv;
        z += 0.5 * (A[jk] * Y - Y * A[jk]) - Kinv * geo.M(p, j, k) * Bm[jk] - Kinv * DjK * E * DbkK;
        mblock(phi_bar[k], p, 0, r, r) += Kinv * DjK * E;
        mblock(phi[j], p, 0, r, r) += E * DbkK * Kinv;
        mblock(psi[jk], p, 0, r, r) = -E;
      }
    mblock(Z, p, 0, r, r) = z;
  });

  // transposes: first derivatives change sign, the mixed second derivative is symmetric;
  // the pairing tr(Phi V) needs the dual twist Phi(x + 1) = A Phi A^*
  const Twist& ft = B.form_twist();
  const Twist dual = ft.periodic() ? Twist::none() : Twist::make(ft.axis, ft.right_inv, ft.left_inv);
  ComponentArray GV = ComponentArray::Zero(r2, P);
  for (int k = 0; k < n; ++k) GV -= ops.wirtinger(phi_bar[k], r, dual, {k, Wirtinger::ZBar});
  for (int j = 0; j < n; ++j) GV -= ops.wirtinger(phi[j], r, dual, {j, Wirtinger::Z});
  for (int j = 0; j < n; ++j)
    for (int k = 0; k < n; ++k) {
      const auto second = ops.mixed_second(psi[j * n + k], r, dual);
      GV += second[j * n + k];
    }

  ComponentArray G(r2, P);
  parallel_for(P, [&](std::ptrdiff_t p) {
    const SmallMat C = geo.frame(p), Cinv = geo.frame_inverse(p);
    const SmallMat raw = Cinv * SmallMat(cblock(GV, p, 0, r, r)) * Cinv.adjoint() +
                         Cinv * SmallMat(cblock(Z, p, 0, r, r)) * C;
    mblock(G, p, 0, r, r) = hermitian_part(raw);
  });
  return G;
}

double hat_norm(const ComponentArray& G, double cell) { return std::sqrt(G.squaredNorm() * cell); }

EndoField to_holomorphic(const MetricGeometry& geo, const ComponentArray& Ghat) {
  const int r = geo.r();
  EndoField E(geo.metric().matrix().torus_ptr(), r, geo.bundle().endo_twist());
  for (Eigen::Index p = 0; p < Ghat.cols(); ++p)
    E.set(p, geo.frame(p) * SmallMat(cblock(Ghat, p, 0, r, r)) * geo.frame_inverse(p));
  return E;
}

}  // namespace

ScalarField eigenvalue_sums(const MetricGeometry& g) {
  const int n = g.n(), r = g.r(), nr = n * r;
  const Eigen::Index P = g.torus().num_points();
  ScalarField out(g.metric().matrix().torus_ptr());
  parallel_for(P, [&](std::ptrdiff_t p) {
    // omega = trace of the curvature, omega (x) h is omega (x) Id in the orthonormal frame
    SmallMat W(n, n);
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) W(j, k) = g.theta_orthonormal(p, j, k).trace();
    SmallMat WI = SmallMat::Zero(nr, nr);
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        for (int i = 0; i < r; ++i) WI(j * r + i, k * r + i) = W(j, k);
    Eigen::LLT<SmallMat> llt(hermitian_part(WI));
    if (llt.info() != Eigen::Success) {
      out[p] = std::numeric_limits<double>::quiet_NaN();
      return;
    }
    const SmallMat Linv = llt.matrixL().solve(SmallMat::Identity(nr, nr));
    const SmallMat T = hermitian_part(SmallMat(Linv * big_theta_hat(g, p) * Linv.adjoint()));
    Eigen::SelfAdjointEigenSolver<SmallMat> es(T, Eigen::EigenvaluesOnly);
    out[p] = es.eigenvalues().sum();
  });
  return out;
}

MavolReport mavol_value(const MetricField& h, bool demand_positive, bool with_gradient) {
  MetricGeometry geo(h);
  const Torus& T = h.torus();
  const int n = T.dim(), r = h.rank();
  const Eigen::Index P = T.num_points();
  MavolReport rep;

  ScalarField root(h.matrix().torus_ptr());
  std::vector<char> pos(P, 0);
  parallel_for(P, [&](std::ptrdiff_t p) {
    const PointValue v = point_value(geo, p);
    root[p] = v.root;
    pos[p] = v.positive ? 1 : 0;
  });
  bool all_positive = true;
  for (char c : pos) all_positive = all_positive && c;
  if (demand_positive && !all_positive) throw PositivityError("det theta is not positive at every point");

  rep.value = chern_measure_integral(root);
  const ChernNumbers cn = chern_numbers(h.bundle().spec(), n);
  rep.upper_bound = static_cast<double>(cn.c1_top) / std::pow(static_cast<double>(r), n);
  rep.kind = PositivityKind::DualNakano;
  rep.margin = theta_margin(geo, 0.0);
  rep.positive = rep.margin > 0.0;
  rep.condition_number = h.max_condition_number();

  const ScalarField sums = eigenvalue_sums(geo);
  double defect = 0.0;
  for (Eigen::Index p = 0; p < P; ++p) {
    const double d = std::abs(sums[p].real() - n);
    defect = std::isnan(d) ? std::numeric_limits<double>::infinity() : std::max(defect, d);
  }
  rep.eigenvalue_identity_defect = defect;

  if (with_gradient && all_positive)
    rep.el_residual_norm = hat_norm(gradient_hat(geo), T.cell_volume());
  else
    rep.el_residual_norm = std::numeric_limits<double>::quiet_NaN();
  return rep;
}

EndoField el_residual(const MetricField& h) {
  MetricGeometry geo(h);
  return to_holomorphic(geo, gradient_hat(geo));
}

AscentResult mavol_ascend(const MetricField& h_init, const AscentOptions& opts) {
  AscentResult out;
  out.h = h_init;
  const Torus& T = h_init.torus();
  const DiffOps& ops = T.ops();
  const int r = h_init.rank(), r2 = r * r, axes = T.num_axes(), N = T.resolution();
  const Eigen::Index P = T.num_points();
  const double cell = T.cell_volume();

  // Fourier smoothing weights (1 + smoothing |m|^2)^{-2}, integer wavenumbers
  Eigen::VectorXd smooth(P);
  for (Eigen::Index q = 0; q < P; ++q) {
    const auto mi = T.multi_index(q);
    double m2 = 0.0;
    for (int a = 0; a < axes; ++a) {
      const int m = mi[a] <= N / 2 ? mi[a] : mi[a] - N;
      m2 += static_cast<double>(m) * m;
    }
    const double d = 1.0 + opts.smoothing * m2;
    smooth(q) = 1.0 / (d * d);
  }

  auto margin_of = [](const MetricField& h) { return theta_margin(MetricGeometry(h), 0.0); };
  double margin = margin_of(out.h);
  if (!(margin >= opts.margin_floor)) {
    std::ostringstream os;
    os << "initial metric has dual-Nakano margin " << margin << " below the floor " << opts.margin_floor;
    throw PositivityError(os.str());
  }
  double value = mavol_value(out.h, true, false).value;
  double step = opts.initial_step;

  for (int it = 0;; ++it) {
    MetricGeometry geo(out.h);
    const ComponentArray G = gradient_hat(geo);
    const double gnorm = hat_norm(G, cell);
    out.trace.push_back({it, value, margin, gnorm, it == 0 ? 0.0 : step, out.h.max_condition_number()});
    if (gnorm <= opts.gradient_tolerance) {
      out.stop_reason = "gradient tolerance";
      break;
    }
    if (it >= opts.max_steps) {
      out.stop_reason = "step limit";
      break;
    }

    // optional pointwise rescaling by the inverse of the theta-contracted identity, symmetric in the smoothing
    Eigen::VectorXd rho(P);
    parallel_for(P, [&](std::ptrdiff_t p) {
      const PointValue pv = point_value(geo, p);
      double tr = 0.0;
      for (int j = 0; j < geo.n(); ++j) tr += pv.inverse.block(j * r, j * r, r, r).trace().real();
      rho(p) = opts.pointwise_rescaling ? 1.0 / std::sqrt(pv.root * tr / r) : 1.0;
    });
    ComponentArray D(r2, P);
    for (Eigen::Index p = 0; p < P; ++p) D.col(p) = rho(p) * G.col(p);
    ops.fft_forward(D);
    for (Eigen::Index q = 0; q < P; ++q) D.col(q) *= smooth(q);
    ops.fft_inverse(D);
    for (Eigen::Index p = 0; p < P; ++p) {
      const SmallMat m = hermitian_part(SmallMat(rho(p) * cblock(D, p, 0, r, r)));
      mblock(D, p, 0, r, r) = m;
    }
    const double slope = (G.adjoint() * D).trace().real() * cell;  // <G, D>
    if (!(slope > 0.0)) {
      out.stop_reason = "no ascent direction";
      break;
    }
    const EndoField u = to_holomorphic(geo, D);

    bool accepted = false;
    for (int bt = 0; bt <= opts.max_backtracks && step >= opts.min_step; ++bt, step *= 0.5) {
      MetricField trial;
      double trial_margin = 0.0;
      try {
        trial = out.h.exp_update(u, step);
        trial_margin = margin_of(trial);
      } catch (const PositivityError&) {
        continue;
      }
      if (!(trial_margin >= opts.margin_floor)) continue;
      const double tv = mavol_value(trial, false, false).value;
      if (tv >= value + 1e-4 * step * slope) {
        out.h = std::move(trial);
        value = tv;
        margin = trial_margin;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      out.stop_reason = "step underflow";
      out.trace.back().step_size = step;
      break;
    }
    step = std::min(step * 2.0, 1e6);
  }
  return out;
}

std::vector<ScalarField> shrink_densities(const BundlePtr& bundle, double s) {
  if (!(s >= 1.0)) throw ConfigError("shrink concentration must be at least 1");
  if (!bundle->split() || bundle->rank() < 2) throw ConfigError("the shrink family needs a split bundle of rank >= 2");
  const Torus& T = bundle->torus();
  const int r = bundle->rank(), axes = T.num_axes();
  const ChernNumbers cn = chern_numbers(bundle->spec(), T.dim());
  std::vector<ScalarField> f;
  for (int j = 0; j < r; ++j) {
    const double c = (j + 0.5) / r;
    ScalarField b = ScalarField::from_function(bundle->torus_ptr(), [&](const Eigen::VectorXd& x) {
      double e = 0.0;
      for (int a = 0; a < axes; ++a) {
        const double sn = std::sin(std::numbers::pi * (x(a) - c));
        e += sn * sn;
      }
      return cplx(std::exp(-(s - 1.0) * e), 0.0);
    });
    const double mass = chern_measure_integral(b);
    if (!(mass > 0.0) || !std::isfinite(mass)) throw Error("bump normalization failed");
    b *= cplx(static_cast<double>(cn.per_factor[j]) / mass, 0.0);
    f.push_back(std::move(b));
  }
  return f;
}

std::vector<ShrinkPoint> shrink_family(const BundlePtr& bundle, const std::vector<double>& concentrations) {
  std::vector<ShrinkPoint> out;
  for (double s : concentrations) {
    const SplitSolution sol = split_solve(bundle, shrink_densities(bundle, s));
    const MavolReport rep = mavol_value(sol.metric, true, false);
    out.push_back({s, rep.value, sol.holder_lhs, rep.margin, rep.condition_number});
  }
  return out;
}

}  // namespace hymlab
