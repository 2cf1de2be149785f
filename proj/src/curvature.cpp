#include "hymlab/curvature.hpp"

#include "hymlab/matfun.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace hymlab {

// ---------------------------------------------------------------------------
// MetricGeometry

MetricGeometry::MetricGeometry(MetricField h) : h_(std::move(h)), n_(h_.torus().dim()), r_(h_.rank()) {
  const Torus& t = h_.torus();
  const Bundle& b = h_.bundle();
  const MatrixField& K = h_.matrix();
  const Eigen::Index P = t.num_points();
  const int r2 = r_ * r_;
  const int blocks = n_ * n_;
  dK_ = t.ops().all(K.data(), r_, K.twist());
  Kinv_.resize(r2, P);
  C_.resize(r2, P);
  Cinv_.resize(r2, P);
  M_.resize(blocks * r2, P);
  theta_hol_.resize(blocks * r2, P);
  theta_hat_.resize(blocks * r2, P);
  std::vector<double> defects(P, 0.0);
  const Eigen::MatrixXcd& kappa = t.kappa();
  const double sign = b.line_sign();
  const SmallMat I = SmallMat::Identity(r_, r_);

  parallel_for(P, [&](std::ptrdiff_t p) {
    auto put = [&](ComponentArray& a, int blk, const SmallMat& m) {
      Eigen::Map<Eigen::MatrixXcd>(a.col(p).data() + blk * r2, r_, r_) = m;
    };
    auto get = [&](const ComponentArray& a, int blk = 0) -> SmallMat {
      return Eigen::Map<const Eigen::MatrixXcd>(a.col(p).data() + blk * r2, r_, r_);
    };
    const SmallMat Kp = hermitian_part(h_.at(p));
    Eigen::LLT<SmallMat> llt(Kp);
    if (llt.info() != Eigen::Success) throw PositivityError("metric is not positive definite");
    const SmallMat Kinv = llt.solve(I);
    const SmallMat C = h_.orthonormal_frame(p);
    const SmallMat Cinv = C.inverse();
    put(Kinv_, 0, Kinv);
    put(C_, 0, C);
    put(Cinv_, 0, Cinv);
    SmallMat hat[4];
    for (int j = 0; j < n_; ++j)
      for (int k = 0; k < n_; ++k) {
        const SmallMat M = get(dK_.dzbar[k]) * Kinv * get(dK_.dz[j]) - get(dK_.dzbar_dz[j * n_ + k]);
        const SmallMat theta = (sign * kappa(j, k) / static_cast<double>(r_)) * I + Kinv * M;
        put(M_, j * n_ + k, M);
        put(theta_hol_, j * n_ + k, theta);
        hat[j * n_ + k] = Cinv * theta * C;
      }
    double defect = 0.0;
    for (int j = 0; j < n_; ++j)
      for (int k = j; k < n_; ++k) {
        const SmallMat a = hat[j * n_ + k];
        const SmallMat bb = hat[k * n_ + j].adjoint();
        defect = std::max(defect, 0.5 * (a - bb).cwiseAbs().maxCoeff());
        const SmallMat s = 0.5 * (a + bb);
        put(theta_hat_, j * n_ + k, s);
        put(theta_hat_, k * n_ + j, s.adjoint());
      }
    defects[p] = defect;
  });
  for (double d : defects) defect_ = std::max(defect_, d);
}

// ---------------------------------------------------------------------------
// CurvatureField

CurvatureField::CurvatureField(TorusPtr torus, int rank)
    : torus_(std::move(torus)),
      n_(torus_->dim()),
      r_(rank),
      data_(ComponentArray::Zero(n_ * n_ * rank * rank, torus_->num_points())) {}

SmallMat CurvatureField::block(Eigen::Index p, int j, int k) const {
  return Eigen::Map<const Eigen::MatrixXcd>(data_.col(p).data() + (j * n_ + k) * r_ * r_, r_, r_);
}

void CurvatureField::set_block(Eigen::Index p, int j, int k, const SmallMat& m) {
  Eigen::Map<Eigen::MatrixXcd>(data_.col(p).data() + (j * n_ + k) * r_ * r_, r_, r_) = m;
}

CurvatureField chern_curvature(const MetricGeometry& g, const CurvatureOptions& opts) {
  CurvatureField c(g.metric().matrix().torus_ptr(), g.r());
  c.data() = g.theta_orthonormal_data();
  c.symmetrization_defect = g.symmetry_defect();
  const double scale = std::max(1.0, c.data().cwiseAbs().maxCoeff());
  if (c.symmetrization_defect > opts.symmetry_tolerance * scale) {
    std::ostringstream os;
    os << "curvature symmetrization defect " << c.symmetrization_defect
       << " exceeds tolerance; increase the resolution";
    throw ResolutionError(os.str());
  }
  return c;
}

CurvatureField chern_curvature(const MetricField& h, const CurvatureOptions& opts) {
  return chern_curvature(MetricGeometry(h), opts);
}

CurvatureField trace_free(const CurvatureField& c) {
  CurvatureField out = c;
  const int r = c.r();
  for (Eigen::Index p = 0; p < c.num_points(); ++p)
    for (int j = 0; j < c.n(); ++j)
      for (int k = 0; k < c.n(); ++k) {
        SmallMat m = c.block(p, j, k);
        const cplx tr = m.trace() / static_cast<double>(r);
        for (int i = 0; i < r; ++i) m(i, i) -= tr;
        out.set_block(p, j, k, m);
      }
  return out;
}

CurvatureField trace_free_curvature(const MetricField& h, const CurvatureOptions& opts) {
  return trace_free(chern_curvature(h, opts));
}

CurvatureField with_offset(const CurvatureField& c, double s) {
  CurvatureField out = c;
  const int r = c.r();
  const Eigen::MatrixXcd& kappa = c.torus().kappa();
  for (Eigen::Index p = 0; p < c.num_points(); ++p)
    for (int j = 0; j < c.n(); ++j)
      for (int k = 0; k < c.n(); ++k) {
        SmallMat m = c.block(p, j, k);
        for (int i = 0; i < r; ++i) m(i, i) += s * kappa(j, k);
        out.set_block(p, j, k, m);
      }
  return out;
}

// ---------------------------------------------------------------------------
// theta(t, h) and its determinant root

BigHermitianField big_theta(const CurvatureField& c, double t, double alpha) {
  const int n = c.n(), r = c.r();
  BigHermitianField out{MatrixField(c.torus_ptr(), n * r), n, r, t, alpha};
  const CurvatureField shifted = with_offset(c, (1.0 - t) * alpha);
  for (Eigen::Index p = 0; p < c.num_points(); ++p) {
    SmallMat big(n * r, n * r);
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) big.block(j * r, k * r, r, r) = shifted.block(p, j, k);
    out.theta.set(p, big);
  }
  return out;
}

BigHermitianField big_theta(const MetricField& h, double t, double alpha) {
  return big_theta(chern_curvature(h), t, alpha);
}

ScalarField det_root_form(const BigHermitianField& theta, bool demand_positive) {
  ScalarField out(theta.theta.torus_ptr());
  const double root = 1.0 / theta.r;
  for (Eigen::Index p = 0; p < out.size(); ++p) {
    const double det = theta.theta.at(p).determinant().real();
    if (demand_positive && !(det > 0.0)) {
      std::ostringstream os;
      os << "det_root_form: non-positive determinant " << det << " at point " << p;
      throw PositivityError(os.str());
    }
    out[p] = std::copysign(std::pow(std::abs(det), root), det);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Positivity

const char* to_string(PositivityKind kind) {
  switch (kind) {
    case PositivityKind::Griffiths: return "griffiths";
    case PositivityKind::Nakano: return "nakano";
    case PositivityKind::DualNakano: return "dual_nakano";
  }
  return "?";
}

namespace {

// Hermitian matrix Q of the form w^* Q w, w = conj(tau), in index j * r + lambda.
SmallMat arrangement(const CurvatureField& c, PositivityKind kind, Eigen::Index p) {
  const int n = c.n(), r = c.r();
  SmallMat Q(n * r, n * r);
  for (int j = 0; j < n; ++j)
    for (int k = 0; k < n; ++k) {
      const SmallMat b = c.block(p, j, k);
      if (kind == PositivityKind::DualNakano)
        Q.block(j * r, k * r, r, r) = b;
      else
        Q.block(j * r, k * r, r, r) = b.transpose();
    }
  return hermitian_part(Q);
}

SmallMat kron_identity(const Eigen::MatrixXcd& a, int r) {
  const int n = static_cast<int>(a.rows());
  SmallMat out = SmallMat::Zero(n * r, n * r);
  for (int j = 0; j < n; ++j)
    for (int k = 0; k < n; ++k)
      for (int i = 0; i < r; ++i) out(j * r + i, k * r + i) = a(j, k);
  return out;
}

struct KappaFactor {
  SmallMat L_inv;      // L^{-1} with kappa = L L^*
  SmallMat L_inv_adj;  // L^{-*}
  explicit KappaFactor(const SmallMat& kappa) {
    Eigen::LLT<SmallMat> llt(kappa);
    const SmallMat I = SmallMat::Identity(kappa.rows(), kappa.rows());
    L_inv = llt.matrixL().solve(I);
    L_inv_adj = L_inv.adjoint();
  }
};

// Minimum generalized eigenpair of (Q, kappa-factor): returns value and w.
double min_generalized(const SmallMat& Q, const KappaFactor& f, SmallVec& w) {
  const SmallMat T = hermitian_part(SmallMat(f.L_inv * Q * f.L_inv_adj));
  Eigen::SelfAdjointEigenSolver<SmallMat> es(T);
  w = f.L_inv_adj * es.eigenvectors().col(0);
  return es.eigenvalues()(0);
}

struct GriffithsResult {
  double value = std::numeric_limits<double>::infinity();
  SmallVec xi, v;
  bool converged = true;
};

GriffithsResult griffiths_point(const CurvatureField& c, Eigen::Index p, const ProbeOptions& opts,
                                const KappaFactor& kf) {
  const int n = c.n(), r = c.r();
  std::vector<SmallMat> blocks(n * n);
  for (int j = 0; j < n; ++j)
    for (int k = 0; k < n; ++k) blocks[j * n + k] = c.block(p, j, k);
  const SmallMat kappa = c.torus().kappa();

  std::mt19937_64 rng(opts.seed ^ (0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(p + 1)));
  std::normal_distribution<double> gauss;
  GriffithsResult best;
  const int starts = r + opts.random_starts;
  for (int s = 0; s < starts; ++s) {
    SmallVec v = SmallVec::Zero(r);
    if (s < r) {
      v(s) = 1.0;
    } else {
      for (int i = 0; i < r; ++i) v(i) = cplx(gauss(rng), gauss(rng));
      v.normalize();
    }
    double value = std::numeric_limits<double>::infinity();
    SmallVec xi(n);
    bool converged = false;
    for (int it = 0; it < opts.max_iterations; ++it) {
      // fixed v: A_jk = v^* Theta_jk v, minimize over w = conj(xi) against kappa
      SmallMat A(n, n);
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) A(j, k) = v.dot(blocks[j * n + k] * v);
      SmallVec w;
      min_generalized(hermitian_part(A), kf, w);
      xi = w.conjugate();
      const double xnorm = std::real(w.dot(kappa * w));
      // fixed xi: R = sum xi_j conj(xi_k) Theta_jk
      SmallMat R = SmallMat::Zero(r, r);
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) R += xi(j) * std::conj(xi(k)) * blocks[j * n + k];
      Eigen::SelfAdjointEigenSolver<SmallMat> es(hermitian_part(R));
      v = es.eigenvectors().col(0);
      const double next = es.eigenvalues()(0) / xnorm;
      if (std::abs(next - value) <= opts.tolerance * std::max(1.0, std::abs(next))) {
        value = next;
        converged = true;
        break;
      }
      value = next;
    }
    if (value < best.value) {
      best.value = value;
      best.xi = xi / std::sqrt(std::real(xi.conjugate().dot(kappa * xi.conjugate())));
      best.v = v;
      best.converged = converged;
    }
  }
  return best;
}

}  // namespace

double positivity_form(const CurvatureField& c, PositivityKind kind, Eigen::Index p,
                       const Eigen::VectorXcd& tau) {
  const int r = c.r();
  const PositivityKind arrangement_kind =
      kind == PositivityKind::Griffiths ? PositivityKind::Nakano : kind;
  const SmallMat Q = arrangement(c, arrangement_kind, p);
  const SmallVec w = tau.conjugate();
  const SmallMat norm = kron_identity(c.torus().kappa(), r);
  return std::real(w.dot(Q * w)) / std::real(w.dot(norm * w));
}

Eigen::VectorXd pointwise_margins(const CurvatureField& c, PositivityKind kind,
                                  const ProbeOptions& opts) {
  const Eigen::Index P = c.num_points();
  Eigen::VectorXd out(P);
  const SmallMat kappa = c.torus().kappa();
  const KappaFactor kf(kappa);
  const KappaFactor kf_big(kron_identity(c.torus().kappa(), c.r()));
  parallel_for(P, [&](std::ptrdiff_t p) {
    if (kind == PositivityKind::Griffiths) {
      out(p) = griffiths_point(c, p, opts, kf).value;
    } else {
      SmallVec w;
      out(p) = min_generalized(arrangement(c, kind, p), kf_big, w);
    }
  });
  return out;
}

PositivityReport positivity_probe(const CurvatureField& c, PositivityKind kind,
                                  const ProbeOptions& opts) {
  const Eigen::VectorXd margins = pointwise_margins(c, kind, opts);
  Eigen::Index loc = 0;
  const double m = margins.minCoeff(&loc);
  PositivityReport rep;
  rep.kind = kind;
  rep.margin = m;
  rep.location = loc;
  const int n = c.n(), r = c.r();
  rep.tensor.resize(n * r);
  if (kind == PositivityKind::Griffiths) {
    const GriffithsResult g = griffiths_point(c, loc, opts, KappaFactor(c.torus().kappa()));
    rep.xi = g.xi;
    rep.v = g.v;
    rep.converged = g.converged;
    for (int j = 0; j < n; ++j)
      for (int l = 0; l < r; ++l) rep.tensor(j * r + l) = g.xi(j) * g.v(l);
    rep.margin = positivity_form(c, kind, loc, rep.tensor);
  } else {
    SmallVec w;
    min_generalized(arrangement(c, kind, loc), KappaFactor(kron_identity(c.torus().kappa(), r)), w);
    rep.tensor = w.conjugate();
  }
  return rep;
}

PositivityReport positivity_probe(const BigHermitianField& theta) {
  const int r = theta.r;
  const TorusPtr& t = theta.theta.torus_ptr();
  const KappaFactor kf(kron_identity(t->kappa(), r));
  PositivityReport rep;
  rep.kind = PositivityKind::DualNakano;
  rep.margin = std::numeric_limits<double>::infinity();
  for (Eigen::Index p = 0; p < t->num_points(); ++p) {
    SmallVec w;
    const double m = min_generalized(hermitian_part(theta.theta.at(p)), kf, w);
    if (m < rep.margin) {
      rep.margin = m;
      rep.location = p;
      rep.tensor = w.conjugate();
    }
  }
  return rep;
}

}  // namespace hymlab
