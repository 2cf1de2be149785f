#include "hymlab/hym_system.hpp"

#include "hymlab/matfun.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <Eigen/SVD>

#include <cmath>
#include <limits>
#include <sstream>

namespace hymlab {

const char* to_string(OmegaVariant v) { return v == OmegaVariant::Fixed ? "fixed" : "beta"; }

const char* to_string(AlphaPolicy p) {
  switch (p) {
    case AlphaPolicy::Auto: return "auto";
    case AlphaPolicy::Raise: return "raise";
    case AlphaPolicy::Fixed: return "fixed";
  }
  return "?";
}

const char* to_string(TerminalStatus s) {
  switch (s) {
    case TerminalStatus::ReachedT1: return "REACHED_T1";
    case TerminalStatus::StepUnderflow: return "STEP_UNDERFLOW";
    case TerminalStatus::PositivityLost: return "POSITIVITY_LOST";
    case TerminalStatus::NewtonFail: return "NEWTON_FAIL";
  }
  return "?";
}

OmegaVariant omega_variant_from_string(const std::string& s) {
  if (s == "fixed") return OmegaVariant::Fixed;
  if (s == "beta") return OmegaVariant::Beta;
  throw ConfigError("unknown omega variant '" + s + "' (expected fixed or beta)");
}

AlphaPolicy alpha_policy_from_string(const std::string& s) {
  if (s == "auto") return AlphaPolicy::Auto;
  if (s == "raise") return AlphaPolicy::Raise;
  if (s == "fixed") return AlphaPolicy::Fixed;
  throw ConfigError("unknown alpha policy '" + s + "' (expected auto, raise or fixed)");
}

void SystemConfig::validate() const {
  auto need = [](bool ok, const char* msg) {
    if (!ok) throw ConfigError(msg);
  };
  need(alpha >= 0.0, "alpha must be non-negative");
  need(epsilon > 0.0, "epsilon must be positive");
  need(lambda >= 0.0, "lambda must be non-negative");
  need(std::isfinite(mu), "mu must be finite");
  need(schedule.initial_step > 0.0 && schedule.initial_step <= 1.0, "initial step must lie in (0, 1]");
  need(schedule.min_step > 0.0, "min step must be positive");
  need(schedule.grow >= 1.0, "step growth factor must be at least 1");
  need(schedule.shrink > 0.0 && schedule.shrink < 1.0, "step shrink factor must lie in (0, 1)");
  need(newton.tolerance > 0.0, "Newton tolerance must be positive");
  need(newton.max_iterations > 0, "Newton iteration cap must be positive");
  need(newton.gmres_restart > 0 && newton.gmres_max_iterations > 0, "GMRES limits must be positive");
  need(positivity_margin_floor > 0.0, "positivity margin floor must be positive");
  need(max_retries >= 0, "retry count must be non-negative");
}

namespace {

inline Eigen::Map<const Eigen::MatrixXcd> cblock(const ComponentArray& a, Eigen::Index p, int b, int rows,
                                                 int cols) {
  return Eigen::Map<const Eigen::MatrixXcd>(a.col(p).data() + b * rows * cols, rows, cols);
}

inline Eigen::Map<Eigen::MatrixXcd> mblock(ComponentArray& a, Eigen::Index p, int b, int rows, int cols) {
  return Eigen::Map<Eigen::MatrixXcd>(a.col(p).data() + b * rows * cols, rows, cols);
}

SmallMat trace_free_part(SmallMat m) {
  const cplx tr = m.trace() / static_cast<double>(m.rows());
  for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, i) -= tr;
  return m;
}

// Orthonormal block matrix theta = [Theta^_jk + s kappa_jk Id], index j * r + lambda.
SmallMat big_theta_at(const MetricGeometry& g, Eigen::Index p, double s) {
  const int n = g.n(), r = g.r();
  const Eigen::MatrixXcd& kappa = g.torus().kappa();
  SmallMat big(n * r, n * r);
  for (int j = 0; j < n; ++j)
    for (int k = 0; k < n; ++k) {
      SmallMat b = g.theta_orthonormal(p, j, k);
      for (int i = 0; i < r; ++i) b(i, i) += s * kappa(j, k);
      big.block(j * r, k * r, r, r) = b;
    }
  return big;
}

SmallMat kron_identity(const Eigen::MatrixXcd& a, int r) {
  const int n = static_cast<int>(a.rows());
  SmallMat out = SmallMat::Zero(n * r, n * r);
  for (int j = 0; j < n; ++j)
    for (int k = 0; k < n; ++k)
      for (int i = 0; i < r; ++i) out(j * r + i, k * r + i) = a(j, k);
  return out;
}

// Trace weights G with omega_0^{-n} (omega^{n-1} ^ X) = sum_jk G_kj X_jk, omega = W.
SmallMat trace_weights(const Eigen::MatrixXcd& kinv, const SmallMat& W, int n) {
  if (n == 1) return SmallMat(kinv);
  const SmallMat KW = kinv * W;
  return SmallMat(0.5 * (KW.trace() * kinv - KW * kinv));
}

}  // namespace

double theta_margin(const MetricGeometry& g, double offset) {
  const int n = g.n(), r = g.r();
  Eigen::LLT<SmallMat> kl(kron_identity(g.torus().kappa(), r));
  const SmallMat I = SmallMat::Identity(n * r, n * r);
  const SmallMat Linv = kl.matrixL().solve(I);
  const Eigen::Index P = g.torus().num_points();
  Eigen::VectorXd m(P);
  parallel_for(P, [&](std::ptrdiff_t p) {
    const SmallMat T = hermitian_part(SmallMat(Linv * big_theta_at(g, p, 0.0) * Linv.adjoint()));
    Eigen::SelfAdjointEigenSolver<SmallMat> es(T, Eigen::EigenvaluesOnly);
    m(p) = es.eigenvalues()(0);
  });
  return m.minCoeff() + offset;
}

double required_alpha(const MetricField& h, double margin) {
  return std::max(0.0, margin - theta_margin(MetricGeometry(h), 0.0));
}

ScalarField a0_init(const MetricField& h0, double alpha, double lambda) {
  MetricGeometry g(h0);
  const Torus& t = h0.torus();
  const int r = h0.rank();
  ScalarField a0(h0.matrix().torus_ptr());
  bool ok = true;
  for (Eigen::Index p = 0; p < t.num_points(); ++p) {
    Eigen::LLT<SmallMat> llt(hermitian_part(big_theta_at(g, p, alpha)));
    if (llt.info() != Eigen::Success) {
      ok = false;
      break;
    }
    double logdet = 0.0;
    for (Eigen::Index i = 0; i < llt.matrixLLT().rows(); ++i) logdet += 2.0 * std::log(llt.matrixLLT()(i, i).real());
    const double detK = h0.at(p).determinant().real();
    a0[p] = std::exp(logdet / r) / t.det_kappa() * std::pow(detK, lambda);
  }
  if (!ok) {
    std::ostringstream os;
    os << "theta(0, h0) is not positive for alpha = " << alpha << "; required alpha > "
       << required_alpha(h0, 0.0);
    throw PositivityError(os.str());
  }
  return a0;
}

// ---------------------------------------------------------------------------
// LinearizedSystem

LinearizedSystem::LinearizedSystem(const MetricField& h, double t, const SystemConfig& cfg, const ScalarField* a0,
                                   Mode mode)
    : geo_(h), cfg_(cfg), t_(t), mode_(mode), n_(h.torus().dim()), r_(h.rank()), P_(h.torus().num_points()) {
  const bool full = mode_ == Mode::Full;
  if (full) {
    if (!a0) throw DomainMismatch("the full system needs a0");
    if (a0->size() != P_) throw DomainMismatch("a0 lives on a different grid");
    a0_ = *a0;
  }
  const Torus& T = h.torus();
  const Bundle& B = h.bundle();
  const Eigen::MatrixXcd& kappa = T.kappa();
  const Eigen::MatrixXcd& kinv = T.kappa_inverse();
  const double detk = T.det_kappa();
  const int r2 = r_ * r_, nr = n_ * r_, n2 = n_ * n_;
  const double s = full ? (1.0 - t) * cfg.alpha : 0.0;
  const bool beta = full && cfg.omega == OmegaVariant::Beta && n_ > 1;

  theta_inv_.resize(nr * nr, P_);
  log_hat_.resize(r2, P_);
  gmat_.resize(n2, P_);
  tf_hat_.resize(n2 * r2, P_);
  spec_vecs_.resize(r2, P_);
  spec_vals_.resize(r_, P_);
  P_root_ = Eigen::VectorXd::Zero(P_);
  f_rhs_ = Eigen::VectorXd::Zero(P_);
  friction_ = Eigen::VectorXd::Zero(P_);
  res_.ma = ScalarField(h.matrix().torus_ptr());
  res_.tf = EndoField(h.matrix().torus_ptr(), r_, B.endo_twist());
  packed_.resize(size());
  Eigen::VectorXd ma_abs = Eigen::VectorXd::Zero(P_), tf_norm(P_);
  const SmallMat Inr = SmallMat::Identity(nr, nr);

  parallel_for(P_, [&](std::ptrdiff_t p) {
    const SmallMat C = geo_.frame(p);
    const SmallMat Cinv = geo_.frame_inverse(p);
    const double detK = h.at(p).determinant().real();
    if (!(detK > 0.0) || !std::isfinite(detK)) throw PositivityError("non-positive metric determinant");

    SmallMat X[4];
    for (int j = 0; j < n_; ++j)
      for (int k = 0; k < n_; ++k) {
        X[j * n_ + k] = trace_free_part(geo_.theta_orthonormal(p, j, k));
        mblock(tf_hat_, p, j * n_ + k, r_, r_) = X[j * n_ + k];
      }

    double ma = 0.0;
    if (full) {
      Eigen::LLT<SmallMat> llt(hermitian_part(big_theta_at(geo_, p, s)));
      if (llt.info() != Eigen::Success) throw PositivityError("theta(t, h) is not positive definite");
      double logdet = 0.0;
      for (int i = 0; i < nr; ++i) logdet += 2.0 * std::log(llt.matrixLLT()(i, i).real());
      mblock(theta_inv_, p, 0, nr, nr) = llt.solve(Inr);
      P_root_(p) = std::exp(logdet / r_) / detk;
      f_rhs_(p) = a0_[p].real() * std::pow(detK, -cfg.lambda);
      friction_(p) = cfg.epsilon * std::pow(detK, -cfg.mu);
      ma = P_root_(p) - f_rhs_(p);
    } else {
      theta_inv_.col(p).setZero();
      friction_(p) = cfg.epsilon;
    }

    SmallMat G = SmallMat(kinv) / static_cast<double>(n_);
    if (beta) {
      SmallMat W(n_, n_);
      for (int j = 0; j < n_; ++j)
        for (int k = 0; k < n_; ++k)
          W(j, k) = (geo_.theta_orthonormal(p, j, k).trace() + static_cast<double>(r_) * s * kappa(j, k)) /
                    (r_ * cfg.alpha + 1.0);
      G = trace_weights(kinv, W, n_);
    }
    mblock(gmat_, p, 0, n_, n_) = G;

    // log h~° in the periodic gauge, then to the orthonormal frame
    const SmallMat hp = hermitian_part(h.periodic_form(p));
    HermitianSpectrum<SmallMat> sp(hp);
    sp.require_positive("metric periodic form");
    mblock(spec_vecs_, p, 0, r_, r_) = sp.vectors;
    spec_vals_.col(p) = sp.values;
    SmallMat Lp = sp.log();
    const double shift = sp.values.array().log().sum() / r_;
    for (int i = 0; i < r_; ++i) Lp(i, i) -= shift;
    const SmallMat Lh = B.gauge_inverse(p) * Lp * B.gauge(p);
    const SmallMat Lhat = hermitian_part(SmallMat(Cinv * Lh * C));
    mblock(log_hat_, p, 0, r_, r_) = Lhat;

    SmallMat R = friction_(p) * Lhat;
    for (int j = 0; j < n_; ++j)
      for (int k = 0; k < n_; ++k) R += G(k, j) * X[j * n_ + k];
    R = hermitian_part(R);
    res_.tf.set(p, C * R * Cinv);
    res_.ma[p] = ma;
    ma_abs(p) = std::abs(ma);
    tf_norm(p) = R.norm();
    SmallMat packed_mat = R;
    if (full)
      for (int i = 0; i < r_; ++i) packed_mat(i, i) += ma;
    pack_hermitian(packed_mat, packed_.segment(p * r2, r2));
  });
  res_.ma_sup = ma_abs.maxCoeff();
  res_.tf_sup = tf_norm.maxCoeff();
}

double LinearizedSystem::merit() const { return packed_.norm() / std::sqrt(static_cast<double>(packed_.size())); }

void LinearizedSystem::apply_raw(const ComponentArray& U, Eigen::VectorXd& scalar, ComponentArray& tf_hat) const {
  const MetricField& h = geo_.metric();
  const Bundle& B = h.bundle();
  const Torus& T = h.torus();
  const Eigen::MatrixXcd& kinv = T.kappa_inverse();
  const int r2 = r_ * r_, nr = n_ * r_;
  const bool full = mode_ == Mode::Full;
  const bool beta = full && cfg_.omega == OmegaVariant::Beta && n_ > 1;
  const double rd = static_cast<double>(r_);

  // Hermitian variation of the metric matrix, V = K u = C^{-*} U C^{-1}
  ComponentArray V(r2, P_);
  ComponentArray Uin = U;
  parallel_for(P_, [&](std::ptrdiff_t p) {
    SmallMat Up = cblock(U, p, 0, r_, r_);
    if (!full) Up = trace_free_part(Up);
    mblock(Uin, p, 0, r_, r_) = Up;
    const SmallMat Cinv = geo_.frame_inverse(p);
    mblock(V, p, 0, r_, r_) = Cinv.adjoint() * Up * Cinv;
  });
  const DiffOps::Derivatives dV = T.ops().all(V, r_, B.form_twist());
  const DiffOps::Derivatives& dK = geo_.dK();

  scalar.resize(P_);
  tf_hat.resize(r2, P_);
  parallel_for(P_, [&](std::ptrdiff_t p) {
    const SmallMat C = geo_.frame(p);
    const SmallMat Cinv = geo_.frame_inverse(p);
    const SmallMat K = h.at(p);
    const SmallMat Kinv = geo_.K_inverse(p);
    const SmallMat Up = cblock(Uin, p, 0, r_, r_);
    const double trU = cblock(U, p, 0, r_, r_).trace().real();
    const SmallMat u = C * Up * Cinv;

    SmallMat dTheta[4];
    for (int j = 0; j < n_; ++j)
      for (int k = 0; k < n_; ++k) {
        const SmallMat DjK = cblock(dK.dz[j], p, 0, r_, r_);
        const SmallMat DbkK = cblock(dK.dzbar[k], p, 0, r_, r_);
        const SmallMat DjV = cblock(dV.dz[j], p, 0, r_, r_);
        const SmallMat DbkV = cblock(dV.dzbar[k], p, 0, r_, r_);
        const SmallMat DDV = cblock(dV.dzbar_dz[j * n_ + k], p, 0, r_, r_);
        const SmallMat dM = DbkV * Kinv * DjK - DbkK * u * Kinv * DjK + DbkK * Kinv * DjV - DDV;
        dTheta[j * n_ + k] = -u * Kinv * geo_.M(p, j, k) + Kinv * dM;
      }
    // variation of the K-symmetrized curvature, then to the orthonormal frame
    SmallMat dHat[4];
    for (int j = 0; j < n_; ++j)
      for (int k = 0; k < n_; ++k) {
        const SmallMat Y = Kinv * geo_.theta_holomorphic(p, k, j).adjoint() * K;
        const SmallMat dS = 0.5 * (dTheta[j * n_ + k] - u * Y + Kinv * dTheta[k * n_ + j].adjoint() * K + Y * u);
        dHat[j * n_ + k] = Cinv * dS * C;
      }

    const SmallMat G = cblock(gmat_, p, 0, n_, n_);
    SmallMat out = SmallMat::Zero(r_, r_);
    for (int j = 0; j < n_; ++j)
      for (int k = 0; k < n_; ++k) out += G(k, j) * trace_free_part(dHat[j * n_ + k]);
    if (beta) {
      SmallMat dW(n_, n_);
      for (int j = 0; j < n_; ++j)
        for (int k = 0; k < n_; ++k) dW(j, k) = dHat[j * n_ + k].trace() / (rd * cfg_.alpha + 1.0);
      const SmallMat KdW = kinv * dW;
      const SmallMat dG = 0.5 * (KdW.trace() * kinv - KdW * kinv);
      for (int j = 0; j < n_; ++j)
        for (int k = 0; k < n_; ++k) out += dG(k, j) * cblock(tf_hat_, p, j * n_ + k, r_, r_);
    }

    // friction: d log h~° = g^{-1} dlog_{h^}(h^ g u g^{-1}) g - tr(u)/r
    const SmallMat g = B.gauge(p);
    const SmallMat gi = B.gauge_inverse(p);
    HermitianSpectrum<SmallMat> sp;
    sp.vectors = cblock(spec_vecs_, p, 0, r_, r_);
    sp.values = spec_vals_.col(p);
    const SmallMat hp = sp.apply([](double v) { return cplx(v, 0.0); });
    const SmallMat dlog = gi * sp.differential(log_divided_difference, SmallMat(hp * g * u * gi)) * g;
    SmallMat dL = Cinv * dlog * C;
    const double trUin = Up.trace().real();
    for (int i = 0; i < r_; ++i) dL(i, i) -= trUin / rd;
    out += friction_(p) * dL;
    if (full) out -= (friction_(p) * cfg_.mu * trU) * SmallMat(cblock(log_hat_, p, 0, r_, r_));
    mblock(tf_hat, p, 0, r_, r_) = out;

    if (full) {
      const auto Q = cblock(theta_inv_, p, 0, nr, nr);
      cplx acc = 0.0;
      for (int j = 0; j < n_; ++j)
        for (int k = 0; k < n_; ++k) acc += (Q.block(k * r_, j * r_, r_, r_) * dHat[j * n_ + k]).trace();
      scalar(p) = P_root_(p) / rd * acc.real() + cfg_.lambda * f_rhs_(p) * trU;
    } else {
      scalar(p) = trU / rd;
    }
  });
}

Eigen::VectorXd LinearizedSystem::apply(const Eigen::VectorXd& x) const {
  const int r2 = r_ * r_;
  ComponentArray U(r2, P_);
  for (Eigen::Index p = 0; p < P_; ++p)
    mblock(U, p, 0, r_, r_) = unpack_hermitian<SmallMat>(r_, x.segment(p * r2, r2));
  Eigen::VectorXd scalar;
  ComponentArray tf;
  apply_raw(U, scalar, tf);
  Eigen::VectorXd y(size());
  for (Eigen::Index p = 0; p < P_; ++p) {
    SmallMat m = cblock(tf, p, 0, r_, r_);
    for (int i = 0; i < r_; ++i) m(i, i) += scalar(p);
    pack_hermitian(m, y.segment(p * r2, r2));
  }
  return y;
}

EndoField LinearizedSystem::unpack_direction(const Eigen::VectorXd& x) const {
  const Bundle& B = geo_.bundle();
  const int r2 = r_ * r_;
  EndoField u(geo_.metric().matrix().torus_ptr(), r_, B.endo_twist());
  for (Eigen::Index p = 0; p < P_; ++p) {
    const SmallMat Up = unpack_hermitian<SmallMat>(r_, x.segment(p * r2, r2));
    u.set(p, geo_.frame(p) * Up * geo_.frame_inverse(p));
  }
  return u;
}

Eigen::VectorXd LinearizedSystem::pack_direction(const EndoField& u) const {
  const int r2 = r_ * r_;
  Eigen::VectorXd x(size());
  for (Eigen::Index p = 0; p < P_; ++p)
    pack_hermitian(SmallMat(geo_.frame_inverse(p) * u.at(p) * geo_.frame(p)), x.segment(p * r2, r2));
  return x;
}

std::pair<ScalarField, EndoField> LinearizedSystem::apply_endo(const EndoField& u) const {
  const int r2 = r_ * r_;
  ComponentArray U(r2, P_);
  for (Eigen::Index p = 0; p < P_; ++p)
    mblock(U, p, 0, r_, r_) = geo_.frame_inverse(p) * u.at(p) * geo_.frame(p);
  Eigen::VectorXd scalar;
  ComponentArray tf;
  apply_raw(U, scalar, tf);
  ScalarField dma(geo_.metric().matrix().torus_ptr());
  EndoField dtf(geo_.metric().matrix().torus_ptr(), r_, geo_.bundle().endo_twist());
  for (Eigen::Index p = 0; p < P_; ++p) {
    dma[p] = mode_ == Mode::Full ? scalar(p) : 0.0;
    dtf.set(p, geo_.frame(p) * SmallMat(cblock(tf, p, 0, r_, r_)) * geo_.frame_inverse(p));
  }
  return {std::move(dma), std::move(dtf)};
}

void LinearizedSystem::build_preconditioner() const {
  const Torus& T = geo_.torus();
  const DiffOps& ops = T.ops();
  const DerivativeScheme scheme = ops.scheme_for(geo_.bundle().form_twist());
  const int r2 = r_ * r_, nr = n_ * r_;
  const bool full = mode_ == Mode::Full;
  const double rd = static_cast<double>(r_);
  const double inv = 1.0 / static_cast<double>(P_);

  // frozen (mean) coefficients
  Eigen::MatrixXcd Q = Eigen::MatrixXcd::Zero(nr, nr);
  Eigen::MatrixXcd G = Eigen::MatrixXcd::Zero(n_, n_);
  for (Eigen::Index p = 0; p < P_; ++p) {
    Q += cblock(theta_inv_, p, 0, nr, nr);
    G += cblock(gmat_, p, 0, n_, n_);
  }
  Q *= inv;
  G *= inv;
  const double Pbar = P_root_.mean();
  const double fbar = cfg_.lambda * f_rhs_.mean();
  const double Fbar = friction_.mean();

  mode_inverse_.assign(P_, Eigen::MatrixXcd());
  parallel_for(P_, [&](std::ptrdiff_t q) {
    cplx sigma[4];
    bool zero = true;
    for (int j = 0; j < n_; ++j)
      for (int k = 0; k < n_; ++k) {
        sigma[j * n_ + k] = -ops.symbol_mixed(j, k, q, scheme);
        if (std::abs(sigma[j * n_ + k]) > 0.0) zero = false;
      }
    cplx tf_coeff = Fbar;
    for (int j = 0; j < n_; ++j)
      for (int k = 0; k < n_; ++k) tf_coeff += G(k, j) * sigma[j * n_ + k];
    Eigen::MatrixXcd A(r2, r2);
    for (int b = 0; b < r_; ++b)
      for (int a = 0; a < r_; ++a) {
        Eigen::MatrixXcd E = Eigen::MatrixXcd::Zero(r_, r_);
        E(a, b) = 1.0;
        const double trE = a == b ? 1.0 : 0.0;
        Eigen::MatrixXcd Ec = E;
        for (int i = 0; i < r_; ++i) Ec(i, i) -= trE / rd;
        Eigen::MatrixXcd out = tf_coeff * Ec;
        cplx c;
        if (full) {
          c = 0.0;
          for (int j = 0; j < n_; ++j)
            for (int k = 0; k < n_; ++k) c += sigma[j * n_ + k] * Q(k * r_ + b, j * r_ + a);
          c *= Pbar / rd;
          c += (fbar > 0.0 || !zero ? fbar : Pbar / rd) * trE;
        } else {
          c = trE / rd;
        }
        for (int i = 0; i < r_; ++i) out(i, i) += c;
        A.col(a + b * r_) = Eigen::Map<const Eigen::VectorXcd>(out.data(), r2);
      }
    mode_inverse_[q] = A.fullPivLu().inverse();
  });
}

Eigen::VectorXd LinearizedSystem::precondition(const Eigen::VectorXd& y) const {
  if (mode_inverse_.empty()) build_preconditioner();
  const int r2 = r_ * r_;
  ComponentArray Y(r2, P_);
  for (Eigen::Index p = 0; p < P_; ++p)
    mblock(Y, p, 0, r_, r_) = unpack_hermitian<SmallMat>(r_, y.segment(p * r2, r2));
  const DiffOps& ops = geo_.torus().ops();
  ops.fft_forward(Y);
  parallel_for(P_, [&](std::ptrdiff_t q) { Y.col(q) = mode_inverse_[q] * Y.col(q); });
  ops.fft_inverse(Y);
  Eigen::VectorXd x(size());
  for (Eigen::Index p = 0; p < P_; ++p)
    pack_hermitian(SmallMat(cblock(Y, p, 0, r_, r_)), x.segment(p * r2, r2));
  return x;
}

SystemResidual residual(const MetricField& h, double t, const SystemConfig& cfg, const ScalarField& a0) {
  return LinearizedSystem(h, t, cfg, &a0).residual();
}

std::pair<ScalarField, EndoField> linearized_apply(const MetricField& h, double t, const SystemConfig& cfg,
                                                   const ScalarField& a0, const EndoField& u) {
  return LinearizedSystem(h, t, cfg, &a0).apply_endo(u);
}

// ---------------------------------------------------------------------------
// PrincipalSymbol

PrincipalSymbol::PrincipalSymbol(const MetricField& h, double t, const SystemConfig& cfg, Eigen::Index point)
    : PrincipalSymbol(MetricGeometry(h), t, cfg, point) {}

PrincipalSymbol::PrincipalSymbol(const MetricGeometry& g, double t, const SystemConfig& cfg, Eigen::Index point)
    : n_(g.n()), r_(g.r()) {
  theta_ = hermitian_part(big_theta_at(g, point, (1.0 - t) * cfg.alpha));
  Eigen::LLT<Eigen::MatrixXcd> llt(theta_);
  if (llt.info() != Eigen::Success) throw PositivityError("principal symbol: theta is not positive");
  theta_inv_ = llt.solve(Eigen::MatrixXcd::Identity(n_ * r_, n_ * r_));
  det_theta_ = theta_.determinant().real();
  det_kappa_ = g.torus().det_kappa();
  kappa_inv_ = g.torus().kappa_inverse();
}

double PrincipalSymbol::xi_norm2(const Eigen::VectorXcd& xi) const {
  cplx s = 0.0;
  for (int j = 0; j < n_; ++j)
    for (int k = 0; k < n_; ++k) s += kappa_inv_(k, j) * xi(j) * std::conj(xi(k));
  return s.real();
}

PrincipalSymbol::Action PrincipalSymbol::apply(const Eigen::VectorXcd& xi, const SmallMat& u) const {
  const double Proot = std::pow(det_theta_, 1.0 / r_) / det_kappa_;
  cplx acc = 0.0;
  for (int j = 0; j < n_; ++j)
    for (int k = 0; k < n_; ++k)
      acc += xi(j) * std::conj(xi(k)) * (theta_inv_.block(k * r_, j * r_, r_, r_) * u).trace();
  Action a;
  a.ma = -Proot / r_ * acc;
  a.tf = -(xi_norm2(xi) / n_) * trace_free_part(u);
  return a;
}

SmallMat PrincipalSymbol::inverse(const Eigen::VectorXcd& xi, const Action& y) const {
  const double Proot = std::pow(det_theta_, 1.0 / r_) / det_kappa_;
  const double x2 = xi_norm2(xi);
  auto contract = [&](const SmallMat& X) {
    cplx acc = 0.0;
    for (int j = 0; j < n_; ++j)
      for (int k = 0; k < n_; ++k)
        acc += xi(j) * std::conj(xi(k)) * (theta_inv_.block(k * r_, j * r_, r_, r_) * X).trace();
    return acc;
  };
  const SmallMat v = trace_free_part(y.tf);
  const SmallMat I = SmallMat::Identity(r_, r_);
  const cplx tau = (static_cast<double>(n_) / x2 * contract(v) - static_cast<double>(r_) / Proot * y.ma) / contract(I);
  return SmallMat(tau * I - (static_cast<double>(n_) / x2) * v);
}

double PrincipalSymbol::inverse_norm(const Eigen::VectorXcd& xi) const {
  const int r2 = r_ * r_;
  Eigen::MatrixXd M(r2, r2);
  Eigen::VectorXd e = Eigen::VectorXd::Zero(r2), col(r2);
  for (int c = 0; c < r2; ++c) {
    e.setZero();
    e(c) = 1.0;
    const SmallMat Y = unpack_hermitian<SmallMat>(r_, e);
    Action a;
    a.ma = Y.trace() / static_cast<double>(r_);
    a.tf = trace_free_part(Y);
    pack_hermitian(inverse(xi, a), col);
    M.col(c) = col;
  }
  return Eigen::JacobiSVD<Eigen::MatrixXd>(M).singularValues()(0);
}

double PrincipalSymbol::tolerated_perturbation(int r, int n) {
  return 1.0 / (std::sqrt(static_cast<double>(r * r + 1)) * n);
}

}  // namespace hymlab
