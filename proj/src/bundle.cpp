#include "hymlab/bundle.hpp"

#include "hymlab/hash.hpp"
#include "hymlab/matfun.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <sstream>

namespace hymlab {

const char* to_string(BundleModel model) {
  return model == BundleModel::Split ? "split" : "extension";
}

BundleModel bundle_model_from_string(const std::string& name) {
  if (name == "split") return BundleModel::Split;
  if (name == "extension") return BundleModel::Extension;
  throw ConfigError("unknown bundle model '" + name + "' (expected split|extension)");
}

BundleSpec BundleSpec::split(int rank, int degree) {
  BundleSpec s;
  s.rank = rank;
  s.degree = degree;
  s.model = BundleModel::Split;
  return s;
}

BundleSpec BundleSpec::extension(int rank, int degree, int axis) {
  BundleSpec s;
  s.rank = rank;
  s.degree = degree;
  s.model = BundleModel::Extension;
  s.nilpotent = Eigen::MatrixXcd::Zero(rank, rank);
  s.nilpotent(0, rank - 1) = 1.0;
  s.twist_axis = axis;
  return s;
}

ChernNumbers chern_numbers(const BundleSpec& spec, int n) {
  ChernNumbers c;
  long long top = 1, factor = 1;
  for (int i = 0; i < n; ++i) {
    top *= static_cast<long long>(spec.rank) * spec.degree;
    factor *= spec.degree;
  }
  c.c1_top = top;
  c.per_factor.assign(spec.rank, factor);
  return c;
}

// ---------------------------------------------------------------------------
// Bundle

namespace {

void validate_spec(const BundleSpec& spec, int n) {
  if (spec.rank < 1 || spec.rank * n > kMaxBlock)
    throw ConfigError("rank must satisfy 1 <= r and n*r <= 6");
  if (spec.degree < 1) throw ConfigError("degree must be positive");
  if (spec.model == BundleModel::Extension) {
    if (spec.rank < 2) throw ConfigError("extension model needs rank >= 2");
    const auto& N = spec.nilpotent;
    if (N.rows() != spec.rank || N.cols() != spec.rank)
      throw ConfigError("nilpotent twist must be r x r");
    if ((N * N).cwiseAbs().maxCoeff() > 1e-12) throw ConfigError("twist matrix must satisfy N^2 = 0");
    if (spec.twist_axis < 0 || spec.twist_axis >= 2 * n) throw ConfigError("twist axis out of range");
  }
}

}  // namespace

BundlePtr Bundle::create(const TorusParams& params, const BundleSpec& spec) {
  validate_spec(spec, params.n);
  return create(Torus::create(params, static_cast<double>(chern_numbers(spec, params.n).c1_top)), spec);
}

BundlePtr Bundle::create(TorusPtr torus, const BundleSpec& spec) {
  validate_spec(spec, torus->dim());
  const double c1 = static_cast<double>(chern_numbers(spec, torus->dim()).c1_top);
  if (std::abs(torus->top_chern() - c1) > 1e-9 * c1)
    throw DomainMismatch("torus normalization does not match c_1(E)^n");
  std::shared_ptr<Bundle> b(new Bundle());
  b->spec_ = spec;
  b->torus_ = std::move(torus);
  const int r = spec.rank;
  const SmallMat I = SmallMat::Identity(r, r);
  if (spec.model == BundleModel::Extension) {
    b->nilpotent_ = spec.nilpotent;
    const SmallMat A = I + b->nilpotent_;
    const SmallMat Ainv = I - b->nilpotent_;
    b->endo_twist_ = Twist::make(spec.twist_axis, A, Ainv);
    b->form_twist_ = Twist::make(spec.twist_axis, Ainv.adjoint(), Ainv);
  } else {
    b->nilpotent_ = SmallMat::Zero(r, r);
  }
  std::ostringstream os;
  os.precision(17);
  os << "bundle;torus=" << b->torus_->hash() << ";r=" << r << ";d=" << spec.degree
     << ";model=" << to_string(spec.model) << ";axis=" << spec.twist_axis << ";N=";
  for (Eigen::Index i = 0; i < b->nilpotent_.size(); ++i)
    os << b->nilpotent_(i).real() << ',' << b->nilpotent_(i).imag() << ';';
  b->hash_ = fnv1a64(os.str());
  return b;
}

SmallMat Bundle::gauge(Eigen::Index p) const {
  const int r = rank();
  if (split()) return SmallMat::Identity(r, r);
  return SmallMat::Identity(r, r) - torus_->coordinate(p, spec_.twist_axis) * nilpotent_;
}

SmallMat Bundle::gauge_inverse(Eigen::Index p) const {
  const int r = rank();
  if (split()) return SmallMat::Identity(r, r);
  return SmallMat::Identity(r, r) + torus_->coordinate(p, spec_.twist_axis) * nilpotent_;
}

SmallMat Bundle::reference(Eigen::Index p) const {
  const SmallMat g = gauge(p);
  return g.adjoint() * g;
}

BundlePtr Bundle::dual() const {
  std::shared_ptr<Bundle> b(new Bundle(*this));
  b->line_sign_ = -line_sign_;
  b->nilpotent_ = -nilpotent_.transpose();
  b->spec_.nilpotent = b->nilpotent_;
  if (!split()) {
    const int r = rank();
    const SmallMat I = SmallMat::Identity(r, r);
    const SmallMat A = I + b->nilpotent_;
    const SmallMat Ainv = I - b->nilpotent_;
    b->endo_twist_ = Twist::make(spec_.twist_axis, A, Ainv);
    b->form_twist_ = Twist::make(spec_.twist_axis, Ainv.adjoint(), Ainv);
  }
  b->hash_ = fnv1a64("dual", hash_);
  return b;
}

// ---------------------------------------------------------------------------
// MetricField

MetricField::MetricField(BundlePtr bundle, MatrixField matrix)
    : bundle_(std::move(bundle)), K_(std::move(matrix)) {
  if (K_.dim() != bundle_->rank()) throw DomainMismatch("metric matrix size differs from the rank");
  if (K_.torus().hash() != bundle_->torus().hash())
    throw DomainMismatch("metric lives on a different torus");
  K_.set_twist(bundle_->form_twist());
}

SmallMat MetricField::periodic_form(Eigen::Index p) const {
  if (bundle_->split()) return K_.at(p);
  const SmallMat gi = bundle_->gauge_inverse(p);
  return gi.adjoint() * K_.at(p) * gi;
}

SmallMat MetricField::orthonormal_frame(Eigen::Index p) const {
  Eigen::LLT<SmallMat> llt(hermitian_part(periodic_form(p)));
  if (llt.info() != Eigen::Success) throw PositivityError("metric is not positive definite");
  const int r = rank();
  SmallMat Linv_adj = llt.matrixU().solve(SmallMat::Identity(r, r));  // L^{-*}
  return bundle_->gauge_inverse(p) * Linv_adj;
}

double MetricField::min_eigenvalue() const {
  double m = std::numeric_limits<double>::infinity();
  for (Eigen::Index p = 0; p < K_.num_points(); ++p)
    m = std::min(m, HermitianSpectrum<SmallMat>(hermitian_part(periodic_form(p))).min());
  return m;
}

double MetricField::max_condition_number() const {
  double c = 1.0;
  for (Eigen::Index p = 0; p < K_.num_points(); ++p) {
    HermitianSpectrum<SmallMat> s(hermitian_part(periodic_form(p)));
    c = std::max(c, s.max() / s.min());
  }
  return c;
}

MetricField MetricField::dual() const {
  auto b = bundle_->dual();
  MatrixField Kd(K_.torus_ptr(), rank(), b->form_twist());
  for (Eigen::Index p = 0; p < K_.num_points(); ++p)
    Kd.set(p, hermitian_part(SmallMat(K_.at(p).conjugate().inverse())));
  return MetricField(b, std::move(Kd));
}

MetricField MetricField::exp_update(const EndoField& u, double step) const {
  MatrixField next(K_.torus_ptr(), rank(), K_.twist());
  for (Eigen::Index p = 0; p < K_.num_points(); ++p) {
    const SmallMat C = orthonormal_frame(p);
    const SmallMat Cinv = C.inverse();
    const SmallMat U = hermitian_part(SmallMat(Cinv * u.at(p) * C)) * step;
    const SmallMat E = exp_hermitian(U);
    next.set(p, hermitian_part(SmallMat(Cinv.adjoint() * E * Cinv)));
  }
  return MetricField(bundle_, std::move(next));
}

// ---------------------------------------------------------------------------
// Endomorphism algebra

MetricField reference_metric(const BundlePtr& bundle) {
  MatrixField K(bundle->torus_ptr(), bundle->rank(), bundle->form_twist());
  for (Eigen::Index p = 0; p < K.num_points(); ++p) K.set(p, bundle->reference(p));
  return MetricField(bundle, std::move(K));
}

EndoField relative_endo(const MetricField& h) {
  const Bundle& b = h.bundle();
  EndoField u(h.matrix().torus_ptr(), h.rank(), b.endo_twist());
  for (Eigen::Index p = 0; p < u.num_points(); ++p) {
    const SmallMat gi = b.gauge_inverse(p);
    // B^{-1} = g^{-1} g^{-*}
    u.set(p, gi * gi.adjoint() * h.at(p));
  }
  return u;
}

EndoField form_to_endo(const MatrixField& q, const MetricField& h) {
  if (q.dim() != h.rank()) throw DomainMismatch("form size differs from the rank");
  EndoField u(h.matrix().torus_ptr(), h.rank(), h.bundle().endo_twist());
  for (Eigen::Index p = 0; p < u.num_points(); ++p) {
    Eigen::LLT<SmallMat> llt(hermitian_part(h.at(p)));
    if (llt.info() != Eigen::Success) throw PositivityError("form_to_endo: metric not positive");
    u.set(p, llt.solve(q.at(p)));
  }
  return u;
}

std::pair<ScalarField, EndoField> trace_free_split(const EndoField& u) {
  const int r = u.dim();
  ScalarField tau(u.torus_ptr());
  EndoField circ = u;
  for (Eigen::Index p = 0; p < u.num_points(); ++p) {
    const cplx t = u.at(p).trace() / static_cast<double>(r);
    tau[p] = t;
    for (int i = 0; i < r; ++i) circ.data()(i * r + i, p) -= t;
  }
  return {std::move(tau), std::move(circ)};
}

EndoField normalized_endo(const MetricField& h) {
  EndoField u = relative_endo(h);
  const int r = h.rank();
  for (Eigen::Index p = 0; p < u.num_points(); ++p) {
    const double det = h.at(p).determinant().real();
    if (!(det > 0.0)) throw PositivityError("normalized_endo: non-positive determinant");
    u.data().col(p) *= std::pow(det, -1.0 / r);
  }
  return u;
}

namespace {

void require_hermitian(const SmallMat& m, const char* what) {
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if (anti_hermitian_defect(m) > 1e-10 * scale)
    throw DomainMismatch(std::string(what) + ": field is not pointwise Hermitian");
}

}  // namespace

EndoField log_herm(const EndoField& u) {
  EndoField out(u.torus_ptr(), u.dim(), u.twist());
  for (Eigen::Index p = 0; p < u.num_points(); ++p) {
    const SmallMat m = u.at(p);
    require_hermitian(m, "log_herm");
    out.set(p, HermitianSpectrum<SmallMat>(hermitian_part(m)).log());
  }
  return out;
}

EndoField dlog_herm(const EndoField& u, const EndoField& v) {
  if (u.dim() != v.dim()) throw DomainMismatch("dlog_herm: size mismatch");
  EndoField out(u.torus_ptr(), u.dim(), u.twist());
  for (Eigen::Index p = 0; p < u.num_points(); ++p) {
    const SmallMat m = u.at(p);
    require_hermitian(m, "dlog_herm");
    out.set(p, HermitianSpectrum<SmallMat>(hermitian_part(m)).dlog(v.at(p)));
  }
  return out;
}

EndoField log_normalized_endo(const MetricField& h) {
  const Bundle& b = h.bundle();
  const int r = h.rank();
  EndoField out(h.matrix().torus_ptr(), r, b.endo_twist());
  for (Eigen::Index p = 0; p < out.num_points(); ++p) {
    const SmallMat hp = hermitian_part(h.periodic_form(p));
    const double det = hp.determinant().real();
    if (!(det > 0.0)) throw PositivityError("log h~°: non-positive determinant");
    SmallMat L = HermitianSpectrum<SmallMat>(hp).log();
    const double shift = std::log(det) / r;
    for (int i = 0; i < r; ++i) L(i, i) -= shift;
    out.set(p, b.gauge_inverse(p) * L * b.gauge(p));
  }
  return out;
}

}  // namespace hymlab
