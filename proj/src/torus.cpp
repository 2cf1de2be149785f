#include "hymlab/torus.hpp"

#include "hymlab/hash.hpp"
#include "hymlab/matfun.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <numbers>
#include <sstream>

namespace hymlab {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

void require_same_domain(const Torus& a, const Torus& b) {
  if (&a != &b && a.hash() != b.hash()) throw DomainMismatch("fields live on different tori");
}

int mode_number(int i, int N) { return i <= N / 2 ? i : i - N; }

}  // namespace

const char* to_string(DerivativeScheme scheme) {
  return scheme == DerivativeScheme::Spectral ? "spectral" : "fd4";
}

DerivativeScheme derivative_scheme_from_string(const std::string& name) {
  if (name == "spectral") return DerivativeScheme::Spectral;
  if (name == "fd4") return DerivativeScheme::FiniteDifference4;
  throw ConfigError("unknown derivative scheme '" + name + "' (expected spectral|fd4)");
}

TorusParams TorusParams::square(int n, int resolution) {
  TorusParams p;
  p.n = n;
  p.resolution = resolution;
  p.period = Eigen::MatrixXcd::Identity(n, n) * cplx(0.0, 1.0);
  p.kappa_shape = Eigen::MatrixXcd::Identity(n, n);
  return p;
}

// ---------------------------------------------------------------------------
// Torus

std::shared_ptr<const Torus> Torus::create(const TorusParams& params, double top_chern) {
  const int n = params.n;
  if (n != 1 && n != 2) throw ConfigError("complex dimension must be 1 or 2");
  if (params.resolution < 8 || params.resolution % 2 != 0)
    throw ConfigError("resolution must be even and at least 8");
  if (params.period.rows() != n || params.period.cols() != n)
    throw ConfigError("period matrix must be n x n");
  if (!(top_chern > 0.0)) throw ConfigError("top Chern number must be positive");

  std::shared_ptr<Torus> t(new Torus());
  t->params_ = params;
  if (t->params_.kappa_shape.size() == 0) t->params_.kappa_shape = Eigen::MatrixXcd::Identity(n, n);
  const Eigen::MatrixXcd& shape = t->params_.kappa_shape;
  if (shape.rows() != n || shape.cols() != n) throw ConfigError("kappa must be n x n");
  if (anti_hermitian_defect(shape) > 1e-12) throw ConfigError("kappa must be Hermitian");
  HermitianSpectrum<Eigen::MatrixXcd> shape_spec(shape);
  if (shape_spec.min() <= 0.0) throw ConfigError("kappa must be positive definite");

  const Eigen::MatrixXd B = params.period.imag();
  const double detB = B.determinant();
  if (std::abs(detB) < 1e-12) throw ConfigError("imaginary part of the period matrix is degenerate");

  t->n_ = n;
  t->N_ = params.resolution;
  t->points_ = 1;
  for (int a = 0; a < 2 * n; ++a) t->points_ *= t->N_;
  t->top_chern_ = top_chern;
  t->volume_ = std::abs(detB);

  // int (2 pi)^{-n} 2^n det(kappa) dLeb = top_chern
  const double det_shape = shape.determinant().real();
  const double target_det = top_chern * std::pow(std::numbers::pi, n) / t->volume_;
  const double scale = std::pow(target_det / det_shape, 1.0 / n);
  t->kappa_ = hermitian_part(shape * scale);
  t->kappa_inv_ = t->kappa_.inverse();
  t->det_kappa_ = t->kappa_.determinant().real();
  t->kappa_min_ = shape_spec.min() * scale;

  // z = x + Lambda y  =>  dy/dz = B^{-1}/(2i), dx/dz = I - Lambda B^{-1}/(2i)
  const Eigen::MatrixXcd Binv = B.inverse().cast<cplx>();
  const cplx two_i(0.0, 2.0);
  const Eigen::MatrixXcd dy_dz = Binv / two_i;
  const Eigen::MatrixXcd dx_dz = Eigen::MatrixXcd::Identity(n, n) - params.period * Binv / two_i;
  t->dz_.resize(n, 2 * n);
  for (int j = 0; j < n; ++j)
    for (int k = 0; k < n; ++k) {
      t->dz_(j, k) = dx_dz(k, j);
      t->dz_(j, n + k) = dy_dz(k, j);
    }
  t->dzbar_ = t->dz_.conjugate();

  std::ostringstream os;
  os.precision(17);
  os << "torus;n=" << n << ";N=" << t->N_ << ";scheme=" << to_string(params.scheme) << ";period=";
  for (Eigen::Index i = 0; i < params.period.size(); ++i)
    os << params.period(i).real() << ',' << params.period(i).imag() << ';';
  os << "kappa=";
  for (Eigen::Index i = 0; i < t->kappa_.size(); ++i)
    os << t->kappa_(i).real() << ',' << t->kappa_(i).imag() << ';';
  t->hash_ = fnv1a64(os.str());

  t->ops_ = std::make_shared<DiffOps>(*t);
  return t;
}

double Torus::omega_density() const { return std::pow(2.0, n_) * det_kappa_; }

std::array<int, 4> Torus::multi_index(Eigen::Index p) const {
  std::array<int, 4> m{0, 0, 0, 0};
  for (int a = 0; a < 2 * n_; ++a) {
    m[a] = static_cast<int>(p % N_);
    p /= N_;
  }
  return m;
}

Eigen::Index Torus::index(const std::array<int, 4>& multi) const {
  Eigen::Index p = 0;
  for (int a = 2 * n_ - 1; a >= 0; --a) p = p * N_ + ((multi[a] % N_) + N_) % N_;
  return p;
}

double Torus::coordinate(Eigen::Index p, int axis) const {
  for (int a = 0; a < axis; ++a) p /= N_;
  return static_cast<double>(p % N_) / N_;
}

Eigen::VectorXd Torus::lattice_point(Eigen::Index p) const {
  Eigen::VectorXd x(2 * n_);
  for (int a = 0; a < 2 * n_; ++a) {
    x(a) = static_cast<double>(p % N_) / N_;
    p /= N_;
  }
  return x;
}

Eigen::VectorXcd Torus::z(Eigen::Index p) const {
  const Eigen::VectorXd x = lattice_point(p);
  return x.head(n_).cast<cplx>() + params_.period * x.tail(n_).cast<cplx>();
}

// ---------------------------------------------------------------------------
// Twist

Twist Twist::make(int axis, const SmallMat& left, const SmallMat& right) {
  Twist t;
  t.axis = axis;
  t.left = left;
  t.right = right;
  t.left_inv = left.inverse();
  t.right_inv = right.inverse();
  return t;
}

bool Twist::same_as(const Twist& other, double tol) const {
  if (axis != other.axis) return false;
  if (periodic()) return true;
  return (left - other.left).cwiseAbs().maxCoeff() <= tol &&
         (right - other.right).cwiseAbs().maxCoeff() <= tol;
}

// ---------------------------------------------------------------------------
// ScalarField

ScalarField::ScalarField(TorusPtr torus)
    : torus_(std::move(torus)), values_(Eigen::VectorXcd::Zero(torus_->num_points())) {}

ScalarField::ScalarField(TorusPtr torus, Eigen::VectorXcd values)
    : torus_(std::move(torus)), values_(std::move(values)) {
  if (values_.size() != torus_->num_points()) throw DomainMismatch("scalar field size mismatch");
}

ScalarField ScalarField::constant(TorusPtr torus, cplx value) {
  ScalarField s(torus);
  s.values_.setConstant(value);
  return s;
}

ScalarField& ScalarField::operator+=(const ScalarField& o) {
  require_same_domain(*torus_, *o.torus_);
  values_ += o.values_;
  return *this;
}

ScalarField& ScalarField::operator-=(const ScalarField& o) {
  require_same_domain(*torus_, *o.torus_);
  values_ -= o.values_;
  return *this;
}

ScalarField& ScalarField::operator*=(cplx s) {
  values_ *= s;
  return *this;
}

ScalarField operator+(ScalarField a, const ScalarField& b) { return a += b; }
ScalarField operator-(ScalarField a, const ScalarField& b) { return a -= b; }
ScalarField operator*(cplx s, ScalarField a) { return a *= s; }

// ---------------------------------------------------------------------------
// MatrixField

MatrixField::MatrixField(TorusPtr torus, int dim, Twist twist)
    : torus_(std::move(torus)),
      dim_(dim),
      twist_(std::move(twist)),
      data_(ComponentArray::Zero(dim * dim, torus_->num_points())) {
  if (dim < 1 || dim > kMaxBlock) throw DomainMismatch("matrix field dimension out of range");
}

MatrixField MatrixField::identity(TorusPtr torus, int dim, Twist twist) {
  MatrixField f(std::move(torus), dim, std::move(twist));
  for (int i = 0; i < dim; ++i) f.data_.row(i * dim + i).setOnes();
  return f;
}

MatrixField MatrixField::zero(TorusPtr torus, int dim, Twist twist) {
  return MatrixField(std::move(torus), dim, std::move(twist));
}

SmallMat MatrixField::at(Eigen::Index p) const {
  return Eigen::Map<const Eigen::MatrixXcd>(data_.col(p).data(), dim_, dim_);
}

void MatrixField::set(Eigen::Index p, const SmallMat& m) {
  Eigen::Map<Eigen::MatrixXcd>(data_.col(p).data(), dim_, dim_) = m;
}

double MatrixField::sup_norm() const { return data_.size() ? data_.cwiseAbs().maxCoeff() : 0.0; }

double MatrixField::anti_hermitian_defect() const {
  double worst = 0.0;
  for (Eigen::Index p = 0; p < num_points(); ++p)
    worst = std::max(worst, hymlab::anti_hermitian_defect(at(p)));
  return worst;
}

double MatrixField::max_trace_abs() const {
  double worst = 0.0;
  for (Eigen::Index p = 0; p < num_points(); ++p) worst = std::max(worst, std::abs(at(p).trace()));
  return worst;
}

MatrixField& MatrixField::operator+=(const MatrixField& o) {
  require_same_domain(*torus_, *o.torus_);
  if (o.dim_ != dim_) throw DomainMismatch("matrix field dimension mismatch");
  data_ += o.data_;
  return *this;
}

MatrixField& MatrixField::operator-=(const MatrixField& o) {
  require_same_domain(*torus_, *o.torus_);
  if (o.dim_ != dim_) throw DomainMismatch("matrix field dimension mismatch");
  data_ -= o.data_;
  return *this;
}

MatrixField& MatrixField::operator*=(cplx s) {
  data_ *= s;
  return *this;
}

MatrixField operator+(MatrixField a, const MatrixField& b) { return a += b; }
MatrixField operator-(MatrixField a, const MatrixField& b) { return a -= b; }
MatrixField operator*(cplx s, MatrixField a) { return a *= s; }

// ---------------------------------------------------------------------------
// DiffOps

DiffOps::DiffOps(const Torus& torus)
    : torus_(&torus), n_(torus.dim()), N_(torus.resolution()), points_(torus.num_points()) {}

DerivativeScheme DiffOps::scheme_for(const Twist& twist) const {
  return twist.periodic() ? torus_->scheme() : DerivativeScheme::FiniteDifference4;
}

cplx DiffOps::symbol_first_axis(int axis, Eigen::Index mode, DerivativeScheme scheme) const {
  const int i = torus_->multi_index(mode)[axis];
  if (scheme == DerivativeScheme::Spectral) {
    if (2 * i == N_) return 0.0;
    return cplx(0.0, kTwoPi * mode_number(i, N_));
  }
  const double theta = kTwoPi * i / N_;
  return cplx(0.0, (8.0 * std::sin(theta) - std::sin(2.0 * theta)) * N_ / 6.0);
}

cplx DiffOps::symbol_second_axes(int a, int b, Eigen::Index mode, DerivativeScheme scheme) const {
  if (a != b) return symbol_first_axis(a, mode, scheme) * symbol_first_axis(b, mode, scheme);
  const int i = torus_->multi_index(mode)[a];
  if (scheme == DerivativeScheme::Spectral) {
    const double k = kTwoPi * mode_number(i, N_);
    return -k * k;
  }
  const double theta = kTwoPi * i / N_;
  return (-2.0 * std::cos(2.0 * theta) + 32.0 * std::cos(theta) - 30.0) * N_ * N_ / 12.0;
}

cplx DiffOps::symbol_mixed(int j, int k, Eigen::Index mode, DerivativeScheme scheme) const {
  const Eigen::MatrixXcd& dz = torus_->dz();
  const Eigen::MatrixXcd& dzb = torus_->dzbar();
  cplx s = 0.0;
  for (int a = 0; a < 2 * n_; ++a)
    for (int b = 0; b < 2 * n_; ++b) {
      const cplx c = dzb(k, b) * dz(j, a);
      if (c != 0.0) s += c * symbol_second_axes(a, b, mode, scheme);
    }
  return s;
}

namespace {

// Applies a 1D transform along every grid axis of every row (component).
template <bool Forward>
void fft_rows(ComponentArray& f, int n_axes, int N) {
  Eigen::FFT<double> fft;
  std::vector<cplx> in(N), out(N);
  const Eigen::Index points = f.cols();
  for (Eigen::Index c = 0; c < f.rows(); ++c) {
    Eigen::Index stride = 1;
    for (int a = 0; a < n_axes; ++a) {
      const Eigen::Index block = stride * N;
      for (Eigen::Index base = 0; base < points; base += block)
        for (Eigen::Index off = 0; off < stride; ++off) {
          const Eigen::Index start = base + off;
          for (int i = 0; i < N; ++i) in[i] = f(c, start + i * stride);
          if constexpr (Forward)
            fft.fwd(out, in);
          else
            fft.inv(out, in);
          for (int i = 0; i < N; ++i) f(c, start + i * stride) = out[i];
        }
      stride = block;
    }
  }
}

}  // namespace

void DiffOps::fft_forward(ComponentArray& f) const { fft_rows<true>(f, 2 * n_, N_); }
void DiffOps::fft_inverse(ComponentArray& f) const { fft_rows<false>(f, 2 * n_, N_); }

namespace {

// Value of f at point q seen from the fundamental cell shifted by `wraps`
// lattice units along the twist axis.
inline void twisted_value(const ComponentArray& f, Eigen::Index q, int dim, const Twist& twist,
                          int wraps, cplx* out) {
  const Eigen::Index rows = f.rows();
  if (wraps == 0 || twist.periodic()) {
    for (Eigen::Index c = 0; c < rows; ++c) out[c] = f(c, q);
    return;
  }
  Eigen::Map<const Eigen::MatrixXcd> m(f.col(q).data(), dim, dim);
  Eigen::Map<Eigen::MatrixXcd> o(out, dim, dim);
  if (wraps > 0)
    o.noalias() = twist.left * m * twist.right;
  else
    o.noalias() = twist.left_inv * m * twist.right_inv;
}

}  // namespace

ComponentArray DiffOps::fd_first(const ComponentArray& f, int dim, const Twist& twist,
                                 int axis) const {
  if (!twist.periodic() && f.rows() != dim * dim)
    throw DomainMismatch("twisted field must have dim*dim components");
  ComponentArray out(f.rows(), f.cols());
  const double h_inv = static_cast<double>(N_);
  const bool twisted_axis = !twist.periodic() && twist.axis == axis;
  Eigen::Index stride = 1;
  for (int a = 0; a < axis; ++a) stride *= N_;
  const Eigen::Index rows = f.rows();
  parallel_for(points_, [&](std::ptrdiff_t p) {
    const int i = static_cast<int>((p / stride) % N_);
    cplx buf[4][kMaxBlock * kMaxBlock];
    const int offsets[4] = {-2, -1, 1, 2};
    for (int s = 0; s < 4; ++s) {
      const int ii = i + offsets[s];
      const int wraps = ii < 0 ? -1 : (ii >= N_ ? 1 : 0);
      const Eigen::Index q = p + static_cast<Eigen::Index>(ii - wraps * N_ - i) * stride;
      twisted_value(f, q, dim, twist, twisted_axis ? wraps : 0, buf[s]);
    }
    for (Eigen::Index c = 0; c < rows; ++c)
      out(c, p) = (buf[0][c] - 8.0 * buf[1][c] + 8.0 * buf[2][c] - buf[3][c]) * (h_inv / 12.0);
  });
  return out;
}

ComponentArray DiffOps::fd_second(const ComponentArray& f, int dim, const Twist& twist,
                                  int axis) const {
  if (!twist.periodic() && f.rows() != dim * dim)
    throw DomainMismatch("twisted field must have dim*dim components");
  ComponentArray out(f.rows(), f.cols());
  const double h2_inv = static_cast<double>(N_) * N_;
  const bool twisted_axis = !twist.periodic() && twist.axis == axis;
  Eigen::Index stride = 1;
  for (int a = 0; a < axis; ++a) stride *= N_;
  const Eigen::Index rows = f.rows();
  parallel_for(points_, [&](std::ptrdiff_t p) {
    const int i = static_cast<int>((p / stride) % N_);
    cplx buf[4][kMaxBlock * kMaxBlock];
    const int offsets[4] = {-2, -1, 1, 2};
    for (int s = 0; s < 4; ++s) {
      const int ii = i + offsets[s];
      const int wraps = ii < 0 ? -1 : (ii >= N_ ? 1 : 0);
      const Eigen::Index q = p + static_cast<Eigen::Index>(ii - wraps * N_ - i) * stride;
      twisted_value(f, q, dim, twist, twisted_axis ? wraps : 0, buf[s]);
    }
    for (Eigen::Index c = 0; c < rows; ++c)
      out(c, p) = (-buf[0][c] + 16.0 * buf[1][c] - 30.0 * f(c, p) + 16.0 * buf[2][c] - buf[3][c]) *
                  (h2_inv / 12.0);
  });
  return out;
}

ComponentArray DiffOps::real_axis(const ComponentArray& f, int dim, const Twist& twist, int axis,
                                  DerivativeScheme scheme) const {
  if (axis < 0 || axis >= 2 * n_) throw DomainMismatch("real axis index out of range");
  if (f.cols() != points_) throw DomainMismatch("field size does not match the torus");
  if (scheme == DerivativeScheme::FiniteDifference4 || !twist.periodic())
    return fd_first(f, dim, twist, axis);
  ComponentArray F = f;
  fft_forward(F);
  for (Eigen::Index p = 0; p < points_; ++p) F.col(p) *= symbol_first_axis(axis, p, scheme);
  fft_inverse(F);
  return F;
}

DiffOps::Derivatives DiffOps::all(const ComponentArray& f, int dim, const Twist& twist) const {
  if (f.cols() != points_) throw DomainMismatch("field size does not match the torus");
  const Eigen::MatrixXcd& dz = torus_->dz();
  const Eigen::MatrixXcd& dzb = torus_->dzbar();
  const int axes = 2 * n_;
  Derivatives d;
  d.dz.assign(n_, ComponentArray::Zero(f.rows(), f.cols()));
  d.dzbar.assign(n_, ComponentArray::Zero(f.rows(), f.cols()));
  d.dzbar_dz.assign(n_ * n_, ComponentArray::Zero(f.rows(), f.cols()));

  if (scheme_for(twist) == DerivativeScheme::Spectral) {
    ComponentArray F = f;
    fft_forward(F);
    Eigen::VectorXcd sym(points_);
    auto emit = [&](ComponentArray& target) {
      target = F;
      for (Eigen::Index p = 0; p < points_; ++p) target.col(p) *= sym(p);
      fft_inverse(target);
    };
    for (int j = 0; j < n_; ++j) {
      for (Eigen::Index p = 0; p < points_; ++p) {
        cplx s = 0.0;
        for (int a = 0; a < axes; ++a) s += dz(j, a) * symbol_first_axis(a, p, DerivativeScheme::Spectral);
        sym(p) = s;
      }
      emit(d.dz[j]);
      for (Eigen::Index p = 0; p < points_; ++p) {
        cplx s = 0.0;
        for (int a = 0; a < axes; ++a) s += dzb(j, a) * symbol_first_axis(a, p, DerivativeScheme::Spectral);
        sym(p) = s;
      }
      emit(d.dzbar[j]);
    }
    for (int j = 0; j < n_; ++j)
      for (int k = 0; k < n_; ++k) {
        for (Eigen::Index p = 0; p < points_; ++p)
          sym(p) = symbol_mixed(j, k, p, DerivativeScheme::Spectral);
        emit(d.dzbar_dz[j * n_ + k]);
      }
    return d;
  }

  std::vector<ComponentArray> first(axes), second(axes);
  for (int a = 0; a < axes; ++a) {
    first[a] = fd_first(f, dim, twist, a);
    second[a] = fd_second(f, dim, twist, a);
  }
  for (int j = 0; j < n_; ++j)
    for (int a = 0; a < axes; ++a) {
      if (dz(j, a) != 0.0) d.dz[j] += dz(j, a) * first[a];
      if (dzb(j, a) != 0.0) d.dzbar[j] += dzb(j, a) * first[a];
    }
  for (int a = 0; a < axes; ++a)
    for (int b = 0; b < axes; ++b) {
      bool needed = false;
      for (int j = 0; j < n_ && !needed; ++j)
        for (int k = 0; k < n_ && !needed; ++k) needed = dzb(k, b) * dz(j, a) != 0.0;
      if (!needed) continue;
      const ComponentArray ab = a == b ? second[a] : fd_first(first[a], dim, twist, b);
      for (int j = 0; j < n_; ++j)
        for (int k = 0; k < n_; ++k) {
          const cplx c = dzb(k, b) * dz(j, a);
          if (c != 0.0) d.dzbar_dz[j * n_ + k] += c * ab;
        }
    }
  return d;
}

std::vector<ComponentArray> DiffOps::mixed_second(const ComponentArray& f, int dim,
                                                  const Twist& twist) const {
  return all(f, dim, twist).dzbar_dz;
}

ComponentArray DiffOps::wirtinger(const ComponentArray& f, int dim, const Twist& twist,
                                  ComplexAxis axis) const {
  if (axis.index < 0 || axis.index >= n_) throw DomainMismatch("complex axis index out of range");
  const Eigen::MatrixXcd& coeff = axis.kind == Wirtinger::Z ? torus_->dz() : torus_->dzbar();
  const DerivativeScheme scheme = scheme_for(twist);
  ComponentArray out = ComponentArray::Zero(f.rows(), f.cols());
  for (int a = 0; a < 2 * n_; ++a) {
    const cplx c = coeff(axis.index, a);
    if (c != 0.0) out += c * real_axis(f, dim, twist, a, scheme);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Free operations

ScalarField partial(const ScalarField& f, ComplexAxis axis) {
  ComponentArray row = f.values().transpose();
  ComponentArray d = f.torus().ops().wirtinger(row, 1, Twist::none(), axis);
  return ScalarField(f.torus_ptr(), d.row(0).transpose());
}

MatrixField partial(const MatrixField& f, ComplexAxis axis) {
  MatrixField out(f.torus_ptr(), f.dim(), f.twist());
  out.data() = f.torus().ops().wirtinger(f.data(), f.dim(), f.twist(), axis);
  return out;
}

double integrate(const ScalarField& density, double imag_tolerance) {
  const auto& v = density.values();
  const double scale = std::max(1.0, v.real().cwiseAbs().maxCoeff());
  if (v.imag().cwiseAbs().maxCoeff() > imag_tolerance * scale)
    throw Error("integrate: density is not real-valued");
  return v.real().mean() * density.torus().lebesgue_volume();
}

MatrixField i_del_delbar(const ScalarField& u) {
  const Torus& t = u.torus();
  const int n = t.dim();
  ComponentArray row = u.values().transpose();
  const auto mixed = t.ops().mixed_second(row, 1, Twist::none());
  MatrixField out(u.torus_ptr(), n);
  for (int j = 0; j < n; ++j)
    for (int k = 0; k < n; ++k) out.data().row(k * n + j) = mixed[j * n + k].row(0);
  return out;
}

}  // namespace hymlab
