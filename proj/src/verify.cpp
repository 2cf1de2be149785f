#include "hymlab/verify.hpp"

#include "hymlab/matfun.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

namespace hymlab {

using nlohmann::json;

bool VerifyReport::all_passed() const {
  for (const auto& c : checks)
    if (!c.passed) return false;
  return true;
}

json VerifyReport::to_json() const {
  json out;
  out["passed"] = all_passed();
  out["seconds"] = seconds;
  out["checks"] = json::array();
  for (const auto& c : checks)
    out["checks"].push_back(
        {{"name", c.name}, {"passed", c.passed}, {"value", c.value}, {"tolerance", c.tolerance}, {"detail", c.detail}});
  return out;
}

namespace {

constexpr double kPi = std::numbers::pi;

Eigen::MatrixXcd gaussian_hermitian(int r, std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> g;
  Eigen::MatrixXcd m(r, r);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < r; ++j) m(i, j) = cplx(g(rng), g(rng));
  return (m + m.adjoint()) * (0.5 * scale);
}

// Smooth periodic Hermitian field from the modes {-1, 0, 1}^axes.
struct SmoothField {
  std::vector<std::vector<int>> modes;
  std::vector<Eigen::MatrixXcd> a, b;

  SmoothField(int axes, int r, double amplitude, std::mt19937_64& rng) {
    const int count = static_cast<int>(std::pow(3, axes));
    for (int c = 1; c < count; ++c) {
      std::vector<int> m(axes);
      for (int x = c, ax = 0; ax < axes; ++ax, x /= 3) m[ax] = x % 3 - 1;
      modes.push_back(m);
    }
    const double s = amplitude / std::sqrt(static_cast<double>(modes.size()));
    for (std::size_t i = 0; i < modes.size(); ++i) {
      a.push_back(gaussian_hermitian(r, rng, s));
      b.push_back(gaussian_hermitian(r, rng, s));
    }
  }

  Eigen::MatrixXcd operator()(const Eigen::VectorXd& x) const {
    Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(a[0].rows(), a[0].cols());
    for (std::size_t i = 0; i < modes.size(); ++i) {
      double ph = 0.0;
      for (std::size_t ax = 0; ax < modes[i].size(); ++ax) ph += modes[i][ax] * x(ax);
      h += a[i] * std::cos(2 * kPi * ph) + b[i] * std::sin(2 * kPi * ph);
    }
    return h;
  }
};

MetricField smooth_metric(const BundlePtr& bundle, double amplitude, std::mt19937_64& rng) {
  const Torus& T = bundle->torus();
  SmoothField H(T.num_axes(), bundle->rank(), amplitude, rng);
  MatrixField K(bundle->torus_ptr(), bundle->rank(), bundle->form_twist());
  for (Eigen::Index p = 0; p < T.num_points(); ++p) {
    const SmallMat g = bundle->gauge(p);
    K.set(p, hermitian_part(SmallMat(g.adjoint() * exp_hermitian(SmallMat(H(T.lattice_point(p)))) * g)));
  }
  return MetricField(bundle, std::move(K));
}

EndoField smooth_direction(const MetricField& h, double amplitude, std::mt19937_64& rng) {
  const Torus& T = h.torus();
  SmoothField U(T.num_axes(), h.rank(), amplitude, rng);
  EndoField u(h.matrix().torus_ptr(), h.rank(), h.bundle().endo_twist());
  for (Eigen::Index p = 0; p < T.num_points(); ++p) {
    const SmallMat C = h.orthonormal_frame(p);
    u.set(p, C * SmallMat(U(T.lattice_point(p))) * C.inverse());
  }
  return u;
}

CurvatureField random_curvature(const TorusPtr& t, int r, double shift, std::mt19937_64& rng) {
  const int n = t->dim();
  CurvatureField c(t, r);
  for (Eigen::Index p = 0; p < c.num_points(); ++p) {
    const Eigen::MatrixXcd big = gaussian_hermitian(n * r, rng, 1.0);
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) c.set_block(p, j, k, big.block(j * r, k * r, r, r));
  }
  return with_offset(c, shift);
}

BundlePtr bundle_of(BundleModel model, int r, int n, int N) {
  const BundleSpec spec = model == BundleModel::Split ? BundleSpec::split(r, 1) : BundleSpec::extension(r, 1);
  return Bundle::create(TorusParams::square(n, N), spec);
}

// relative defect of Theta_{E*, h*} = -Theta^T (the sign is flipped under fault injection)
double duality_defect(const BundlePtr& b, std::mt19937_64& rng, bool flip) {
  const MetricField h = smooth_metric(b, 0.5, rng);
  MetricGeometry g(h), gd(h.dual());
  const int n = b->dim();
  double worst = 0.0, scale = 0.0;
  for (Eigen::Index p = 0; p < b->torus().num_points(); ++p)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        const SmallMat a = gd.theta_holomorphic(p, j, k);
        const SmallMat e = (flip ? 1.0 : -1.0) * g.theta_holomorphic(p, k, j).transpose();
        worst = std::max(worst, (a - e).cwiseAbs().maxCoeff());
        scale = std::max(scale, e.cwiseAbs().maxCoeff());
      }
  return worst / scale;
}

CheckResult check(const std::string& name, double value, double tol, const std::string& detail = "") {
  return {name, value <= tol, value, tol, detail};
}

}  // namespace

MetricField random_smooth_metric(const BundlePtr& bundle, double amplitude, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return smooth_metric(bundle, amplitude, rng);
}

VerifyReport run_verify(const VerifyConfig& cfg, std::uint64_t seed) {
  const auto clock0 = std::chrono::steady_clock::now();
  VerifyReport rep;
  const int N = cfg.resolution;
  const bool flip = cfg.inject_fault == "duality_sign";
  std::mt19937_64 rng(seed);

  // duality: exact for spectral periodic fields, fourth order for twisted ones
  {
    std::mt19937_64 r1(seed);
    const double d = duality_defect(bundle_of(BundleModel::Split, 2, 1, N), r1, flip);
    rep.checks.push_back(check("duality_split", d, 1e-10, "relative sup defect, spectral"));
    std::mt19937_64 ra(seed + 1), rb(seed + 1);
    const double coarse = duality_defect(bundle_of(BundleModel::Extension, 2, 1, N / 2), ra, flip);
    const double fine = duality_defect(bundle_of(BundleModel::Extension, 2, 1, N), rb, flip);
    std::ostringstream os;
    os << "defect " << coarse << " at N=" << N / 2 << ", " << fine << " at N=" << N << "; declared order 4";
    rep.checks.push_back(check("duality_extension", fine, 1e-2, os.str()));
    const double order = std::log2(coarse / fine);
    CheckResult c{"duality_extension_order", order >= 3.5, order, 3.5, os.str()};
    rep.checks.push_back(c);
  }

  // hierarchy: Griffiths >= max(Nakano, dual Nakano); all three agree for n = 1
  {
    auto t2 = Torus::create(TorusParams::square(2, 8), 4.0);
    auto t1 = Torus::create(TorusParams::square(1, 8), 2.0);
    double worst = -std::numeric_limits<double>::infinity(), coincide = 0.0;
    for (int s = 0; s < cfg.samples; ++s) {
      const CurvatureField c = random_curvature(t2, 2, 3.0, rng);
      const auto gm = pointwise_margins(c, PositivityKind::Griffiths);
      const auto nm = pointwise_margins(c, PositivityKind::Nakano);
      const auto dm = pointwise_margins(c, PositivityKind::DualNakano);
      worst = std::max(worst, std::max((nm - gm).maxCoeff(), (dm - gm).maxCoeff()));
      const CurvatureField c1 = random_curvature(t1, 2, 0.0, rng);
      const auto g1 = pointwise_margins(c1, PositivityKind::Griffiths);
      const auto n1 = pointwise_margins(c1, PositivityKind::Nakano);
      const auto d1 = pointwise_margins(c1, PositivityKind::DualNakano);
      coincide = std::max(coincide, std::max((g1 - n1).cwiseAbs().maxCoeff(), (g1 - d1).cwiseAbs().maxCoeff()));
    }
    rep.checks.push_back(check("hierarchy", worst, 1e-10, "max of (Nakano or dual) - Griffiths margin, n = 2"));
    rep.checks.push_back(check("hierarchy_n1_coincide", coincide, 1e-8, "margins agree on curves"));
  }

  // determinant root form: unitary frame changes and block products
  {
    auto t = Torus::create(TorusParams::square(2, 8), 9.0);
    const int n = 2, r = 3;
    BigHermitianField th{MatrixField(t, n * r), n, r, 1.0, 0.0};
    BigHermitianField rot = th, blk = th;
    for (Eigen::Index p = 0; p < t->num_points(); ++p) {
      const Eigen::MatrixXcd a = gaussian_hermitian(n * r, rng, 1.0);
      th.theta.set(p, SmallMat(a * a.adjoint() + Eigen::MatrixXcd::Identity(n * r, n * r)));
    }
    double frame = 0.0, product = 0.0;
    for (Eigen::Index p = 0; p < t->num_points(); ++p) {
      Eigen::HouseholderQR<Eigen::MatrixXcd> q1(gaussian_hermitian(n, rng, 1.0) +
                                                Eigen::MatrixXcd::Identity(n, n) * cplx(0, 1));
      Eigen::HouseholderQR<Eigen::MatrixXcd> q2(gaussian_hermitian(r, rng, 1.0) +
                                                Eigen::MatrixXcd::Identity(r, r) * cplx(0, 1));
      const Eigen::MatrixXcd U1 = q1.householderQ(), U2 = q2.householderQ();
      Eigen::MatrixXcd U = Eigen::MatrixXcd::Zero(n * r, n * r);
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) U.block(j * r, k * r, r, r) = U1(j, k) * U2;
      rot.theta.set(p, SmallMat(U * Eigen::MatrixXcd(th.theta.at(p)) * U.adjoint()));
      SmallMat m = th.theta.at(p);
      for (int a = 0; a < n * r; ++a)
        for (int c = 0; c < n * r; ++c)
          if (a % r != c % r) m(a, c) = 0.0;
      blk.theta.set(p, m);
    }
    const ScalarField base = det_root_form(th, true), after = det_root_form(rot, true), bv = det_root_form(blk, true);
    for (Eigen::Index p = 0; p < t->num_points(); ++p) {
      frame = std::max(frame, std::abs(after[p] - base[p]) / std::abs(base[p]));
      const SmallMat m = blk.theta.at(p);
      double prod = 1.0;
      for (int l = 0; l < r; ++l) {
        SmallMat b(n, n);
        for (int j = 0; j < n; ++j)
          for (int k = 0; k < n; ++k) b(j, k) = m(j * r + l, k * r + l);
        prod *= b.determinant().real();
      }
      product = std::max(product, std::abs(bv[p] - std::pow(prod, 1.0 / r)) / bv[p].real());
    }
    rep.checks.push_back(check("det_root_frame_invariance", frame, 1e-10));
    rep.checks.push_back(check("det_root_block_product", product, 1e-9));
  }

  // linearization against central differences, both models
  {
    SystemConfig sc;
    sc.alpha = 10.0;
    sc.epsilon = 0.7;
    sc.lambda = 1.3;
    sc.mu = 0.4;
    const int dirs = std::min(cfg.samples, 3);
    for (BundleModel model : {BundleModel::Split, BundleModel::Extension}) {
      auto b = bundle_of(model, 2, 1, N);
      const MetricField h = smooth_metric(b, 0.15, rng);
      const ScalarField a0 = a0_init(h, sc.alpha, sc.lambda);
      double worst = 0.0;
      for (int k = 0; k < dirs; ++k) {
        const EndoField u = smooth_direction(h, 0.5, rng);
        const auto lin = linearized_apply(h, 0.5, sc, a0, u);
        const double s = 1e-4;
        const SystemResidual plus = residual(h.exp_update(u, s), 0.5, sc, a0);
        const SystemResidual minus = residual(h.exp_update(u, -s), 0.5, sc, a0);
        double err = 0.0, scale = 0.0;
        for (Eigen::Index p = 0; p < h.torus().num_points(); ++p) {
          const cplx fd = (plus.ma[p] - minus.ma[p]) / (2 * s);
          err = std::max(err, std::abs(lin.first[p] - fd));
          scale = std::max(scale, std::abs(fd));
        }
        const ComponentArray fdt = (plus.tf.data() - minus.tf.data()) / (2 * s);
        err = std::max(err, (lin.second.data() - fdt).cwiseAbs().maxCoeff());
        scale = std::max(scale, fdt.cwiseAbs().maxCoeff());
        worst = std::max(worst, err / scale);
      }
      rep.checks.push_back(check(std::string("linearization_fd_") + to_string(model), worst, 1e-6,
                                 "relative sup error, step 1e-4"));
    }
  }

  // symbol: the closed-form inverse composes to the identity
  {
    auto b = bundle_of(BundleModel::Extension, 2, 1, 16);
    const MetricField h = smooth_metric(b, 0.3, rng);
    SystemConfig sc;
    sc.alpha = 10.0;
    MetricGeometry g(h);
    std::normal_distribution<double> nd;
    double worst = 0.0;
    for (int s = 0; s < cfg.samples; ++s) {
      const Eigen::Index p = (s * 37) % h.torus().num_points();
      PrincipalSymbol sym(g, 0.4, sc, p);
      Eigen::VectorXcd xi(1);
      xi(0) = cplx(nd(rng), nd(rng));
      const SmallMat u = gaussian_hermitian(2, rng, 1.0);
      worst = std::max(worst, (sym.inverse(xi, sym.apply(xi, u)) - u).norm() / u.norm());
    }
    std::ostringstream os;
    os << "tolerated symbol perturbation (r^2+1)^{-1/2} n^{-1} = " << PrincipalSymbol::tolerated_perturbation(2, 1)
       << " at r=2, n=1; sigma_G = 0 for the fixed trace form";
    rep.checks.push_back(check("symbol_inverse", worst, 1e-10, os.str()));
  }

  // eigenvalue identity and the volume bound on random positive metrics
  {
    double defect = 0.0, excess = -1.0;
    int used = 0;
    for (BundleModel model : {BundleModel::Split, BundleModel::Extension}) {
      auto b = bundle_of(model, 2, 1, 16);
      for (int s = 0; s < (cfg.samples + 1) / 2; ++s) {
        const MetricField h = smooth_metric(b, 0.02, rng);
        const MavolReport mr = mavol_value(h, false, false);
        if (!mr.positive) continue;
        ++used;
        defect = std::max(defect, mr.eigenvalue_identity_defect);
        excess = std::max(excess, mr.value - mr.upper_bound);
      }
    }
    rep.checks.push_back(check("eigenvalue_identity", defect, 1e-8, std::to_string(used) + " positive metrics"));
    rep.checks.push_back(check("volume_upper_bound", excess, 1e-9, "max of value - r^{-n} c_1^n"));
  }

  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - clock0).count();
  return rep;
}

}  // namespace hymlab
