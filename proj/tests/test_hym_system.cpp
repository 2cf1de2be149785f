#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"

#include "hymlab/hym_system.hpp"

#include <chrono>

using namespace hymlab;

namespace {

BundlePtr make_bundle(BundleModel model, int r, int d, int n, int N) {
  const BundleSpec spec = model == BundleModel::Split ? BundleSpec::split(r, d) : BundleSpec::extension(r, d);
  return Bundle::create(TorusParams::square(n, N), spec);
}

ScalarField positive_field(const TorusPtr& t, double amp, std::uint64_t seed) {
  ScalarField s = oracle::smooth_scalar(t, amp, seed);
  for (Eigen::Index p = 0; p < s.size(); ++p) s[p] = std::exp(s[p].real());
  return s;
}

SystemConfig test_config() {
  SystemConfig c;
  c.alpha = 10.0;
  c.epsilon = 0.7;
  c.lambda = 1.3;
  c.mu = 0.4;
  return c;
}

// max |a - b| over both residual parts
double diff_sup(const std::pair<ScalarField, EndoField>& a, const std::pair<ScalarField, EndoField>& b) {
  return std::max((a.first.values() - b.first.values()).cwiseAbs().maxCoeff(),
                  (a.second.data() - b.second.data()).cwiseAbs().maxCoeff());
}

double part_sup(const std::pair<ScalarField, EndoField>& a) {
  return std::max(a.first.values().cwiseAbs().maxCoeff(), a.second.data().cwiseAbs().maxCoeff());
}

std::pair<ScalarField, EndoField> central_difference(const MetricField& h, double t, const SystemConfig& cfg,
                                                     const ScalarField& a0, const EndoField& u, double s) {
  const SystemResidual plus = residual(h.exp_update(u, s), t, cfg, a0);
  const SystemResidual minus = residual(h.exp_update(u, -s), t, cfg, a0);
  ScalarField dma = plus.ma - minus.ma;
  dma *= 1.0 / (2 * s);
  EndoField dtf = plus.tf - minus.tf;
  dtf *= 1.0 / (2 * s);
  return {dma, dtf};
}

}  // namespace

TEST_CASE("a0 makes h0 an exact solution at t = 0") {
  auto b = make_bundle(BundleModel::Split, 2, 1, 1, 16);
  auto h0 = reference_metric(b);
  const double alpha = 0.75;
  auto a0 = a0_init(h0, alpha);
  // det(kappa (1/r + alpha) Id_2)^{1/2} / kappa = 1/2 + alpha
  CHECK((a0.values().array() - (0.5 + alpha)).abs().maxCoeff() < 1e-13);
  SystemConfig cfg;
  cfg.alpha = alpha;
  auto res = residual(h0, 0.0, cfg, a0);
  CHECK(res.ma_sup <= 1e-12);
  CHECK(res.tf_sup <= 1e-12);

  auto h = oracle::random_metric(make_bundle(BundleModel::Extension, 2, 1, 1, 16), 0.3, 4);
  auto a = a0_init(h, 3.0, 0.8);
  CHECK(a.min_real() > 0.0);
  SystemConfig c2;
  c2.alpha = 3.0;
  c2.lambda = 0.8;
  CHECK(residual(h, 0.0, c2, a).ma_sup <= 1e-12);
  CHECK_THROWS_AS(a0_init(h, 0.0), PositivityError);
}

TEST_CASE("trace-free residual is trace-free and vanishes in rank one") {
  auto b = make_bundle(BundleModel::Extension, 3, 1, 1, 16);
  auto h = oracle::random_metric(b, 0.15, 7);
  auto cfg = test_config();
  auto a0 = positive_field(b->torus_ptr(), 0.2, 1);
  auto res = residual(h, 0.4, cfg, a0);
  CHECK(res.tf.max_trace_abs() <= 1e-10);

  auto b1 = make_bundle(BundleModel::Split, 1, 1, 1, 16);
  auto h1 = oracle::random_metric(b1, 0.15, 2);
  auto r1 = residual(h1, 0.5, cfg, positive_field(b1->torus_ptr(), 0.2, 3));
  CHECK(r1.tf.sup_norm() <= 1e-13);
  CHECK(r1.ma_sup > 1e-3);
}

TEST_CASE("linearization matches central differences") {
  struct Case {
    BundleModel model;
    int r, n, N;
    OmegaVariant omega;
  };
  for (const Case& cs : {Case{BundleModel::Split, 2, 1, 16, OmegaVariant::Fixed},
                         Case{BundleModel::Extension, 2, 1, 16, OmegaVariant::Fixed},
                         Case{BundleModel::Extension, 3, 1, 16, OmegaVariant::Fixed},
                         Case{BundleModel::Split, 2, 2, 8, OmegaVariant::Beta}}) {
    CAPTURE(to_string(cs.model));
    CAPTURE(cs.r);
    CAPTURE(cs.n);
    auto b = make_bundle(cs.model, cs.r, 1, cs.n, cs.N);
    auto cfg = test_config();
    cfg.omega = cs.omega;
    auto h = oracle::random_metric(b, 0.25, 11);
    auto a0 = positive_field(b->torus_ptr(), 0.2, 5);
    auto u = oracle::random_direction(h, 0.5, 13);
    const double t = 0.3;
    auto lin = linearized_apply(h, t, cfg, a0, u);
    auto fd = central_difference(h, t, cfg, a0, u, 1e-4);
    CHECK(diff_sup(lin, fd) / part_sup(lin) <= 1e-6);
    // the difference oracle itself converges at second order
    const double e1 = diff_sup(lin, central_difference(h, t, cfg, a0, u, 2e-2));
    const double e2 = diff_sup(lin, central_difference(h, t, cfg, a0, u, 1e-2));
    CHECK(e1 / e2 == doctest::Approx(4.0).epsilon(0.1));

    // linearity
    auto v = oracle::random_direction(h, 0.5, 17);
    auto lv = linearized_apply(h, t, cfg, a0, v);
    auto luv = linearized_apply(h, t, cfg, a0, u + v);
    CHECK((luv.first.values() - lin.first.values() - lv.first.values()).cwiseAbs().maxCoeff() <= 1e-10 * part_sup(luv));
    CHECK((luv.second.data() - lin.second.data() - lv.second.data()).cwiseAbs().maxCoeff() <= 1e-10 * part_sup(luv));
  }
}

TEST_CASE("constant scaling direction feeds only the mu term of the trace-free part") {
  // split with a block metric whose trace-free curvature vanishes: K = e^{-v} Id
  auto b = make_bundle(BundleModel::Split, 2, 1, 1, 16);
  const TorusPtr& T = b->torus_ptr();
  auto v = oracle::smooth_scalar(T, 0.3, 9);
  MatrixField K = MatrixField::identity(T, 2);
  for (Eigen::Index p = 0; p < K.num_points(); ++p) K.data().col(p) *= std::exp(-v[p].real());
  // make log h~° non-zero by a constant anisotropy
  for (Eigen::Index p = 0; p < K.num_points(); ++p) K.data()(3, p) *= 2.0;
  MetricField h(b, K);
  auto cfg = test_config();
  auto a0 = positive_field(T, 0.1, 2);
  const double c = 0.6;
  EndoField u = EndoField::identity(T, 2);
  u *= c;
  auto lin = linearized_apply(h, 0.5, cfg, a0, u);
  auto L = log_normalized_endo(h);
  SystemResidual res = residual(h, 0.5, cfg, a0);
  double worst = 0.0;
  for (Eigen::Index p = 0; p < K.num_points(); ++p) {
    const double detK = h.at(p).determinant().real();
    const SmallMat expect = -cfg.epsilon * std::pow(detK, -cfg.mu) * cfg.mu * 2 * c * L.at(p);
    worst = std::max(worst, (lin.second.at(p) - expect).cwiseAbs().maxCoeff());
  }
  CHECK(worst <= 1e-10);
  CHECK(res.tf_sup > 1e-3);
}

TEST_CASE("principal symbol: closed-form inverse and plane waves") {
  auto b = make_bundle(BundleModel::Extension, 2, 1, 1, 16);
  auto h = oracle::random_metric(b, 0.3, 21);
  auto cfg = test_config();
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  for (Eigen::Index p : {0, 37, 200}) {
    PrincipalSymbol sym(h, 0.4, cfg, p);
    for (int s = 0; s < 5; ++s) {
      Eigen::VectorXcd xi(1);
      xi(0) = cplx(g(rng), g(rng));
      const SmallMat u = oracle::random_hermitian(2, rng);
      const SmallMat back = sym.inverse(xi, sym.apply(xi, u));
      CHECK((back - u).norm() <= 1e-10 * u.norm());
      CHECK(std::isfinite(sym.inverse_norm(xi)));
    }
  }
  CHECK(PrincipalSymbol::tolerated_perturbation(2, 1) == doctest::Approx(1.0 / std::sqrt(5.0)));
}

TEST_CASE("cushioned initializer") {
  SystemConfig cfg;
  // split: H_0 is recovered from a perturbed start
  auto bs = make_bundle(BundleModel::Split, 2, 1, 1, 32);
  auto start = oracle::random_metric(bs, 0.3, 5);
  auto rs = cushioned_solve(bs, 1.0, cfg, start);
  CHECK(rs.converged);
  CHECK((rs.h.matrix().data() - reference_metric(bs).matrix().data()).cwiseAbs().maxCoeff() <= 1e-8);

  auto be = make_bundle(BundleModel::Extension, 2, 1, 1, 32);
  auto re = cushioned_solve(be, 1.0, cfg);
  CHECK(re.converged);
  CHECK(cushioned_residual_sup(re.h, 1.0) <= 1e-8);
  double det_dev = 0.0;
  for (Eigen::Index p = 0; p < re.h.matrix().num_points(); ++p)
    det_dev = std::max(det_dev, std::abs(re.h.at(p).determinant().real() - 1.0));
  CHECK(det_dev <= 1e-10);
  CHECK(log_normalized_endo(re.h).max_trace_abs() <= 1e-10);
  // quadratic tail
  const auto& hist = re.history;
  REQUIRE(hist.size() >= 3);
  // contraction factors shrink while the residual is above roundoff
  for (std::size_t k = 2; k < hist.size(); ++k)
    if (hist[k] > 1e-11) CHECK(hist[k] / hist[k - 1] < hist[k - 1] / hist[k - 2]);
  // t = 0 residual of the full system at the cushioned solution
  auto cfg2 = cfg;
  cfg2.alpha = 2.0;
  auto a0 = a0_init(re.h, cfg2.alpha, cfg2.lambda);
  CHECK(residual(re.h, 0.0, cfg2, a0).sup() <= 1e-8);
}

TEST_CASE("Newton: exact start and the linear rank-one equation") {
  auto b = make_bundle(BundleModel::Split, 1, 1, 1, 32);
  SystemConfig cfg;
  cfg.alpha = 1.0;
  auto h0 = reference_metric(b);
  auto a0 = a0_init(h0, cfg.alpha, cfg.lambda);
  auto r0 = newton_solve(h0, 0.0, cfg, a0);
  CHECK(r0.converged);
  CHECK(r0.iterations == 0);

  // lambda = 0, t = 1: kappa + u_zzbar = kappa f
  cfg.lambda = 0.0;
  const TorusPtr& T = b->torus_ptr();
  ScalarField f = positive_field(T, 0.3, 8);
  const double mean = f.values().real().mean();
  f *= 1.0 / mean;
  auto res = newton_solve(h0, 1.0, cfg, f);
  REQUIRE(res.converged);
  const double kappa = T->kappa()(0, 0).real();
  oracle::ScalarMongeAmpere ma(32);
  Eigen::VectorXd fv = f.values().real();
  Eigen::VectorXd u = ma.solve_linear(fv, kappa);
  Eigen::VectorXd theta_oracle = (kappa + ma.ddbar(u).array()).matrix();
  auto curv = chern_curvature(res.h);
  double worst = 0.0;
  for (Eigen::Index p = 0; p < T->num_points(); ++p)
    worst = std::max(worst, std::abs(curv.block(p, 0, 0)(0, 0).real() - theta_oracle(p)));
  CHECK(worst <= 1e-8);
}

TEST_CASE("continuity in rank one matches the scalar oracle") {
  auto b = make_bundle(BundleModel::Split, 1, 1, 1, 32);
  SystemConfig cfg;
  cfg.initial_conformal = 0.05;
  auto trace = continuity_run(b, cfg);
  REQUIRE(trace.status == TerminalStatus::ReachedT1);
  for (std::size_t i = 1; i < trace.steps.size(); ++i) CHECK(trace.steps[i].t > trace.steps[i - 1].t);
  for (const auto& s : trace.steps) CHECK(s.theta_margin >= cfg.positivity_margin_floor);
  CHECK(trace.final_dual_nakano_margin > 0.0);

  const TorusPtr& T = b->torus_ptr();
  const double kappa = T->kappa()(0, 0).real();
  const double a = cfg.initial_conformal, alpha = trace.alpha, lambda = cfg.lambda;
  // a0 for h0 = e^{-a psi}: (kappa (1 + alpha) + a psi_zzbar) / kappa * e^{-lambda a psi}, psi_zzbar = -pi^2 psi
  Eigen::VectorXd a0(T->num_points());
  for (Eigen::Index p = 0; p < T->num_points(); ++p) {
    const Eigen::VectorXd x = T->lattice_point(p);
    const double psi = std::cos(2 * oracle::pi * x(0)) + std::cos(2 * oracle::pi * x(1));
    a0(p) = (1.0 + alpha - a * oracle::pi * oracle::pi * psi / kappa) * std::exp(-lambda * a * psi);
  }
  oracle::ScalarMongeAmpere ma(32);
  Eigen::VectorXd u = ma.solve(a0, lambda, kappa);
  Eigen::VectorXd theta_oracle = (kappa + ma.ddbar(u).array()).matrix();
  auto curv = chern_curvature(*trace.final_metric);
  double worst = 0.0;
  for (Eigen::Index p = 0; p < T->num_points(); ++p)
    worst = std::max(worst, std::abs(curv.block(p, 0, 0)(0, 0).real() - theta_oracle(p)));
  CHECK(worst <= 1e-8);
}

TEST_CASE("alpha policy fixed reports the required alpha") {
  auto b = make_bundle(BundleModel::Split, 1, 1, 1, 16);
  SystemConfig cfg;
  cfg.alpha_policy = AlphaPolicy::Fixed;
  cfg.alpha = 0.0;
  cfg.initial_conformal = 0.3;  // makes the curvature indefinite
  try {
    continuity_run(b, cfg);
    FAIL("expected a configuration error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("required alpha") != std::string::npos);
  }
}

TEST_CASE("split solve") {
  auto b = make_bundle(BundleModel::Split, 2, 1, 1, 32);
  const TorusPtr& T = b->torus_ptr();
  // constants give the reference metric
  ScalarField half = ScalarField::constant(T, 0.5);
  auto s0 = split_solve(b, {half, half});
  CHECK((s0.metric.matrix().data() - reference_metric(b).matrix().data()).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(s0.holder_lhs == doctest::Approx(s0.holder_rhs).epsilon(1e-12));

  // proportional densities reach equality; the determinant root is (f1 f2)^{1/2}
  ScalarField f = positive_field(T, 0.4, 6);
  f *= 0.5 / f.values().real().mean();
  auto sp = split_solve(b, {f, f});
  CHECK(std::abs(sp.holder_lhs - sp.holder_rhs) <= 1e-8);

  ScalarField f2 = positive_field(T, 0.4, 7);
  f2 *= 0.5 / f2.values().real().mean();
  auto sq = split_solve(b, {f, f2});
  CHECK(sq.holder_lhs < sq.holder_rhs);
  auto root = det_root_form(big_theta(sq.metric, 1.0, 0.0), true);
  double worst = 0.0;
  for (Eigen::Index p = 0; p < T->num_points(); ++p)
    worst = std::max(worst, std::abs(root[p].real() / T->det_kappa() - std::sqrt(f[p].real() * f2[p].real())));
  CHECK(worst <= 1e-9);

  ScalarField bad = ScalarField::constant(T, 0.6);
  CHECK_THROWS_AS(split_solve(b, {bad, half}), ConfigError);
}
