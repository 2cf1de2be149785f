// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include "oracles.hpp"

#include "hymlab/hym_system.hpp"
#include "hymlab/mavol.hpp"
#include "hymlab/verify.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>

using namespace hymlab;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

BundlePtr make_bundle(BundleModel model, int r, int d, int n, int N) {
  const BundleSpec spec = model == BundleModel::Split ? BundleSpec::split(r, d) : BundleSpec::extension(r, d);
  return Bundle::create(TorusParams::square(n, N), spec);
}

ScalarField positive_field(const TorusPtr& t, double amp, std::uint64_t seed) {
  ScalarField s = oracle::smooth_scalar(t, amp, seed);
  for (Eigen::Index p = 0; p < s.size(); ++p) s[p] = std::exp(s[p].real());
  return s;
}

using Pair = std::pair<ScalarField, EndoField>;

double diff_sup(const Pair& a, const Pair& b) {
  return std::max((a.first.values() - b.first.values()).cwiseAbs().maxCoeff(),
                  (a.second.data() - b.second.data()).cwiseAbs().maxCoeff());
}

double part_sup(const Pair& a) {
  return std::max(a.first.values().cwiseAbs().maxCoeff(), a.second.data().cwiseAbs().maxCoeff());
}

Pair central_difference(const MetricField& h, double t, const SystemConfig& cfg, const ScalarField& a0,
                        const EndoField& u, double s) {
  const SystemResidual plus = residual(h.exp_update(u, s), t, cfg, a0);
  const SystemResidual minus = residual(h.exp_update(u, -s), t, cfg, a0);
  ScalarField dma = plus.ma - minus.ma;
  dma *= 1.0 / (2 * s);
  EndoField dtf = plus.tf - minus.tf;
  dtf *= 1.0 / (2 * s);
  return {dma, dtf};
}

SystemConfig rich_config() {
  SystemConfig c;
  c.alpha = 10.0;
  c.epsilon = 0.7;
  c.lambda = 1.3;
  c.mu = 0.4;
  return c;
}

// max pointwise |kappa + u_zzbar - Theta| against the FFT scalar solver
double scalar_oracle_error(const SolverTrace& trace, const BundlePtr& b, const SystemConfig& cfg, int N) {
  const TorusPtr& T = b->torus_ptr();
  const double kappa = T->kappa()(0, 0).real();
  const double a = cfg.initial_conformal, alpha = trace.alpha, lambda = cfg.lambda;
  Eigen::VectorXd a0(T->num_points());
  for (Eigen::Index p = 0; p < T->num_points(); ++p) {
    const Eigen::VectorXd x = T->lattice_point(p);
    const double psi = std::cos(2 * oracle::pi * x(0)) + std::cos(2 * oracle::pi * x(1));
    a0(p) = (1.0 + alpha - a * oracle::pi * oracle::pi * psi / kappa) * std::exp(-lambda * a * psi);
  }
  oracle::ScalarMongeAmpere ma(N);
  const Eigen::VectorXd u = ma.solve(a0, lambda, kappa);
  const Eigen::VectorXd theta = (kappa + ma.ddbar(u).array()).matrix();
  const auto curv = chern_curvature(*trace.final_metric);
  double worst = 0.0;
  for (Eigen::Index p = 0; p < T->num_points(); ++p)
    worst = std::max(worst, std::abs(curv.block(p, 0, 0)(0, 0).real() - theta(p)));
  return worst;
}

void scalar_oracle(Outcome& o) {
  const int N = 64;
  auto b = make_bundle(BundleModel::Split, 1, 1, 1, N);
  SystemConfig cfg;
  cfg.initial_conformal = 0.05;
  const auto t0 = Clock::now();
  const SolverTrace trace = continuity_run(b, cfg);
  const double secs = seconds_since(t0);
  o.require(trace.status == TerminalStatus::ReachedT1, "reached t = 1");
  if (!trace.final_metric) return;
  const double err = scalar_oracle_error(trace, b, cfg, N);
  o.detail << "N=64 sup |Theta - oracle| = " << err << " (tol 1e-8), solve " << secs << " s (limit 10 s)";
  o.require(err <= 1e-8, "oracle agreement");
  o.require(secs < 10.0, "runtime");
}

void linearization(Outcome& o) {
  const SystemConfig cfg = rich_config();
  for (BundleModel model : {BundleModel::Split, BundleModel::Extension}) {
    auto b = make_bundle(model, 2, 1, 1, 16);
    double worst = 0.0, ratio_lo = 1e300, ratio_hi = 0.0;
    for (int k = 0; k < 10; ++k) {
      const auto h = oracle::random_metric(b, 0.25, 100 + k);
      const auto a0 = positive_field(b->torus_ptr(), 0.2, 200 + k);
      const auto u = oracle::random_direction(h, 0.5, 300 + k);
      const double t = 0.3;
      const Pair lin = linearized_apply(h, t, cfg, a0, u);
      worst = std::max(worst, diff_sup(lin, central_difference(h, t, cfg, a0, u, 1e-4)) / part_sup(lin));
      const double e1 = diff_sup(lin, central_difference(h, t, cfg, a0, u, 2e-2));
      const double e2 = diff_sup(lin, central_difference(h, t, cfg, a0, u, 1e-2));
      ratio_lo = std::min(ratio_lo, e1 / e2);
      ratio_hi = std::max(ratio_hi, e1 / e2);
    }
    o.detail << to_string(model) << ": rel " << worst << ", halving ratio " << ratio_lo << ".." << ratio_hi << "; ";
    o.require(worst <= 1e-6, std::string(to_string(model)) + " relative error");
    o.require(ratio_lo > 3.6 && ratio_hi < 4.4, std::string(to_string(model)) + " second-order convergence");
  }
}

// Relative sup distance between L(U0 cos phi) and -sigma(xi) U0 cos phi, phi = 2 pi m x_0.
// With d/dz_j -> xi_j the plane wave picks up dz_j dzbar_k cos phi = -xi_j conj(xi_k) cos phi.
double plane_wave_defect(BundleModel model, int N, const SmallMat& U0) {
  auto b = make_bundle(model, 2, 1, 1, N);
  const auto h = oracle::random_metric(b, 0.2, 11);
  SystemConfig cfg = rich_config();
  cfg.alpha = 2.0;
  const double t = 0.5;
  const ScalarField a0 = ScalarField::constant(b->torus_ptr(), 1.0);
  const LinearizedSystem L(h, t, cfg, &a0);
  const Torus& T = b->torus();
  const int m = N / 4;
  Eigen::VectorXcd xi(1);
  xi(0) = T.dz()(0, 0) * 2.0 * oracle::pi * static_cast<double>(m);
  auto wave = [&](Eigen::Index p) { return std::cos(2 * oracle::pi * m * T.lattice_point(p)(0)); };
  EndoField u(h.matrix().torus_ptr(), 2, b->endo_twist());
  for (Eigen::Index p = 0; p < T.num_points(); ++p) {
    const SmallMat C = h.orthonormal_frame(p);
    u.set(p, C * U0 * C.inverse() * wave(p));
  }
  const auto [dma, dtf] = L.apply_endo(u);
  double err = 0.0, scale = 0.0;
  for (Eigen::Index p = 0; p < T.num_points(); ++p) {
    const PrincipalSymbol S(L.geometry(), t, cfg, p);
    const auto a = S.apply(xi, U0);
    const SmallMat C = h.orthonormal_frame(p);
    const SmallMat tf_hat = C.inverse() * dtf.at(p) * C;
    scale = std::max(scale, std::max(std::abs(a.ma), a.tf.norm()));
    err = std::max(err, std::max(std::abs(dma[p] + a.ma * wave(p)), (tf_hat + a.tf * wave(p)).norm()));
  }
  return err / scale;
}

void symbol(Outcome& o) {
  SmallMat U0(2, 2);
  U0 << 1.0, cplx(0.3, -0.2), cplx(0.3, 0.2), -0.4;
  double prev = 0.0, worst_ratio = 0.0;
  o.detail << "split plane waves at N/4:";
  for (int N : {32, 64, 128}) {
    const double e = plane_wave_defect(BundleModel::Split, N, U0);
    o.detail << " " << e;
    if (prev > 0.0) worst_ratio = std::max(worst_ratio, e / prev);
    prev = e;
  }
  o.detail << " (worst ratio " << worst_ratio << ", limit 0.6)";
  o.require(worst_ratio <= 0.6, "plane-wave convergence");

  // closed-form inverse composed with the symbol
  double comp = 0.0;
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  for (BundleModel model : {BundleModel::Split, BundleModel::Extension})
    for (int r : {2, 3}) {
      auto b = make_bundle(model, r, 1, 1, 16);
      const auto h = oracle::random_metric(b, 0.3, 21);
      for (Eigen::Index p : {0, 37, 200}) {
        const PrincipalSymbol sym(h, 0.4, rich_config(), p);
        for (int s = 0; s < 5; ++s) {
          Eigen::VectorXcd xi(1);
          xi(0) = cplx(g(rng), g(rng));
          const SmallMat u = oracle::random_hermitian(r, rng);
          comp = std::max(comp, (sym.inverse(xi, sym.apply(xi, u)) - u).norm() / u.norm());
        }
      }
    }
  o.detail << "; inverse composition " << comp << " (tol 1e-10); tolerated perturbation (r^2+1)^{-1/2}/n = "
           << PrincipalSymbol::tolerated_perturbation(2, 1) << " at r=2, n=1, sigma_G = 0";
  o.require(comp <= 1e-10, "inverse composition");
}

void symbol_extension_info() {
  SmallMat U0(2, 2);
  U0 << 1.0, cplx(0.3, -0.2), cplx(0.3, 0.2), -0.4;
  std::cout << "       info: extension plane waves at N/4 (fourth-order differences, fixed kh = pi/2):";
  for (int N : {32, 64, 128}) std::cout << " " << plane_wave_defect(BundleModel::Extension, N, U0);
  std::cout << "\n";
}

void cushioned(Outcome& o) {
  SystemConfig cfg;
  for (BundleModel model : {BundleModel::Split, BundleModel::Extension}) {
    auto b = make_bundle(model, 2, 1, 1, 64);
    const auto start = oracle::random_metric(b, 0.3, 5);
    const NewtonResult res = cushioned_solve(b, cfg.epsilon, cfg, start);
    const double resid = cushioned_residual_sup(res.h, cfg.epsilon);
    double det_dev = 0.0;
    for (Eigen::Index p = 0; p < res.h.matrix().num_points(); ++p)
      det_dev = std::max(det_dev, std::abs(res.h.at(p).determinant().real() / b->reference(p).determinant().real() - 1.0));
    o.detail << to_string(model) << ": residual " << resid << ", det defect " << det_dev << "; ";
    o.require(res.converged, std::string(to_string(model)) + " converged");
    o.require(resid <= 1e-8, std::string(to_string(model)) + " residual");
    o.require(det_dev <= 1e-10, std::string(to_string(model)) + " determinant");
  }
}

const CheckResult* find(const VerifyReport& rep, const std::string& name) {
  for (const auto& c : rep.checks)
    if (c.name == name) return &c;
  return nullptr;
}

void from_checks(Outcome& o, const VerifyReport& rep, const std::vector<std::string>& names) {
  for (const auto& n : names) {
    const CheckResult* c = find(rep, n);
    if (!c) {
      o.require(false, n + " missing");
      continue;
    }
    o.detail << n << " " << c->value << " (" << c->tolerance << "); ";
    o.require(c->passed, n);
  }
}

void mavol_bound(Outcome& o) {
  struct Case {
    BundleModel model;
    int r, d, n, N;
    double amp;
  };
  const Case cases[] = {{BundleModel::Split, 2, 1, 1, 16, 0.02},
                        {BundleModel::Split, 3, 2, 1, 16, 0.02},
                        {BundleModel::Extension, 2, 1, 1, 16, 0.02},
                        {BundleModel::Split, 2, 1, 2, 8, 0.01}};
  double excess = -1e300, defect = 0.0;
  int count = 0;
  for (const Case& c : cases) {
    auto b = make_bundle(c.model, c.r, c.d, c.n, c.N);
    for (int k = 0; k < 5; ++k) {
      const MavolReport rep = mavol_value(random_smooth_metric(b, c.amp, 40 + k), false, false);
      if (!rep.positive || rep.kind != PositivityKind::DualNakano) continue;
      ++count;
      excess = std::max(excess, rep.value - rep.upper_bound);
      defect = std::max(defect, rep.eigenvalue_identity_defect);
    }
  }
  o.detail << count << " dual-Nakano positive metrics: max(value - bound) " << excess << ", eigenvalue defect "
           << defect;
  o.require(count == 20, "20 positive samples");
  o.require(excess <= 1e-9, "upper bound");
  o.require(defect <= 1e-8, "eigenvalue identity");

  auto b = make_bundle(BundleModel::Split, 2, 1, 1, 64);
  const MetricField start = split_solve(b, shrink_densities(b, 3.0)).metric;
  const AscentResult res = mavol_ascend(start, AscentOptions{});
  const double v0 = res.trace.front().value, v1 = res.trace.back().value, bound = mavol_value(start).upper_bound;
  o.detail << "; equal-factor ascent " << v0 << " -> " << v1 << " of " << bound << " in " << res.trace.size() - 1
           << " steps";
  o.require(v1 >= 0.98 * bound, "ascent within 2%");
}

void split_consistency(Outcome& o) {
  const int N = 32;
  const double a = 0.05, alpha = 0.5;
  // rank two, L_1 + L_1 with h = e^{-v} Id
  auto b2 = make_bundle(BundleModel::Split, 2, 1, 1, N);
  SystemConfig c2;
  c2.alpha_policy = AlphaPolicy::Fixed;
  c2.alpha = alpha;
  c2.initial_conformal = a;
  const SolverTrace t2 = continuity_run(b2, c2);
  // rank one, degree 2: w = 2 v solves the same equation with doubled cushion and amplitude
  auto b1 = make_bundle(BundleModel::Split, 1, 2, 1, N);
  SystemConfig c1 = c2;
  c1.alpha = 2 * alpha;
  c1.initial_conformal = 2 * a;
  const SolverTrace t1 = continuity_run(b1, c1);
  o.require(t2.status == TerminalStatus::ReachedT1 && t1.status == TerminalStatus::ReachedT1, "both runs reach t = 1");
  if (t2.final_metric && t1.final_metric) {
    double block = 0.0, offdiag = 0.0;
    for (Eigen::Index p = 0; p < b2->torus().num_points(); ++p) {
      const SmallMat K = t2.final_metric->at(p);
      const double w = -std::log(t1.final_metric->at(p)(0, 0).real());
      for (int i = 0; i < 2; ++i) block = std::max(block, std::abs(-2.0 * std::log(K(i, i).real()) - w));
      offdiag = std::max(offdiag, std::abs(K(0, 1)));
    }
    o.detail << "blocks vs rank-one runs " << block << ", off-diagonal " << offdiag << " (tol 1e-8); ";
    o.require(block <= 1e-8 && offdiag <= 1e-8, "block agreement");
  }

  // normalization of the factor densities is enforced
  const TorusPtr& T = b2->torus_ptr();
  bool rejected = false;
  try {
    split_solve(b2, {ScalarField::constant(T, 0.6), ScalarField::constant(T, 0.5)});
  } catch (const ConfigError&) {
    rejected = true;
  }
  o.require(rejected, "normalization check");

  // proportional densities: equality in the Holder bound and in the volume bound
  ScalarField f = positive_field(T, 0.4, 6);
  f *= 0.5 / f.values().real().mean();
  const SplitSolution sp = split_solve(b2, {f, f});
  const MavolReport rep = mavol_value(sp.metric);
  const double holder = std::abs(sp.holder_lhs - sp.holder_rhs), vol = std::abs(rep.value - rep.upper_bound);
  o.detail << "normalization rejected: " << (rejected ? "yes" : "no") << "; proportional-f Holder gap " << holder
           << ", volume gap " << vol;
  o.require(holder <= 1e-8 && vol <= 1e-8, "equality case");
}

bool trace_complete(const SolverTrace& t) {
  if (t.steps.empty()) return false;
  for (const auto& s : t.steps)
    if (!std::isfinite(s.t) || !std::isfinite(s.dual_nakano_margin) || !std::isfinite(s.ma_residual)) return false;
  return t.status == TerminalStatus::ReachedT1 || (!t.diagnostic.empty() && !t.events.empty());
}

void positivity_outcome(Outcome& o, const VerifyReport& rep) {
  auto b = make_bundle(BundleModel::Split, 2, 2, 1, 64);
  SystemConfig cfg;
  cfg.initial_conformal = 0.3;
  const auto t0 = Clock::now();
  const SolverTrace trace = continuity_run(b, cfg);
  const double secs = seconds_since(t0);
  double min_margin = 1e300;
  for (const auto& s : trace.steps) min_margin = std::min(min_margin, s.dual_nakano_margin);
  o.detail << "split r=2 d=2 N=64: " << to_string(trace.status) << ", " << trace.steps.size()
           << " records, min dual-Nakano margin " << min_margin << ", " << secs << " s";
  o.require(trace.status == TerminalStatus::ReachedT1, "reached t = 1");
  o.require(min_margin > 0.0, "positive margin at every step");
  o.require(secs < 300.0, "wall time");
  o.require(trace_complete(trace), "trace complete");

  // a harder instance: whatever the outcome, it must be reported in full
  auto bh = make_bundle(BundleModel::Extension, 3, 1, 1, 32);
  SystemConfig hard;
  hard.initial_conformal = 0.3;
  hard.schedule.min_step = 0.125;
  hard.max_retries = 0;
  SolverTrace th;
  try {
    th = continuity_run(bh, hard);
  } catch (const std::exception& e) {
    th.diagnostic = e.what();
  }
  o.detail << "; extension r=3: " << to_string(th.status)
           << (th.diagnostic.empty() ? "" : " (" + th.diagnostic + ")");
  o.require(trace_complete(th), "hard instance reported");
  o.require(rep.all_passed(), "verify suite passes");
}

void shrink(Outcome& o) {
  auto b = make_bundle(BundleModel::Split, 2, 1, 1, 64);
  const std::vector<double> s = {1.0, 2.0, 4.0, 8.0};
  // closed-form bump integrals I_0((s - 1)/2)^{-2}, frozen
  const double frozen[] = {1.0, 0.8841757371943644, 0.3687727289374247, 0.01836955979646562};
  const auto series = shrink_family(b, s);
  bool decreasing = true;
  double oracle_err = 0.0;
  o.detail << "values";
  for (std::size_t i = 0; i < series.size(); ++i) {
    o.detail << " " << series[i].value;
    if (i > 0) decreasing = decreasing && series[i].value < series[i - 1].value;
    oracle_err = std::max(oracle_err, std::abs(series[i].value - frozen[i]));
  }
  o.detail << "; s=8 / s=1 = " << series[3].value / series[0].value << " (limit 0.5); oracle error " << oracle_err;
  o.require(decreasing, "strictly decreasing");
  o.require(series[3].value < 0.5 * series[0].value, "s=8 below half");
  o.require(oracle_err <= 1e-9, "closed form");
}

}  // namespace

int main() {
  const auto start = Clock::now();
  VerifyConfig vc;
  const VerifyReport rep = run_verify(vc, 1);

  struct Criterion {
    int id;
    const char* name;
    std::function<void(Outcome&)> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "scalar oracle", scalar_oracle},
      {2, "linearization fidelity", linearization},
      {3, "symbol fidelity", symbol},
      {4, "cushioned initializer", cushioned},
      {5, "duality and hierarchy",
       [&](Outcome& o) {
         from_checks(o, rep, {"duality_split", "duality_extension", "duality_extension_order", "hierarchy",
                              "hierarchy_n1_coincide"});
       }},
      {6, "frame invariance",
       [&](Outcome& o) { from_checks(o, rep, {"det_root_frame_invariance", "det_root_block_product"}); }},
      {7, "volume bound", mavol_bound},
      {8, "split consistency", split_consistency},
      {9, "positivity outcome", [&](Outcome& o) { positivity_outcome(o, rep); }},
      {10, "shrink experiment", shrink},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    Outcome o;
    const auto t0 = Clock::now();
    try {
      c.run(o);
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    failed += o.pass ? 0 : 1;
    std::printf("%s %2d %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.str().c_str(),
                seconds_since(t0));
    std::fflush(stdout);
    if (c.id == 3) symbol_extension_info();
  }
  std::printf("%d of %zu criteria passed in %.1f s\n", static_cast<int>(criteria.size()) - failed, criteria.size(),
              seconds_since(start));
  return failed == 0 ? 0 : 1;
}
