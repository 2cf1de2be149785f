#include "hymlab/hym_system.hpp"

#include "hymlab/matfun.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <sstream>

namespace hymlab {

namespace {

using Mode = LinearizedSystem::Mode;

NewtonResult newton_core(MetricField h, double t, const SystemConfig& cfg, const ScalarField* a0, Mode mode) {
  const NewtonOptions& opt = cfg.newton;
  NewtonResult out;
  std::optional<LinearizedSystem> sys;
  try {
    sys.emplace(h, t, cfg, a0, mode);
  } catch (const PositivityError& e) {
    out.h = std::move(h);
    out.diagnostic = std::string("initial iterate rejected: ") + e.what();
    return out;
  }
  for (int it = 0;; ++it) {
    const double sup = sys->residual().sup();
    out.history.push_back(sup);
    if (sup <= opt.tolerance) {
      out.converged = true;
      break;
    }
    if (it == opt.max_iterations) {
      std::ostringstream os;
      os << "no convergence after " << it << " Newton iterations, residual " << sup;
      out.diagnostic = os.str();
      break;
    }
    const Eigen::VectorXd rhs = -sys->packed_residual();
    GmresOptions go;
    go.restart = opt.gmres_restart;
    go.max_iterations = opt.gmres_max_iterations;
    go.relative_tolerance = std::clamp(0.01 * sup, 1e-9, 1e-3);
    const LinearizedSystem& S = *sys;
    const GmresResult g = gmres([&](const Eigen::VectorXd& x) { return S.apply(x); }, rhs,
                                [&](const Eigen::VectorXd& x) { return S.precondition(x); }, go);
    out.linear_iterations += g.iterations;
    const EndoField u = S.unpack_direction(g.x);
    const double merit0 = S.merit();

    bool accepted = false;
    double step = 1.0;
    std::string last_failure = "insufficient decrease";
    for (int b = 0; b <= opt.max_backtracks; ++b, step *= 0.5) {
      try {
        MetricField trial_h = h.exp_update(u, step);
        LinearizedSystem trial(trial_h, t, cfg, a0, mode);
        if (trial.merit() <= (1.0 - opt.sufficient_decrease * step) * merit0 ||
            trial.residual().sup() <= opt.tolerance) {
          h = std::move(trial_h);
          sys.emplace(std::move(trial));
          accepted = true;
          break;
        }
      } catch (const PositivityError& e) {
        last_failure = e.what();
      }
    }
    out.iterations = it + 1;
    if (!accepted) {
      std::ostringstream os;
      os << "line search failed at iteration " << it + 1 << " (" << last_failure << "), residual " << sup;
      out.diagnostic = os.str();
      break;
    }
  }
  out.residual = sys->residual();
  out.h = std::move(h);
  return out;
}

double psi_at(const Eigen::VectorXd& x) {
  double s = 0.0;
  for (Eigen::Index a = 0; a < x.size(); ++a) s += std::cos(2.0 * std::numbers::pi * x(a));
  return s;
}

SystemConfig resolved(const SystemConfig& cfg, const ContinuityState& s) {
  SystemConfig c = cfg;
  c.alpha = s.alpha;
  c.epsilon = s.epsilon;
  c.lambda = s.lambda;
  return c;
}

StepRecord make_record(const ContinuityState& s, const NewtonResult& nr, double step, double wall) {
  StepRecord rec;
  rec.index = s.steps_taken;
  rec.t = s.t;
  rec.step = step;
  rec.ma_residual = nr.residual.ma_sup;
  rec.tf_residual = nr.residual.tf_sup;
  MetricGeometry g(s.h);
  rec.dual_nakano_margin = theta_margin(g, 0.0);
  rec.theta_margin = rec.dual_nakano_margin + (1.0 - s.t) * s.alpha;
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (Eigen::Index p = 0; p < s.h.matrix().num_points(); ++p) {
    const double ratio = 1.0 / s.h.at(p).determinant().real();
    lo = std::min(lo, ratio);
    hi = std::max(hi, ratio);
  }
  rec.det_ratio_min = lo;
  rec.det_ratio_max = hi;
  rec.newton_iterations = nr.iterations;
  rec.linear_iterations = nr.linear_iterations;
  rec.epsilon = s.epsilon;
  rec.lambda = s.lambda;
  rec.wall_seconds = wall;
  return rec;
}

}  // namespace

NewtonResult newton_solve(const MetricField& h_init, double t, const SystemConfig& cfg, const ScalarField& a0) {
  return newton_core(h_init, t, cfg, &a0, Mode::Full);
}

NewtonResult cushioned_solve(const BundlePtr& bundle, double eps, const SystemConfig& cfg,
                             const std::optional<MetricField>& start) {
  if (!(eps > 0.0)) throw ConfigError("cushioned solve needs epsilon > 0");
  MetricField h = start ? *start : reference_metric(bundle);
  const int r = bundle->rank();
  // project out the determinant mode: det h = det H_0 (= 1 in both models)
  for (Eigen::Index p = 0; p < h.matrix().num_points(); ++p) {
    const double det = h.at(p).determinant().real();
    if (!(det > 0.0)) throw PositivityError("cushioned start is not positive");
    h.matrix().data().col(p) *= std::pow(det, -1.0 / r);
  }
  SystemConfig c = cfg;
  c.epsilon = eps;
  c.omega = OmegaVariant::Fixed;
  return newton_core(std::move(h), 0.0, c, nullptr, Mode::Cushioned);
}

double cushioned_residual_sup(const MetricField& h, double eps) {
  SystemConfig c;
  c.epsilon = eps;
  return LinearizedSystem(h, 0.0, c, nullptr, Mode::Cushioned).residual().tf_sup;
}

ScalarField ContinuityState::a0() const {
  ScalarField a = a0_base;
  for (Eigen::Index p = 0; p < a.size(); ++p) a[p] *= std::exp(lambda * logdet0[p].real());
  return a;
}

ContinuityState continuity_start(const BundlePtr& bundle, const SystemConfig& cfg, SolverTrace& trace) {
  cfg.validate();
  const auto clock0 = std::chrono::steady_clock::now();
  NewtonResult cush = cushioned_solve(bundle, cfg.epsilon, cfg);
  if (!cush.converged) throw Error("cushioned initializer failed: " + cush.diagnostic);
  MetricField h0 = cush.h;
  if (cfg.initial_conformal != 0.0) {
    const TorusPtr& T = bundle->torus_ptr();
    EndoField u = EndoField::identity(T, bundle->rank(), bundle->endo_twist());
    for (Eigen::Index p = 0; p < T->num_points(); ++p)
      u.data().col(p) *= -cfg.initial_conformal * psi_at(T->lattice_point(p));
    h0 = h0.exp_update(u);
  }

  const double m0 = theta_margin(MetricGeometry(h0), 0.0);
  const double needed = 2.0 * cfg.positivity_margin_floor - m0;
  const double automatic = std::max(0.0, -m0) + 1.0;
  double alpha = cfg.alpha;
  switch (cfg.alpha_policy) {
    case AlphaPolicy::Auto: alpha = automatic; break;
    case AlphaPolicy::Raise:
      if (alpha < needed) {
        trace.events.push_back("alpha raised from " + std::to_string(alpha) + " to " + std::to_string(automatic));
        alpha = automatic;
      }
      break;
    case AlphaPolicy::Fixed:
      if (alpha < needed) {
        std::ostringstream os;
        os << "theta(0, h0) margin " << m0 + alpha << " is below twice the floor with alpha = " << alpha
           << "; required alpha >= " << needed;
        throw ConfigError(os.str());
      }
      break;
  }
  trace.alpha = alpha;

  ContinuityState s;
  s.alpha = alpha;
  s.epsilon = cfg.epsilon;
  s.lambda = cfg.lambda;
  s.step = cfg.schedule.initial_step;
  s.a0_base = a0_init(h0, alpha, 0.0);
  s.logdet0 = ScalarField(bundle->torus_ptr());
  for (Eigen::Index p = 0; p < s.logdet0.size(); ++p) s.logdet0[p] = std::log(h0.at(p).determinant().real());

  NewtonResult nr = newton_solve(h0, 0.0, resolved(cfg, s), s.a0());
  if (!nr.converged) throw Error("t = 0 solve failed: " + nr.diagnostic);
  s.h = nr.h;
  s.t = 0.0;
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - clock0).count();
  trace.steps.push_back(make_record(s, nr, 0.0, wall));
  return s;
}

SolverTrace continuity_run(const BundlePtr& bundle, const SystemConfig& cfg, const ContinuityHooks& hooks) {
  SolverTrace trace;
  ContinuityState s;
  try {
    s = continuity_start(bundle, cfg, trace);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    trace.status = TerminalStatus::NewtonFail;
    trace.diagnostic = e.what();
    return trace;
  }
  if (hooks.on_step) hooks.on_step(trace.steps.back(), s);
  SolverTrace rest = continuity_resume(std::move(s), cfg, hooks);
  rest.steps.insert(rest.steps.begin(), trace.steps.begin(), trace.steps.end());
  rest.events.insert(rest.events.begin(), trace.events.begin(), trace.events.end());
  return rest;
}

SolverTrace continuity_resume(ContinuityState s, const SystemConfig& cfg, const ContinuityHooks& hooks) {
  cfg.validate();
  SolverTrace trace;
  trace.alpha = s.alpha;
  const auto clock0 = std::chrono::steady_clock::now();
  auto wall = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - clock0).count(); };
  SystemConfig c = resolved(cfg, s);
  ScalarField a0 = s.a0();

  while (s.t < 1.0) {
    const double t_try = std::min(1.0, s.t + s.step);
    NewtonResult nr = newton_solve(s.h, t_try, c, a0);
    if (nr.converged) {
      const double dual = theta_margin(MetricGeometry(nr.h), 0.0);
      const double margin = dual + (1.0 - t_try) * s.alpha;
      if (margin < cfg.positivity_margin_floor) {
        std::ostringstream os;
        os << "theta margin " << margin << " below floor " << cfg.positivity_margin_floor << " at t = " << t_try;
        trace.status = TerminalStatus::PositivityLost;
        trace.diagnostic = os.str();
        trace.events.push_back(os.str());
        trace.final_metric = s.h;
        trace.final_state = s;
        return trace;
      }
      const double taken = t_try - s.t;
      s.h = std::move(nr.h);
      s.t = t_try;
      ++s.steps_taken;
      if (nr.iterations <= cfg.schedule.easy_iterations) s.step = std::min(1.0, s.step * cfg.schedule.grow);
      trace.steps.push_back(make_record(s, nr, taken, wall()));
      if (hooks.on_step) hooks.on_step(trace.steps.back(), s);
      continue;
    }
    std::ostringstream os;
    os << "rejected t = " << t_try << ": " << nr.diagnostic;
    trace.events.push_back(os.str());
    s.step *= cfg.schedule.shrink;
    if (s.step >= cfg.schedule.min_step) continue;
    if (s.retries_used >= cfg.max_retries) {
      std::ostringstream d;
      d << "step underflow at t = " << s.t << " after " << s.retries_used << " retries; last: " << nr.diagnostic;
      trace.status = TerminalStatus::StepUnderflow;
      trace.diagnostic = d.str();
      trace.final_metric = s.h;
      trace.final_state = s;
      return trace;
    }
    // retry ladder: alternate eps x2 and lambda x2, then re-solve at the current t
    std::ostringstream ev;
    if (s.retries_used % 2 == 0) {
      s.epsilon *= 2.0;
      ev << "retry " << s.retries_used + 1 << ": epsilon -> " << s.epsilon;
    } else {
      s.lambda = s.lambda > 0.0 ? 2.0 * s.lambda : 1.0;
      ev << "retry " << s.retries_used + 1 << ": lambda -> " << s.lambda;
    }
    ++s.retries_used;
    s.step = cfg.schedule.initial_step;
    c = resolved(cfg, s);
    a0 = s.a0();
    trace.events.push_back(ev.str());
    NewtonResult re = newton_solve(s.h, s.t, c, a0);
    if (!re.converged) {
      trace.status = TerminalStatus::NewtonFail;
      trace.diagnostic = "re-solve after parameter change failed at t = " + std::to_string(s.t) + ": " + re.diagnostic;
      trace.final_metric = s.h;
      trace.final_state = s;
      return trace;
    }
    s.h = std::move(re.h);
  }
  trace.status = TerminalStatus::ReachedT1;
  trace.final_dual_nakano_margin = theta_margin(MetricGeometry(s.h), 0.0);
  trace.final_metric = s.h;
  trace.final_state = s;
  return trace;
}

// ---------------------------------------------------------------------------
// Split equation

double chern_measure_integral(const ScalarField& f) {
  const Torus& T = f.torus();
  const double w = T.omega_density() / std::pow(2.0 * std::numbers::pi, T.dim());
  return integrate(cplx(w, 0.0) * f);
}

SplitSolution split_solve(const BundlePtr& bundle, const std::vector<ScalarField>& f_parts,
                          double normalization_tolerance) {
  if (!bundle->split()) throw ConfigError("split_solve needs the split model");
  const Torus& T = bundle->torus();
  if (T.dim() != 1) throw ConfigError("split_solve supports n = 1 (linear potential equation)");
  const int r = bundle->rank();
  if (static_cast<int>(f_parts.size()) != r) throw DomainMismatch("one density per line factor is required");
  const ChernNumbers cn = chern_numbers(bundle->spec(), T.dim());

  SplitSolution sol;
  const Eigen::Index P = T.num_points();
  const DiffOps& ops = T.ops();
  const DerivativeScheme scheme = ops.scheme_for(Twist::none());
  const double kappa = T.kappa()(0, 0).real();
  MatrixField K = MatrixField::zero(bundle->torus_ptr(), r);
  for (int j = 0; j < r; ++j) {
    const ScalarField& f = f_parts[j];
    if (f.min_real() <= 0.0) throw ConfigError("split_solve densities must be positive");
    const double norm = chern_measure_integral(f);
    const double expected = static_cast<double>(cn.per_factor[j]);
    sol.normalizations.push_back(norm);
    if (std::abs(norm - expected) > normalization_tolerance * expected) {
      std::ostringstream os;
      os << "factor " << j << ": density integrates to " << norm << ", expected " << expected;
      throw ConfigError(os.str());
    }
    // kappa / r + u_zzbar = kappa f
    ComponentArray F(1, P);
    for (Eigen::Index p = 0; p < P; ++p) F(0, p) = kappa * (f[p].real() - 1.0 / r);
    ops.fft_forward(F);
    for (Eigen::Index q = 0; q < P; ++q) {
      const cplx s = ops.symbol_mixed(0, 0, q, scheme);
      F(0, q) = std::abs(s) > 0.0 ? F(0, q) / s : 0.0;
    }
    ops.fft_inverse(F);
    ScalarField u(bundle->torus_ptr());
    for (Eigen::Index p = 0; p < P; ++p) {
      u[p] = F(0, p).real();
      K.data()(j * r + j, p) = std::exp(-F(0, p).real());
    }
    sol.potentials.push_back(std::move(u));
  }
  sol.metric = MetricField(bundle, std::move(K));

  ScalarField g(bundle->torus_ptr());
  for (Eigen::Index p = 0; p < P; ++p) {
    double prod = 1.0;
    for (int j = 0; j < r; ++j) prod *= f_parts[j][p].real();
    g[p] = std::pow(prod, 1.0 / r);
  }
  sol.holder_lhs = chern_measure_integral(g);
  double prod = 1.0;
  for (long long c : cn.per_factor) prod *= static_cast<double>(c);
  sol.holder_rhs = std::pow(prod, 1.0 / r);
  if (sol.holder_lhs > sol.holder_rhs * (1.0 + 1e-10)) {
    std::ostringstream os;
    os << "Holder bound violated: " << sol.holder_lhs << " > " << sol.holder_rhs;
    throw Error(os.str());
  }
  return sol;
}

}  // namespace hymlab
