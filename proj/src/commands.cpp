#include "hymlab/commands.hpp"

#include "hymlab/field_io.hpp"
#include "hymlab/verify.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace hymlab {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json stamp(const RunConfig& cfg) { return {{"code_version", code_version()}, {"config_hash", cfg.hash}}; }

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << j.dump(2) << "\n";
}

// CSV with a leading provenance comment line
class CsvWriter {
 public:
  CsvWriter(const fs::path& path, const RunConfig& cfg, const std::string& header) : out_(path) {
    if (!out_) throw Error("cannot write '" + path.string() + "'");
    out_ << "# " << code_version() << " config_hash=" << cfg.hash << "\n" << header << "\n";
    out_ << std::setprecision(17);
  }
  template <typename... T>
  void row(const T&... v) {
    int i = 0;
    ((out_ << (i++ ? "," : "") << v), ...);
    out_ << "\n";
  }

 private:
  std::ofstream out_;
};

json step_json(const StepRecord& r) {
  return {{"type", "step"},
          {"index", r.index},
          {"t", r.t},
          {"step", r.step},
          {"ma_residual", r.ma_residual},
          {"tf_residual", r.tf_residual},
          {"theta_margin", r.theta_margin},
          {"dual_nakano_margin", r.dual_nakano_margin},
          {"det_ratio_min", r.det_ratio_min},
          {"det_ratio_max", r.det_ratio_max},
          {"newton_iterations", r.newton_iterations},
          {"linear_iterations", r.linear_iterations},
          {"epsilon", r.epsilon},
          {"lambda", r.lambda},
          {"wall_seconds", r.wall_seconds}};
}

fs::path prepare(const std::string& dir, const RunConfig& cfg) {
  const fs::path out(dir);
  fs::create_directories(out);
  json resolved = cfg.resolved;
  write_json(out / "resolved_config.json", {{"config", resolved}, {"config_hash", cfg.hash},
                                            {"code_version", code_version()}});
  return out;
}

// Runs the continuation from `state` (or from scratch) streaming the trace,
// checkpoints and the steps CSV into `out`.
int drive(const RunConfig& cfg, const BundlePtr& bundle, const fs::path& out, std::ostream& log,
          const ContinuityState* resume_from, const json& origin) {
  std::ofstream trace_out(out / "trace.jsonl");
  trace_out << std::setprecision(17);
  json header = stamp(cfg);
  header["type"] = "header";
  header["origin"] = origin;
  trace_out << header.dump() << "\n";
  CsvWriter csv(out / "steps.csv", cfg,
                "index,t,step,ma_residual,tf_residual,theta_margin,dual_nakano_margin,det_ratio_min,det_ratio_max,"
                "newton_iterations,linear_iterations,epsilon,lambda");
  double min_dual = std::numeric_limits<double>::infinity();

  ContinuityHooks hooks;
  hooks.on_step = [&](const StepRecord& r, const ContinuityState& s) {
    trace_out << step_json(r).dump() << "\n";
    trace_out.flush();
    csv.row(r.index, r.t, r.step, r.ma_residual, r.tf_residual, r.theta_margin, r.dual_nakano_margin, r.det_ratio_min,
            r.det_ratio_max, r.newton_iterations, r.linear_iterations, r.epsilon, r.lambda);
    min_dual = std::min(min_dual, r.dual_nakano_margin);
    if (cfg.checkpoint_every > 0 && r.index % cfg.checkpoint_every == 0) {
      std::ostringstream name;
      name << "step_" << std::setw(4) << std::setfill('0') << r.index;
      save_checkpoint((out / "checkpoints" / name.str()).string(), cfg, s, {{"record", step_json(r)}});
    }
    log << "step " << r.index << "  t=" << r.t << "  newton=" << r.newton_iterations
        << "  dual-Nakano margin=" << r.dual_nakano_margin << "\n";
  };

  const auto clock0 = std::chrono::steady_clock::now();
  json summary = stamp(cfg);
  summary["config"] = cfg.resolved;
  SolverTrace trace;
  try {
    trace = resume_from ? continuity_resume(*resume_from, cfg.system, hooks)
                        : continuity_run(bundle, cfg.system, hooks);
  } catch (const ConfigError& e) {
    summary["status"] = "CONFIG_ERROR";
    summary["diagnostic"] = e.what();
    trace_out << json{{"type", "final"}, {"status", "CONFIG_ERROR"}, {"diagnostic", e.what()}}.dump() << "\n";
    write_json(out / "summary.json", summary);
    log << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  }
  for (const auto& e : trace.events) trace_out << json{{"type", "event"}, {"message", e}}.dump() << "\n";

  if (trace.final_state) {
    save_checkpoint((out / "final").string(), cfg, *trace.final_state, {{"status", to_string(trace.status)}});
  }
  summary["status"] = to_string(trace.status);
  summary["diagnostic"] = trace.diagnostic;
  summary["alpha"] = trace.alpha;
  summary["final_dual_nakano_margin"] = trace.final_dual_nakano_margin;
  summary["min_dual_nakano_margin"] = std::isfinite(min_dual) ? json(min_dual) : json(nullptr);
  summary["accepted_steps"] = trace.steps.size();
  summary["final_t"] = trace.final_state ? trace.final_state->t : 0.0;
  summary["events"] = trace.events;
  summary["origin"] = origin;
  summary["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - clock0).count();
  trace_out << json{{"type", "final"}, {"status", to_string(trace.status)}, {"diagnostic", trace.diagnostic},
                    {"final_dual_nakano_margin", trace.final_dual_nakano_margin}}
                   .dump()
            << "\n";
  write_json(out / "summary.json", summary);
  log << "status " << to_string(trace.status) << "  final dual-Nakano margin " << trace.final_dual_nakano_margin
      << (trace.diagnostic.empty() ? "" : "  (" + trace.diagnostic + ")") << "\n";
  return trace.status == TerminalStatus::ReachedT1 ? kExitOk : kExitRunFailed;
}

MetricField ascent_start(const RunConfig& cfg, const BundlePtr& b) {
  switch (cfg.mavol.start) {
    case AscentStart::Reference: return reference_metric(b);
    case AscentStart::Random: return random_smooth_metric(b, cfg.mavol.start_amplitude, cfg.seed);
    case AscentStart::Shrink:
      if (!b->split() || b->rank() < 2)
        throw ConfigError("mavol.start = shrink needs a split bundle of rank >= 2");
      return split_solve(b, shrink_densities(b, cfg.mavol.start_concentration)).metric;
  }
  return reference_metric(b);
}

json report_json(const MavolReport& r) {
  return {{"value", r.value},
          {"upper_bound", r.upper_bound},
          {"eigenvalue_identity_defect", r.eigenvalue_identity_defect},
          {"el_residual_norm", r.el_residual_norm},
          {"positivity_kind", to_string(r.kind)},
          {"margin", r.margin},
          {"positive", r.positive},
          {"condition_number", r.condition_number}};
}

// Ascent with trace.jsonl, ascent.csv and the final metric; returns (start, final) reports.
std::pair<MavolReport, MavolReport> run_ascent(const RunConfig& cfg, const MetricField& start, const fs::path& out,
                                               const std::string& stem, std::ostream& log) {
  const MavolReport first = mavol_value(start);
  const AscentResult res = mavol_ascend(start, cfg.mavol.ascent);
  CsvWriter csv(out / (stem + ".csv"), cfg, "step,value,margin,gradient_norm,step_size,condition_number");
  std::ofstream trace(out / "trace.jsonl");
  trace << std::setprecision(17);
  json header = stamp(cfg);
  header["type"] = "header";
  trace << header.dump() << "\n";
  for (const auto& r : res.trace) {
    csv.row(r.step, r.value, r.margin, r.gradient_norm, r.step_size, r.condition_number);
    trace << json{{"type", "ascent"}, {"step", r.step}, {"value", r.value}, {"margin", r.margin},
                  {"gradient_norm", r.gradient_norm}, {"step_size", r.step_size},
                  {"condition_number", r.condition_number}}
                 .dump()
          << "\n";
  }
  trace << json{{"type", "final"}, {"stop_reason", res.stop_reason}}.dump() << "\n";
  write_field((out / (stem + "_metric")).string(), res.h.matrix(), stamp(cfg));
  const MavolReport last = mavol_value(res.h);
  log << stem << ": value " << first.value << " -> " << last.value << " (bound " << last.upper_bound << ", "
      << res.trace.size() - 1 << " steps, " << res.stop_reason << ")\n";
  return {first, last};
}

}  // namespace

int cmd_solve(const RunConfig& cfg, std::ostream& log) {
  set_num_threads(cfg.threads);
  const fs::path out = prepare(cfg.output_dir, cfg);
  return drive(cfg, cfg.make_bundle(), out, log, nullptr, {{"kind", "fresh"}});
}

int cmd_resume(const std::string& checkpoint_dir, const std::string& out_dir, int threads, std::ostream& log) {
  Checkpoint ck = load_checkpoint(checkpoint_dir);
  if (threads > 0) {
    json doc = ck.config.resolved;
    doc["threads"] = threads;
    ck.config = parse_config(doc);
  }
  set_num_threads(ck.config.threads);
  const std::string dir = out_dir.empty() ? (fs::path(checkpoint_dir) / "resumed").string() : out_dir;
  RunConfig cfg = ck.config;
  const fs::path out = prepare(dir, cfg);
  log << "resuming at t = " << ck.state.t << " (step " << ck.state.steps_taken << ")\n";
  return drive(cfg, ck.bundle, out, log, &ck.state,
               {{"kind", "resume"}, {"checkpoint", fs::absolute(checkpoint_dir).string()}, {"t", ck.state.t},
                {"steps_taken", ck.state.steps_taken}});
}

int cmd_verify(const RunConfig& cfg, std::ostream& log) {
  set_num_threads(cfg.threads);
  const fs::path out = prepare(cfg.output_dir, cfg);
  const VerifyReport rep = run_verify(cfg.verify, cfg.seed);
  json j = rep.to_json();
  j.update(stamp(cfg));
  write_json(out / "verify.json", j);
  for (const auto& c : rep.checks)
    log << (c.passed ? "PASS " : "FAIL ") << c.name << "  value=" << c.value << "  tol=" << c.tolerance
        << (c.detail.empty() ? "" : "  " + c.detail) << "\n";
  log << (rep.all_passed() ? "all checks passed" : "some checks FAILED") << " in " << rep.seconds << " s\n";
  return rep.all_passed() ? kExitOk : kExitCheckFailed;
}

int cmd_mavol(const RunConfig& cfg, std::ostream& log) {
  set_num_threads(cfg.threads);
  const fs::path out = prepare(cfg.output_dir, cfg);
  const BundlePtr b = cfg.make_bundle();
  const auto [first, last] = run_ascent(cfg, ascent_start(cfg, b), out, "ascent", log);
  json j = stamp(cfg);
  j["start"] = report_json(first);
  j["final"] = report_json(last);
  write_json(out / "mavol.json", j);
  write_json(out / "summary.json", j);
  return kExitOk;
}

int cmd_experiment(const RunConfig& cfg, const std::string& which, std::ostream& log) {
  set_num_threads(cfg.threads);
  const fs::path out = prepare(cfg.output_dir, cfg);
  json summary = stamp(cfg);
  summary["experiment"] = which;

  if (which == "shrink") {
    const BundlePtr b = cfg.make_bundle();
    const auto series = shrink_family(b, cfg.shrink_concentrations);
    CsvWriter csv(out / "shrink.csv", cfg, "s,value,margin,condition_number,holder_integral");
    bool decreasing = true;
    json rows = json::array();
    for (std::size_t i = 0; i < series.size(); ++i) {
      const auto& p = series[i];
      csv.row(p.s, p.value, p.margin, p.condition_number, p.holder_integral);
      rows.push_back({{"s", p.s}, {"value", p.value}, {"margin", p.margin}, {"condition_number", p.condition_number}});
      if (i > 0) decreasing = decreasing && p.value < series[i - 1].value;
      log << "s=" << p.s << "  value=" << p.value << "  margin=" << p.margin << "\n";
    }
    summary["series"] = rows;
    summary["strictly_decreasing"] = decreasing;
    write_json(out / "summary.json", summary);
    return kExitOk;
  }

  if (which == "split") {
    if (cfg.bundle.model != BundleModel::Split) throw ConfigError("the split experiment needs bundle.model = split");
    const BundlePtr b = cfg.make_bundle();
    const auto [first, last] = run_ascent(cfg, ascent_start(cfg, b), out, "split", log);
    const ChernNumbers cn = chern_numbers(cfg.bundle, b->dim());
    double prod = 1.0;
    for (long long c : cn.per_factor) prod *= static_cast<double>(c);
    const double product_bound = std::pow(prod, 1.0 / b->rank());
    bool equal = true;
    for (long long c : cn.per_factor) equal = equal && c == cn.per_factor.front();
    const bool reached = last.value >= 0.98 * last.upper_bound;
    summary["start"] = report_json(first);
    summary["final"] = report_json(last);
    summary["product_bound"] = product_bound;
    summary["relative_gap"] = 1.0 - last.value / last.upper_bound;
    summary["flag"] = equal && reached ? "EQUALITY_CASE" : (reached ? "NEAR_BOUND" : "BELOW_BOUND");
    log << "flag " << summary["flag"].get<std::string>() << "\n";
    write_json(out / "summary.json", summary);
    return kExitOk;
  }

  if (which == "extension") {
    if (cfg.bundle.model != BundleModel::Extension)
      throw ConfigError("the extension experiment needs bundle.model = extension");
    const BundlePtr b = cfg.make_bundle();
    // start from H_0; the value creeps toward the line-bundle level while h degenerates
    RunConfig c = cfg;
    c.mavol.start = AscentStart::Reference;
    const auto [first, last] = run_ascent(c, ascent_start(c, b), out, "extension", log);
    summary["start"] = report_json(first);
    summary["final"] = report_json(last);
    summary["line_bundle_level"] = static_cast<double>(chern_numbers(cfg.bundle, b->dim()).c1_top) /
                                   std::pow(static_cast<double>(b->rank()), b->dim());
    summary["condition_number_growth"] = last.condition_number / first.condition_number;
    write_json(out / "summary.json", summary);
    return kExitOk;
  }
  throw ConfigError("unknown experiment '" + which + "' (expected split, extension or shrink)");
}

}  // namespace hymlab
