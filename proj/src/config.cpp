#include "hymlab/config.hpp"

#include "hymlab/hash.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace hymlab {

using nlohmann::json;

const char* code_version() { return "hymlab 1.0.0"; }

const char* to_string(AscentStart s) {
  switch (s) {
    case AscentStart::Reference: return "reference";
    case AscentStart::Random: return "random";
    case AscentStart::Shrink: return "shrink";
  }
  return "?";
}

namespace {

enum class Kind { Int, Real, Bool, Choice, Matrix, RealList, Text };

struct Key {
  const char* section;  // "" for top level
  const char* name;
  Kind kind;
  json def;
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  std::vector<std::string> choices{};
  const char* doc = "";
};

constexpr double inf = std::numeric_limits<double>::infinity();

// The matrix defaults depend on n and are filled in after the domain block is read.
const std::vector<Key>& keys() {
  static const std::vector<Key> k = {
      {"domain", "n", Kind::Int, 1, 1, 2, {}, "complex dimension of the torus"},
      {"domain", "resolution", Kind::Int, 32, 8, 512, {}, "grid points per real axis (even)"},
      {"domain", "period", Kind::Matrix, nullptr, -inf, inf, {}, "n x n period matrix, rows of [re, im]; default i Id"},
      {"domain", "kappa_shape", Kind::Matrix, nullptr, -inf, inf, {}, "shape of omega_0 before normalization; default Id"},
      {"domain", "scheme", Kind::Choice, "spectral", -inf, inf, {"spectral", "fd4"}, "derivatives of periodic fields"},
      {"bundle", "rank", Kind::Int, 2, 1, 3, {}, "rank r"},
      {"bundle", "degree", Kind::Int, 1, 1, 64, {}, "degree d of the ample line bundle L_d"},
      {"bundle", "model", Kind::Choice, "split", -inf, inf, {"split", "extension"}, "bundle model"},
      {"bundle", "twist_axis", Kind::Int, 0, 0, 3, {}, "real lattice axis carrying the monodromy"},
      {"system", "alpha", Kind::Real, 0.0, 0, inf, {}, "cushion alpha of theta(t, h)"},
      {"system", "alpha_policy", Kind::Choice, "auto", -inf, inf, {"auto", "raise", "fixed"}, ""},
      {"system", "epsilon", Kind::Real, 1.0, 0, inf, {}, "friction coefficient (> 0)"},
      {"system", "lambda", Kind::Real, 1.0, 0, inf, {}, "determinant exponent of the right-hand side"},
      {"system", "mu", Kind::Real, 0.0, -inf, inf, {}, "determinant exponent of the friction term"},
      {"system", "omega", Kind::Choice, "fixed", -inf, inf, {"fixed", "beta"}, "trace form omega_t"},
      {"system", "initial_step", Kind::Real, 0.25, 0, 1, {}, ""},
      {"system", "min_step", Kind::Real, 1.0 / 256.0, 0, 1, {}, ""},
      {"system", "grow", Kind::Real, 2.0, 1, inf, {}, ""},
      {"system", "shrink", Kind::Real, 0.5, 0, 1, {}, ""},
      {"system", "easy_iterations", Kind::Int, 4, 0, 1000, {}, "grow the step after at most this many Newton iterations"},
      {"system", "newton_max_iterations", Kind::Int, 25, 1, 10000, {}, ""},
      {"system", "newton_tolerance", Kind::Real, 1e-10, 0, inf, {}, "sup-norm of both residual parts"},
      {"system", "max_backtracks", Kind::Int, 10, 0, 100, {}, ""},
      {"system", "sufficient_decrease", Kind::Real, 1e-4, 0, 1, {}, ""},
      {"system", "gmres_restart", Kind::Int, 40, 1, 10000, {}, ""},
      {"system", "gmres_max_iterations", Kind::Int, 400, 1, 100000, {}, ""},
      {"system", "positivity_margin_floor", Kind::Real, 1e-6, 0, inf, {}, ""},
      {"system", "max_retries", Kind::Int, 4, 0, 100, {}, "epsilon / lambda doublings after step underflow"},
      {"system", "initial_conformal", Kind::Real, 0.0, -inf, inf, {}, "amplitude a of h_0 exp(-a psi)"},
      {"mavol", "start", Kind::Choice, "shrink", -inf, inf, {"reference", "random", "shrink"}, "ascent start metric"},
      {"mavol", "start_amplitude", Kind::Real, 0.02, 0, inf, {}, "random start amplitude"},
      {"mavol", "start_concentration", Kind::Real, 3.0, 1, inf, {}, "shrink start concentration (split only)"},
      {"mavol", "max_steps", Kind::Int, 200, 0, 1000000, {}, ""},
      {"mavol", "initial_step", Kind::Real, 0.05, 0, inf, {}, ""},
      {"mavol", "min_step", Kind::Real, 1e-8, 0, inf, {}, ""},
      {"mavol", "gradient_tolerance", Kind::Real, 1e-8, 0, inf, {}, ""},
      {"mavol", "margin_floor", Kind::Real, 1e-6, 0, inf, {}, ""},
      {"mavol", "smoothing", Kind::Real, 16.0, 0, inf, {}, "gradient smoothing (1 + s |m|^2)^-2"},
      {"mavol", "pointwise_rescaling", Kind::Bool, false, -inf, inf, {}, ""},
      {"mavol", "max_backtracks", Kind::Int, 30, 0, 1000, {}, ""},
      {"experiment", "shrink_concentrations", Kind::RealList, json::array({1.0, 2.0, 4.0, 8.0}), 1, inf, {}, ""},
      {"verify", "resolution", Kind::Int, 32, 8, 512, {}, "grid of the property suites"},
      {"verify", "samples", Kind::Int, 20, 1, 10000, {}, "random fields per suite"},
      {"verify", "inject_fault", Kind::Choice, "none", -inf, inf, {"none", "duality_sign"}, "mutation test mode"},
      {"output", "dir", Kind::Text, "out", -inf, inf, {}, ""},
      {"output", "checkpoint_every", Kind::Int, 1, 0, 1000000, {}, "accepted steps between checkpoints (0: final only)"},
      {"", "seed", Kind::Int, 1, 0, 9007199254740991.0, {}, ""},
      {"", "threads", Kind::Int, 1, 1, 1024, {}, ""},
  };
  return k;
}

const char* kSections[] = {"domain", "bundle", "system", "mavol", "experiment", "verify", "output"};

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
  throw ConfigError("config " + path + ": " + msg);
}

std::string path_of(const Key& k) { return std::string(*k.section ? k.section : "") + (*k.section ? "." : "") + k.name; }

void check_value(const Key& k, const json& v, int n) {
  const std::string path = path_of(k);
  auto range = [&](double x) {
    if (!(x >= k.lo && x <= k.hi)) {
      std::ostringstream os;
      os << "value " << x << " outside [" << k.lo << ", " << k.hi << "]";
      fail(path, os.str());
    }
  };
  switch (k.kind) {
    case Kind::Int:
      if (!v.is_number_integer()) fail(path, "expected an integer");
      range(static_cast<double>(v.get<long long>()));
      break;
    case Kind::Real:
      if (!v.is_number()) fail(path, "expected a number");
      range(v.get<double>());
      break;
    case Kind::Bool:
      if (!v.is_boolean()) fail(path, "expected true or false");
      break;
    case Kind::Text:
      if (!v.is_string()) fail(path, "expected a string");
      break;
    case Kind::Choice: {
      if (!v.is_string()) fail(path, "expected a string");
      const std::string s = v.get<std::string>();
      bool ok = false;
      for (const auto& c : k.choices) ok = ok || c == s;
      if (!ok) {
        std::string all;
        for (const auto& c : k.choices) all += (all.empty() ? "" : "|") + c;
        fail(path, "'" + s + "' is not one of " + all);
      }
      break;
    }
    case Kind::RealList:
      if (!v.is_array() || v.empty()) fail(path, "expected a non-empty list of numbers");
      for (const auto& x : v) {
        if (!x.is_number()) fail(path, "expected a non-empty list of numbers");
        range(x.get<double>());
      }
      break;
    case Kind::Matrix:
      if (!v.is_array() || static_cast<int>(v.size()) != n) fail(path, "expected " + std::to_string(n) + " rows");
      for (const auto& row : v) {
        if (!row.is_array() || static_cast<int>(row.size()) != n) fail(path, "rows must have n entries");
        for (const auto& e : row)
          if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number())
            fail(path, "entries are [re, im] pairs");
      }
      break;
  }
}

json matrix_json(const Eigen::MatrixXcd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back({m(i, j).real(), m(i, j).imag()});
    rows.push_back(row);
  }
  return rows;
}

Eigen::MatrixXcd matrix_from(const json& v) {
  const int n = static_cast<int>(v.size());
  Eigen::MatrixXcd m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = cplx(v[i][j][0].get<double>(), v[i][j][1].get<double>());
  return m;
}

json schema_type(const Key& k) {
  json s;
  switch (k.kind) {
    case Kind::Int: s["type"] = "integer"; break;
    case Kind::Real: s["type"] = "number"; break;
    case Kind::Bool: s["type"] = "boolean"; break;
    case Kind::Text: s["type"] = "string"; break;
    case Kind::Choice: s["type"] = "string"; s["enum"] = k.choices; break;
    case Kind::RealList:
      s["type"] = "array";
      s["minItems"] = 1;
      s["items"] = {{"type", "number"}};
      break;
    case Kind::Matrix:
      s["type"] = "array";
      s["items"] = {{"type", "array"},
                    {"items", {{"type", "array"}, {"items", {{"type", "number"}}}, {"minItems", 2}, {"maxItems", 2}}}};
      break;
  }
  if (k.kind == Kind::Int || k.kind == Kind::Real || k.kind == Kind::RealList) {
    json& target = k.kind == Kind::RealList ? s["items"] : s;
    if (std::isfinite(k.lo)) target["minimum"] = k.lo;
    if (std::isfinite(k.hi)) target["maximum"] = k.hi;
  }
  if (!k.def.is_null()) s["default"] = k.def;
  if (*k.doc) s["description"] = k.doc;
  return s;
}

}  // namespace

json config_schema() {
  json s;
  s["$schema"] = "https://json-schema.org/draft/2020-12/schema";
  s["title"] = "hymlab run configuration";
  s["type"] = "object";
  s["additionalProperties"] = false;
  for (const char* sec : kSections) s["properties"][sec] = {{"type", "object"}, {"additionalProperties", false}};
  for (const Key& k : keys()) {
    if (*k.section)
      s["properties"][k.section]["properties"][k.name] = schema_type(k);
    else
      s["properties"][k.name] = schema_type(k);
  }
  return s;
}

RunConfig parse_config(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config: the document must be a JSON object");
  // unknown keys
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    bool known = false;
    for (const char* sec : kSections) known = known || it.key() == sec;
    for (const Key& k : keys()) known = known || (!*k.section && it.key() == k.name);
    if (!known) fail(it.key(), "unknown key");
    bool is_section = false;
    for (const char* sec : kSections) is_section = is_section || it.key() == sec;
    if (is_section) {
      if (!it.value().is_object()) fail(it.key(), "expected an object");
      for (auto jt = it.value().begin(); jt != it.value().end(); ++jt) {
        bool found = false;
        for (const Key& k : keys()) found = found || (it.key() == k.section && jt.key() == k.name);
        if (!found) fail(it.key() + "." + jt.key(), "unknown key");
      }
    }
  }

  auto user = [&](const Key& k) -> const json* {
    if (*k.section) {
      if (!doc.contains(k.section) || !doc[k.section].contains(k.name)) return nullptr;
      return &doc[k.section][k.name];
    }
    return doc.contains(k.name) ? &doc[k.name] : nullptr;
  };

  json res = json::object();
  for (const char* sec : kSections) res[sec] = json::object();
  int n = 1;
  for (const Key& k : keys()) {
    if (std::string(k.section) == "domain" && std::string(k.name) == "n") {
      const json* v = user(k);
      if (v) check_value(k, *v, 0);
      n = v ? v->get<int>() : k.def.get<int>();
    }
  }
  for (const Key& k : keys()) {
    const json* v = user(k);
    json value;
    if (v) {
      check_value(k, *v, n);
      value = *v;
    } else if (k.kind == Kind::Matrix) {
      const std::string name = k.name;
      value = matrix_json(name == "period" ? Eigen::MatrixXcd(Eigen::MatrixXcd::Identity(n, n) * cplx(0.0, 1.0))
                                           : Eigen::MatrixXcd(Eigen::MatrixXcd::Identity(n, n)));
    } else {
      value = k.def;
    }
    if (*k.section)
      res[k.section][k.name] = value;
    else
      res[k.name] = value;
  }

  RunConfig c;
  const json& d = res["domain"];
  c.domain.n = n;
  c.domain.resolution = d["resolution"].get<int>();
  if (c.domain.resolution % 2 != 0) fail("domain.resolution", "must be even");
  c.domain.period = matrix_from(d["period"]);
  c.domain.kappa_shape = matrix_from(d["kappa_shape"]);
  c.domain.scheme = derivative_scheme_from_string(d["scheme"].get<std::string>());

  const json& b = res["bundle"];
  const int r = b["rank"].get<int>();
  const int deg = b["degree"].get<int>();
  const int axis = b["twist_axis"].get<int>();
  if (n * r > kMaxBlock) fail("bundle.rank", "n * r must not exceed " + std::to_string(kMaxBlock));
  if (axis >= 2 * n) fail("bundle.twist_axis", "must be below 2n = " + std::to_string(2 * n));
  if (bundle_model_from_string(b["model"].get<std::string>()) == BundleModel::Extension) {
    if (r < 2) fail("bundle.rank", "the extension model needs rank >= 2");
    c.bundle = BundleSpec::extension(r, deg, axis);
  } else {
    c.bundle = BundleSpec::split(r, deg);
    c.bundle.twist_axis = axis;
  }

  const json& s = res["system"];
  SystemConfig& sc = c.system;
  sc.alpha = s["alpha"].get<double>();
  sc.alpha_policy = alpha_policy_from_string(s["alpha_policy"].get<std::string>());
  sc.epsilon = s["epsilon"].get<double>();
  sc.lambda = s["lambda"].get<double>();
  sc.mu = s["mu"].get<double>();
  sc.omega = omega_variant_from_string(s["omega"].get<std::string>());
  sc.schedule.initial_step = s["initial_step"].get<double>();
  sc.schedule.min_step = s["min_step"].get<double>();
  sc.schedule.grow = s["grow"].get<double>();
  sc.schedule.shrink = s["shrink"].get<double>();
  sc.schedule.easy_iterations = s["easy_iterations"].get<int>();
  sc.newton.max_iterations = s["newton_max_iterations"].get<int>();
  sc.newton.tolerance = s["newton_tolerance"].get<double>();
  sc.newton.max_backtracks = s["max_backtracks"].get<int>();
  sc.newton.sufficient_decrease = s["sufficient_decrease"].get<double>();
  sc.newton.gmres_restart = s["gmres_restart"].get<int>();
  sc.newton.gmres_max_iterations = s["gmres_max_iterations"].get<int>();
  sc.positivity_margin_floor = s["positivity_margin_floor"].get<double>();
  sc.max_retries = s["max_retries"].get<int>();
  sc.initial_conformal = s["initial_conformal"].get<double>();
  sc.validate();

  const json& m = res["mavol"];
  const std::string start = m["start"].get<std::string>();
  c.mavol.start = start == "reference" ? AscentStart::Reference
                  : start == "shrink"  ? AscentStart::Shrink
                                       : AscentStart::Random;
  c.mavol.start_amplitude = m["start_amplitude"].get<double>();
  c.mavol.start_concentration = m["start_concentration"].get<double>();
  AscentOptions& a = c.mavol.ascent;
  a.max_steps = m["max_steps"].get<int>();
  a.initial_step = m["initial_step"].get<double>();
  a.min_step = m["min_step"].get<double>();
  a.gradient_tolerance = m["gradient_tolerance"].get<double>();
  a.margin_floor = m["margin_floor"].get<double>();
  a.smoothing = m["smoothing"].get<double>();
  a.pointwise_rescaling = m["pointwise_rescaling"].get<bool>();
  a.max_backtracks = m["max_backtracks"].get<int>();

  c.shrink_concentrations = res["experiment"]["shrink_concentrations"].get<std::vector<double>>();
  c.verify.resolution = res["verify"]["resolution"].get<int>();
  if (c.verify.resolution % 2 != 0) fail("verify.resolution", "must be even");
  c.verify.samples = res["verify"]["samples"].get<int>();
  c.verify.inject_fault = res["verify"]["inject_fault"].get<std::string>();
  c.output_dir = res["output"]["dir"].get<std::string>();
  c.checkpoint_every = res["output"]["checkpoint_every"].get<int>();
  c.seed = res["seed"].get<std::uint64_t>();
  c.threads = res["threads"].get<int>();

  c.resolved = res;
  c.hash = hex64(fnv1a64(res.dump()));
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json doc;
  try {
    doc = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_config(doc);
}

BundlePtr RunConfig::make_bundle() const { return Bundle::create(domain, bundle); }

}  // namespace hymlab
