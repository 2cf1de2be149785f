#include "hymlab/field_io.hpp"

#include "hymlab/hash.hpp"

#include <bit>
#include <filesystem>
#include <fstream>
#include <string_view>

namespace hymlab {

using nlohmann::json;
namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "field files are written in native little-endian order");

namespace {

json mat_json(const SmallMat& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back({m(i, j).real(), m(i, j).imag()});
    rows.push_back(row);
  }
  return rows;
}

SmallMat mat_from(const json& v) {
  const Eigen::Index n = static_cast<Eigen::Index>(v.size());
  SmallMat m(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) m(i, j) = cplx(v[i][j][0].get<double>(), v[i][j][1].get<double>());
  return m;
}

std::string_view bytes_of(const cplx* data, Eigen::Index count) {
  return {reinterpret_cast<const char*>(data), static_cast<std::size_t>(count) * sizeof(cplx)};
}

void write_raw(const std::string& base, const char* kind, const Torus& T, int dim, const Twist& twist,
               const cplx* data, Eigen::Index rows, Eigen::Index cols, const json& meta) {
  const std::string_view payload = bytes_of(data, rows * cols);
  {
    std::ofstream out(base + ".bin", std::ios::binary);
    if (!out) throw Error("cannot write '" + base + ".bin'");
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  }
  json h;
  h["format"] = "hymlab-field";
  h["version"] = 1;
  h["code_version"] = code_version();
  h["kind"] = kind;
  h["dtype"] = "complex128";
  h["byte_order"] = "little";
  h["layout"] = "point-major; components of a matrix are column-major";
  h["components"] = rows;
  h["points"] = cols;
  h["dim"] = dim;
  h["n"] = T.dim();
  h["resolution"] = T.resolution();
  h["domain_hash"] = hex64(T.hash());
  if (twist.periodic()) {
    h["twist"] = nullptr;
  } else {
    h["twist"] = {{"axis", twist.axis}, {"left", mat_json(twist.left)}, {"right", mat_json(twist.right)}};
  }
  h["payload"] = fs::path(base + ".bin").filename().string();
  h["payload_fnv1a"] = hex64(fnv1a64(payload));
  h["meta"] = meta;
  std::ofstream out(base + ".json");
  if (!out) throw Error("cannot write '" + base + ".json'");
  out << h.dump(2) << "\n";
}

ComponentArray read_raw(const std::string& base, const Torus& T, const char* kind, json& header) {
  header = read_header(base);
  if (header.value("format", "") != "hymlab-field") throw Error("'" + base + ".json' is not a field header");
  if (header.value("kind", "") != kind) throw DomainMismatch("'" + base + "' holds a " + header.value("kind", "?") +
                                                              " field, expected " + kind);
  if (header["domain_hash"].get<std::string>() != hex64(T.hash()))
    throw DomainMismatch("'" + base + "' was written on a different grid or torus");
  const Eigen::Index rows = header["components"].get<Eigen::Index>();
  const Eigen::Index cols = header["points"].get<Eigen::Index>();
  if (cols != T.num_points()) throw DomainMismatch("'" + base + "' has the wrong number of points");
  ComponentArray a(rows, cols);
  const fs::path bin = fs::path(base).parent_path() / header["payload"].get<std::string>();
  std::ifstream in(bin, std::ios::binary);
  if (!in) throw Error("cannot read '" + bin.string() + "'");
  in.read(reinterpret_cast<char*>(a.data()), static_cast<std::streamsize>(rows * cols * sizeof(cplx)));
  if (in.gcount() != static_cast<std::streamsize>(rows * cols * sizeof(cplx)))
    throw Error("'" + bin.string() + "' is truncated");
  if (hex64(fnv1a64(bytes_of(a.data(), rows * cols))) != header["payload_fnv1a"].get<std::string>())
    throw Error("'" + bin.string() + "' does not match its content hash");
  return a;
}

}  // namespace

json read_header(const std::string& base) {
  std::ifstream in(base + ".json");
  if (!in) throw Error("cannot read '" + base + ".json'");
  return json::parse(in);
}

void write_field(const std::string& base, const MatrixField& f, const json& meta) {
  write_raw(base, "matrix", f.torus(), f.dim(), f.twist(), f.data().data(), f.data().rows(), f.data().cols(), meta);
}

void write_field(const std::string& base, const ScalarField& f, const json& meta) {
  write_raw(base, "scalar", f.torus(), 1, Twist::none(), f.values().data(), 1, f.size(), meta);
}

MatrixField read_matrix_field(const std::string& base, const TorusPtr& torus) {
  json h;
  ComponentArray a = read_raw(base, *torus, "matrix", h);
  const int dim = h["dim"].get<int>();
  if (a.rows() != static_cast<Eigen::Index>(dim) * dim) throw Error("'" + base + "' has an inconsistent shape");
  Twist tw = Twist::none();
  if (!h["twist"].is_null())
    tw = Twist::make(h["twist"]["axis"].get<int>(), mat_from(h["twist"]["left"]), mat_from(h["twist"]["right"]));
  MatrixField f(torus, dim, tw);
  f.data() = std::move(a);
  return f;
}

ScalarField read_scalar_field(const std::string& base, const TorusPtr& torus) {
  json h;
  ComponentArray a = read_raw(base, *torus, "scalar", h);
  return ScalarField(torus, a.row(0).transpose());
}

MetricField read_metric(const std::string& base, const BundlePtr& bundle) {
  MatrixField K = read_matrix_field(base, bundle->torus_ptr());
  if (K.dim() != bundle->rank()) throw DomainMismatch("'" + base + "' has the wrong rank");
  if (!K.twist().same_as(bundle->form_twist(), 1e-12)) throw DomainMismatch("'" + base + "' has a different twist");
  K.set_twist(bundle->form_twist());
  return MetricField(bundle, std::move(K));
}

void save_checkpoint(const std::string& dir, const RunConfig& cfg, const ContinuityState& s, const json& meta) {
  fs::create_directories(dir);
  const std::string d = (fs::path(dir) / "").string();
  write_field(d + "metric", s.h.matrix(), {{"t", s.t}});
  write_field(d + "a0_base", s.a0_base);
  write_field(d + "logdet0", s.logdet0);
  json st;
  st["format"] = "hymlab-checkpoint";
  st["code_version"] = code_version();
  st["config_hash"] = cfg.hash;
  st["config"] = cfg.resolved;
  st["bundle_hash"] = hex64(s.h.bundle().hash());
  st["state"] = {{"t", s.t},
                 {"step", s.step},
                 {"alpha", s.alpha},
                 {"epsilon", s.epsilon},
                 {"lambda", s.lambda},
                 {"retries_used", s.retries_used},
                 {"steps_taken", s.steps_taken}};
  st["meta"] = meta;
  std::ofstream out(d + "state.json");
  if (!out) throw Error("cannot write checkpoint in '" + dir + "'");
  out << st.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::string& dir) {
  const std::string d = (fs::path(dir) / "").string();
  std::ifstream in(d + "state.json");
  if (!in) throw Error("no checkpoint at '" + dir + "' (state.json missing)");
  const json st = json::parse(in);
  if (st.value("format", "") != "hymlab-checkpoint") throw Error("'" + dir + "' is not a checkpoint");
  Checkpoint c;
  c.config = parse_config(st["config"]);
  if (c.config.hash != st["config_hash"].get<std::string>()) throw Error("checkpoint config does not match its hash");
  c.bundle = c.config.make_bundle();
  if (hex64(c.bundle->hash()) != st["bundle_hash"].get<std::string>())
    throw DomainMismatch("checkpoint bundle differs from the one rebuilt from its config");
  const json& s = st["state"];
  c.state.h = read_metric(d + "metric", c.bundle);
  c.state.a0_base = read_scalar_field(d + "a0_base", c.bundle->torus_ptr());
  c.state.logdet0 = read_scalar_field(d + "logdet0", c.bundle->torus_ptr());
  c.state.t = s["t"].get<double>();
  c.state.step = s["step"].get<double>();
  c.state.alpha = s["alpha"].get<double>();
  c.state.epsilon = s["epsilon"].get<double>();
  c.state.lambda = s["lambda"].get<double>();
  c.state.retries_used = s["retries_used"].get<int>();
  c.state.steps_taken = s["steps_taken"].get<int>();
  c.meta = st["meta"];
  return c;
}

}  // namespace hymlab
