#ifndef HYMLAB_FIELD_IO_HPP
#define HYMLAB_FIELD_IO_HPP

// Field files: `<base>.json` header (shape, twist, domain hash, payload hash)
// next to `<base>.bin`, raw little-endian complex128 in point-major order.
// Checkpoints bundle the continuation state with the resolved configuration.

#include "hymlab/config.hpp"

#include <json.hpp>

#include <string>

namespace hymlab {

void write_field(const std::string& base, const MatrixField& f, const nlohmann::json& meta = nlohmann::json::object());
void write_field(const std::string& base, const ScalarField& f, const nlohmann::json& meta = nlohmann::json::object());

/// Reads a matrix field on `torus`; throws DomainMismatch on a different grid
/// and Error on a corrupted payload.
MatrixField read_matrix_field(const std::string& base, const TorusPtr& torus);
ScalarField read_scalar_field(const std::string& base, const TorusPtr& torus);
MetricField read_metric(const std::string& base, const BundlePtr& bundle);
nlohmann::json read_header(const std::string& base);

struct Checkpoint {
  RunConfig config;
  BundlePtr bundle;
  ContinuityState state;
  nlohmann::json meta;
};

/// Writes `dir/state.json` and the metric, a0 and log-determinant fields.
void save_checkpoint(const std::string& dir, const RunConfig& cfg, const ContinuityState& state,
                     const nlohmann::json& meta = nlohmann::json::object());
Checkpoint load_checkpoint(const std::string& dir);

}  // namespace hymlab

#endif  // HYMLAB_FIELD_IO_HPP
