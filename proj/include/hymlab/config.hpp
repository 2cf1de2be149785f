#ifndef HYMLAB_CONFIG_HPP
#define HYMLAB_CONFIG_HPP

// Run configuration: a strict JSON document. Every key is declared in one
// table that drives validation, default filling, the resolved dump and the
// published JSON Schema.

#include "hymlab/mavol.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace hymlab {

const char* code_version();

enum class AscentStart { Reference, Random, Shrink };
const char* to_string(AscentStart s);

struct MavolConfig {
  AscentStart start = AscentStart::Shrink;
  double start_amplitude = 0.02;
  double start_concentration = 3.0;
  AscentOptions ascent;
};

struct VerifyConfig {
  int resolution = 32;
  int samples = 20;
  std::string inject_fault = "none";  // none | duality_sign
};

struct RunConfig {
  TorusParams domain;
  BundleSpec bundle;
  SystemConfig system;
  MavolConfig mavol;
  std::vector<double> shrink_concentrations{1.0, 2.0, 4.0, 8.0};
  VerifyConfig verify;
  std::string output_dir = "out";
  int checkpoint_every = 1;
  std::uint64_t seed = 1;
  int threads = 1;

  nlohmann::json resolved;  // every key, defaults filled in
  std::string hash;         // FNV-1a of the canonical resolved dump

  BundlePtr make_bundle() const;
};

/// Validates `doc` against the schema (unknown keys, types, ranges) and fills defaults.
RunConfig parse_config(const nlohmann::json& doc);
RunConfig load_config(const std::string& path);

/// JSON Schema (draft 2020-12) of the configuration document.
nlohmann::json config_schema();

}  // namespace hymlab

#endif  // HYMLAB_CONFIG_HPP
