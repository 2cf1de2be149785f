#include "hymlab/commands.hpp"
#include "hymlab/config.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>

using nlohmann::json;

namespace {

struct Overrides {
  std::string config;
  std::string out;
  int threads = 0;
  long long seed = -1;
};

json load_doc(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw hymlab::ConfigError("cannot open config '" + path + "'");
  try {
    return json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw hymlab::ConfigError("config " + path + ": " + e.what());
  }
}

hymlab::RunConfig resolve(const Overrides& o) {
  json doc = load_doc(o.config);
  if (!o.out.empty()) doc["output"]["dir"] = o.out;
  if (o.threads > 0) doc["threads"] = o.threads;
  if (o.seed >= 0) doc["seed"] = o.seed;
  return hymlab::parse_config(doc);
}

void add_common(CLI::App* sub, Overrides& o, bool config_required) {
  auto* c = sub->add_option("-c,--config", o.config, "JSON run configuration");
  if (config_required) c->required();
  sub->add_option("-o,--out", o.out, "output directory (overrides output.dir)");
  sub->add_option("-j,--threads", o.threads, "worker threads")->check(CLI::PositiveNumber);
  sub->add_option("--seed", o.seed, "random seed")->check(CLI::NonNegativeNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hermitian-Yang-Mills continuity solver and MA-volume tools"};
  app.set_version_flag("--version", hymlab::code_version());
  app.require_subcommand(1);

  Overrides o;
  std::string which;
  std::string checkpoint;

  auto* solve = app.add_subcommand("solve", "run the continuity method to t = 1");
  add_common(solve, o, true);
  solve->add_option("--resume", checkpoint, "continue from this checkpoint directory instead");

  auto* resume = app.add_subcommand("resume", "continue a run from a checkpoint directory");
  resume->add_option("checkpoint", checkpoint, "checkpoint directory")->required()->check(CLI::ExistingDirectory);
  resume->add_option("-o,--out", o.out, "output directory (default <checkpoint>/resumed)");
  resume->add_option("-j,--threads", o.threads, "worker threads")->check(CLI::PositiveNumber);

  auto* verify = app.add_subcommand("verify", "run the identity and property checks");
  add_common(verify, o, false);

  auto* mavol = app.add_subcommand("mavol", "evaluate and ascend the MA-volume functional");
  add_common(mavol, o, false);

  auto* experiment = app.add_subcommand("experiment", "run one of the MA-volume experiments");
  experiment->add_option("which", which, "split | extension | shrink")
      ->required()
      ->check(CLI::IsMember({"split", "extension", "shrink"}));
  add_common(experiment, o, false);

  auto* schema = app.add_subcommand("schema", "print the configuration JSON Schema");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*schema) {
      std::cout << hymlab::config_schema().dump(2) << "\n";
      return hymlab::kExitOk;
    }
    if (*resume || (*solve && !checkpoint.empty()))
      return hymlab::cmd_resume(checkpoint, o.out, o.threads, std::cout);
    const hymlab::RunConfig cfg = resolve(o);
    if (*solve) return hymlab::cmd_solve(cfg, std::cout);
    if (*verify) return hymlab::cmd_verify(cfg, std::cout);
    if (*mavol) return hymlab::cmd_mavol(cfg, std::cout);
    if (*experiment) return hymlab::cmd_experiment(cfg, which, std::cout);
  } catch (const hymlab::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return hymlab::kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return hymlab::kExitCheckFailed;
  }
  return hymlab::kExitOk;
}
