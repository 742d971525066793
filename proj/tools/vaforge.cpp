// vaforge command-line interface. Exit codes: 0 success, 1 runtime failure,
// 2 validation/config failure.

#include <cstdint>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "vaforge/pipeline.hpp"

namespace pl = vaforge::pipeline;

int main(int argc, char** argv) {
  CLI::App app{"vaforge: verbal autopsy cause-of-death classification pipeline"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  std::optional<std::uint64_t> seed;
  int workers = 1;
  std::string out;
  app.add_option("--config", config_path, "JSON run configuration (falls back to $VAFORGE_CONFIG)");
  app.add_option("--seed", seed, "Override the base seed");
  app.add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--out", out, "Output directory");

  using Command = std::function<int(const pl::RunConfig&, std::ostream&)>;
  const std::map<std::string, std::pair<std::string, Command>> commands = {
      {"validate", {"Check data, taxonomy and templates", pl::cmd_validate}},
      {"prep", {"Write split, fused documents and text artifacts", pl::cmd_prep}},
      {"run", {"Train, predict and evaluate the configured pipeline",
               [](const pl::RunConfig& c, std::ostream& o) { return pl::cmd_run(c, o); }}},
      {"ensemble", {"Compare soft voting and stacking", pl::cmd_ensemble}},
      {"hpo", {"Hyperparameter search with cross-validation", pl::cmd_hpo}},
      {"sensitivity", {"Training-size curve on the fixed test set", pl::cmd_sensitivity}},
      {"ablation", {"Leave-one-model-out soft voting", pl::cmd_ablation}},
      {"sufficiency", {"Information-sufficiency prediction and modality contribution", pl::cmd_sufficiency}},
      {"report", {"Markdown summary of metrics.json", pl::cmd_report}},
  };
  for (const auto& [name, entry] : commands) app.add_subcommand(name, entry.first);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : pl::kExitValidation;
  }

  if (config_path.empty()) {
    if (const char* env = std::getenv("VAFORGE_CONFIG")) config_path = env;
  }
  if (config_path.empty()) {
    std::cerr << "error: no config given (--config or VAFORGE_CONFIG)\n";
    return pl::kExitValidation;
  }
  try {
    pl::RunConfig cfg = pl::load_config(config_path, seed);
    cfg.workers = workers;
    if (!out.empty()) cfg.out = out;
    for (const auto& [name, entry] : commands) {
      if (app.got_subcommand(name)) return entry.second(cfg, std::cout);
    }
    return pl::kExitRuntime;
  } catch (const vaforge::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return pl::kExitValidation;
  } catch (const vaforge::SchemaError& e) {
    std::cerr << "schema error: " << e.what() << "\n";
    return pl::kExitValidation;
  } catch (const vaforge::ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return pl::kExitValidation;
  } catch (const vaforge::HyperparamError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return pl::kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return pl::kExitRuntime;
  }
}
