#include "lidood/errors.hpp"
#include "lidood/pipeline.hpp"

#include "CLI11.hpp"

#include <functional>
#include <iostream>
#include <map>

namespace {

enum ExitCode { kOk = 0, kConfigError = 2, kNumericError = 3, kIoError = 4 };

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Likelihood and local-intrinsic-dimension OOD experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "run";
  std::optional<std::uint64_t> seed;
  bool quiet = false;

  using Command = std::function<nlohmann::json(const lidood::ExperimentConfig&, const lidood::RunLayout&)>;
  const std::vector<std::tuple<std::string, std::string, Command>> commands = {
      {"gen-data", "Generate the configured datasets as CSV", lidood::cmd_gen_data},
      {"train", "Train a flow or diffusion model and save a checkpoint", lidood::cmd_train},
      {"calibrate", "Calibrate the LID threshold against LPCA", lidood::cmd_calibrate},
      {"evaluate", "Score in-distribution and OOD queries and build ROC reports", lidood::cmd_evaluate},
      {"paradox-demo", "Run the two-Gaussian likelihood paradox end to end", lidood::cmd_paradox_demo},
      {"mass-slope", "Measure the log ball-mass slope against log radius", lidood::cmd_mass_slope},
  };
  std::map<CLI::App*, Command> dispatch;
  for (const auto& [name, help, fn] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "INI experiment config")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "Run directory")->capture_default_str();
    sub->add_option("--seed", seed, "Override [run] seed");
    sub->add_flag("--quiet", quiet, "Suppress the JSON summary on stdout");
    dispatch[sub] = fn;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  try {
    lidood::ExperimentConfig cfg = lidood::load_config(config_path);
    if (seed) cfg.seed = *seed;
    const lidood::RunLayout run{out_dir};
    lidood::prepare_run_dir(cfg, run);
    for (const auto& [sub, fn] : dispatch) {
      if (!sub->parsed()) continue;
      const nlohmann::json summary = fn(cfg, run);
      if (!quiet) std::cout << summary.dump(2) << '\n';
    }
    return kOk;
  } catch (const lidood::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const lidood::InvalidArgument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const lidood::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kNumericError;
  } catch (const lidood::IoError& e) {
    std::cerr << "i/o failure: " << e.what() << '\n';
    return kIoError;
  } catch (const lidood::ParseError& e) {
    std::cerr << "i/o failure: " << e.what() << '\n';
    return kIoError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
