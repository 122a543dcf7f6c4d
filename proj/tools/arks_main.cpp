#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "arks/cli.hpp"
#include "arks/errors.hpp"

namespace {

// Subcommand name -> experiment kinds it accepts.
bool accepts(const std::string& sub, arks::ExperimentKind k) {
  using K = arks::ExperimentKind;
  if (sub == "train") return k == K::train;
  if (sub == "sweep") return k == K::attack_sweep || k == K::shift_sweep;
  if (sub == "certify") return k == K::certify;
  if (sub == "rls") return k == K::rls;
  return k == K::selftest;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kernel-smoothed robust training and evaluation"};
  app.require_subcommand(1);
  std::string config_path, out_dir = "out";

  for (const char* name : {"train", "sweep", "certify", "rls", "selftest"}) {
    CLI::App* sub = app.add_subcommand(name);
    auto* opt = sub->add_option("--config", config_path, "JSON experiment config");
    if (std::string(name) != "selftest") opt->required();
    sub->add_option("--out", out_dir, "output directory")->capture_default_str();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  const std::string sub = app.get_subcommands().front()->get_name();
  try {
    arks::ExperimentConfig cfg;
    if (!config_path.empty()) {
      cfg = arks::load_config(config_path);
    } else {
      cfg.kind = arks::ExperimentKind::selftest;
    }
    if (!accepts(sub, cfg.kind)) {
      throw arks::ConfigError("subcommand '" + sub + "' cannot run a '" + arks::to_string(cfg.kind) + "' config");
    }
    arks::run(cfg, out_dir, std::cerr);
  } catch (const std::exception& e) {
    const int rc = arks::exit_code_for(e);
    std::cerr << "error (exit " << rc << "): " << e.what() << "\n";
    return rc;
  }
  return 0;
}
