// bayesdens: command-line front end for the density estimators.
//
//   bayesdens kde data.txt --h 0.4 --grid=-4:4:161 --out kde.csv --meta kde.json
//   bayesdens simulate --truth skewed-mixture --estimators oracle,kde,semiparam --R 100 --report sim.csv
//
// Errors print "<ErrorName>: <message>" on stderr and exit with status 1.

#include <iostream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "bayesdens/commands.hpp"

namespace {

struct Flag {
  const char* key;
  const char* help;
};

constexpr Flag kFlags[] = {
    {"input", "input file (newline-delimited reals or single-header CSV)"},
    {"column", "CSV column to read"},
    {"kernel", "uniform | gaussian | yepanechnikov"},
    {"h", "bandwidth (default sd * n^-1/5)"},
    {"a", "Dirichlet concentration"},
    {"c", "local prior strength"},
    {"lambda", "generalized-Dirichlet smoothing weight"},
    {"delta", "roughness penalty d1 | d2 | dlog"},
    {"m", "expansion order (maximum order for sic)"},
    {"seed", "64-bit seed"},
    {"grid", "MIN:MAX:COUNT"},
    {"out", "CSV output path (default stdout)"},
    {"meta", "JSON metadata path"},
    {"report", "simulation report path (default stdout)"},
    {"base", "prior guess f0: fit | normal:MEAN:SD | uniform:LO:HI"},
    {"cells", "number of equal-width cells for binned estimators"},
    {"cuts", "control-set cut points, comma separated"},
    {"masses", "control-set masses, comma separated"},
    {"variant", "local variant: const | two-stage | slope | guess-times-const | altkernel | running-normal"},
    {"beta0", "slope prior mean"},
    {"w0", "slope prior precision root"},
    {"mu0", "running-normal prior mean"},
    {"tau", "prior scale (running-normal sd, log-linear shrinkage)"},
    {"sigma", "running-normal known sd"},
    {"basis", "log-linear basis: cosine | monomial"},
    {"prior", "log-linear coefficient prior: flat | shrink"},
    {"draws", "Monte Carlo draws of the global parameters"},
    {"coef-draws", "importance draws per parameter draw (hermite)"},
    {"lattice-points", "points per axis of the background lattice"},
    {"truth", "simulation truth: normal | skewed-mixture"},
    {"estimators", "simulation estimators, comma separated"},
    {"n", "simulation sample size"},
    {"R", "simulation replications"},
    {"threads", "simulation worker threads (0: all cores)"},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian and classical density estimators"};
  app.require_subcommand(1);
  app.set_help_flag("--help", "print this help and exit");

  std::map<std::string, std::map<std::string, std::string>> values;
  std::map<std::string, std::vector<std::pair<std::string, CLI::Option*>>> options;
  std::map<std::string, std::string> config_paths;

  for (const auto& name : bayesdens::cli::subcommands()) {
    CLI::App* sub = app.add_subcommand(name);
    sub->set_help_flag("--help", "print this help and exit");  // frees -h/--h for the bandwidth
    auto& store = values[name];
    for (const auto& flag : kFlags) {
      std::string key = flag.key;
      std::string names = "--" + key;
      if (key == "input" && name != "simulate") names = "input,--input";
      options[name].emplace_back(key, sub->add_option(names, store[key], flag.help));
    }
    sub->add_option("--config", config_paths[name], "key = value config file; flags override it");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  for (const auto* sub : app.get_subcommands()) {
    const std::string name = sub->get_name();
    try {
      std::vector<std::pair<std::string, std::string>> file_entries, flag_entries;
      if (!config_paths[name].empty()) file_entries = bayesdens::cli::read_config_file(config_paths[name]);
      for (const auto& [key, opt] : options[name]) {
        if (opt->count() > 0) flag_entries.emplace_back(key, values[name][key]);
      }
      const auto cfg = bayesdens::cli::make_config(name, file_entries, flag_entries);
      return bayesdens::cli::run(cfg, std::cout);
    } catch (const bayesdens::Error& e) {
      std::cerr << e.name() << ": " << e.what() << '\n';
      return 1;
    } catch (const std::exception& e) {
      std::cerr << "InternalError: " << e.what() << '\n';
      return 1;
    }
  }
  return 2;
}
