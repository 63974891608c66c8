#include <iostream>

#include <CLI11.hpp>

#include <zmlab/cli.hpp>

int main(int argc, char** argv)
{
  CLI::App app{"zmlab: Pauli/Dirac zero-mode experiments"};
  app.require_subcommand(1);

  std::string config;
  auto* run = app.add_subcommand("run", "run the experiment described by a config file");
  run->add_option("config", config, "key = value config file")->required();

  std::string dir;
  auto* plots = app.add_subcommand("emit-plots", "write gnuplot scripts for the CSVs in a directory");
  plots->add_option("dir", dir, "result directory")->required();

  app.add_subcommand("list-experiments", "print the experiment names");

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) return zmlab::cli::run(config);
  if (plots->parsed()) {
    try {
      for (const auto& p : zmlab::cli::emit_plots(dir)) std::cout << p.string() << "\n";
    } catch (const std::exception& e) {
      std::cerr << "emit-plots: " << e.what() << "\n";
      return 1;
    }
    return 0;
  }
  for (const auto& e : zmlab::cli::experiments()) std::cout << e.name << "\t" << e.summary << "\n";
  return 0;
}
