#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "dmpc/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"self-triggered distributed MPC with synchronized path tracking"};
  app.require_subcommand(1);

  dmpc::RunOptions opt;
  std::string trace_path = "out/events.csv";
  std::string plot_dir = "out/plots";

  auto add_selection = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "experiment config file");
    sub->add_option("--fixture", opt.fixture,
                    "built-in experiment: sec5, sec5-paper-gains, suite");
    sub->add_option("--eta", opt.eta, "override the disturbance bound");
  };

  CLI::App* run = app.add_subcommand("run", "simulate and write traces");
  add_selection(run);
  run->add_option("--steps", opt.steps, "number of simulation steps");
  run->add_option("--seed", opt.seed, "disturbance seed");
  run->add_flag("--strict", opt.strict, "abort on the first hook violation");
  run->add_option("--out-dir", opt.out_dir, "output directory");

  CLI::App* verify =
      app.add_subcommand("verify", "check offline design conditions");
  add_selection(verify);

  CLI::App* plot =
      app.add_subcommand("plotdata", "derive plot tables from a trace");
  plot->add_option("--trace", trace_path, "merged events file");
  plot->add_option("--out-dir", plot_dir, "output directory");

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) return dmpc::cmd_run(opt, std::cout, std::cerr);
  if (verify->parsed()) return dmpc::cmd_verify(opt, std::cout, std::cerr);
  return dmpc::cmd_plotdata(trace_path, plot_dir, std::cout, std::cerr);
}
