#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "harmap/harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"proper harmonic plane maps: certified lemma steps, end iterations, exports"};
  app.require_subcommand(1);

  struct Sub {
    CLI::App* cmd = nullptr;
    std::string config;
    std::string out;
    int depth = 0;
    int grid = 0;
  };
  const std::vector<std::pair<const char*, const char*>> modes = {
      {"lemma-step", "run one certified approximation step on a ring"},
      {"build-proper", "iterate the schedule over the configured ends"},
      {"corollary2", "build a proper map for circles and punctures"},
      {"verify", "re-check a stored run report"},
      {"export", "sample a configured map over curves"},
  };
  std::vector<Sub> subs(modes.size());
  for (std::size_t i = 0; i < modes.size(); ++i) {
    Sub& s = subs[i];
    s.cmd = app.add_subcommand(modes[i].first, modes[i].second);
    s.cmd->add_option("--config", s.config, "config file path")->required();
    s.cmd->add_option("--out", s.out, "output directory")->required();
    s.cmd->add_option("--depth", s.depth, "override budgets.K");
    s.cmd->add_option("--grid", s.grid, "override grid.curve_samples");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 4;
  }

  for (std::size_t i = 0; i < modes.size(); ++i)
    if (subs[i].cmd->parsed()) {
      harmap::CliOverrides ov;
      ov.depth = subs[i].depth;
      ov.grid = subs[i].grid;
      return harmap::run_mode(subs[i].config, subs[i].out, modes[i].first, ov, std::cerr);
    }
  return 4;
}
