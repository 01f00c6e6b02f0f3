#include <chrono>
#include <cstdio>
#include <vector>

#include "dmpc/cli.hpp"
#include "dmpc/config.hpp"
#include "dmpc/parallel.hpp"
#include "dmpc/sim.hpp"

namespace {

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now() - t0)
      .count();
}

}  // namespace

int main() {
  using dmpc::parallel_for;

  std::printf("openmp: %s\n", dmpc::openmp_enabled() ? "on" : "off");

  // Terminal-region validation kernel, serial vs parallel.
  const dmpc::Prepared prep = dmpc::prepare(dmpc::builtin_sec5());
  const dmpc::PreparedAgent& pa = prep.agents.front();
  const int samples = 40000;

  auto t0 = std::chrono::steady_clock::now();
  const dmpc::ValidationReport serial = dmpc::validate_terminal_region(
      pa.model, pa.ing, pa.ur0, pa.cfg.U, samples, false);
  const double t_serial = ms_since(t0);

  t0 = std::chrono::steady_clock::now();
  const dmpc::ValidationReport parallel = dmpc::validate_terminal_region(
      pa.model, pa.ing, pa.ur0, pa.cfg.U, samples, true);
  const double t_parallel = ms_since(t0);

  if (serial.issues.size() != parallel.issues.size()) {
    std::printf("validation mismatch: serial %zu parallel %zu\n",
                serial.issues.size(), parallel.issues.size());
    return 1;
  }
  std::printf("terminal validation (%d samples): serial %.1f ms, parallel %.1f ms, speedup %.2fx\n",
              samples, t_serial, t_parallel, t_serial / t_parallel);

  // Multi-seed sweep with the property-suite experiment.
  dmpc::ExperimentConfig base = dmpc::builtin_suite();
  base.steps = 30;
  const int seeds = 8;

  std::vector<long> checks_serial(seeds), checks_parallel(seeds);
  auto sweep_one = [&](int s, std::vector<long>& out) {
    const dmpc::Prepared p =
        dmpc::prepare(dmpc::suite_instance(base, static_cast<std::uint64_t>(s + 1)));
    const dmpc::RunReport r = dmpc::run(p, nullptr);
    long checks = 0;
    for (const dmpc::AgentReport& ar : r.agents)
      for (const auto& [name, tally] : ar.hooks) checks += tally.checks;
    out[static_cast<std::size_t>(s)] = checks;
  };

  t0 = std::chrono::steady_clock::now();
  for (int s = 0; s < seeds; ++s) sweep_one(s, checks_serial);
  const double sweep_serial = ms_since(t0);

  t0 = std::chrono::steady_clock::now();
  parallel_for(seeds, [&](std::int64_t s) {
    sweep_one(static_cast<int>(s), checks_parallel);
  });
  const double sweep_parallel = ms_since(t0);

  if (checks_serial != checks_parallel) {
    std::printf("sweep mismatch between serial and parallel runs\n");
    return 1;
  }
  std::printf("suite sweep (%d seeds, %d steps): serial %.1f ms, parallel %.1f ms, speedup %.2fx\n",
              seeds, base.steps, sweep_serial, sweep_parallel,
              sweep_serial / sweep_parallel);
  return 0;
}
