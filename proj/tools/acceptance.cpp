#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "pricecoord/acceptance.hpp"

using namespace pricecoord;

// usage: acceptance [scratch_dir] [--known-failing id,id,...]
// Known-failing criteria still print their FAIL line but do not set the exit
// code.
int main(int argc, char** argv) {
  std::string scratch = (std::filesystem::temp_directory_path() / "pricecoord-acceptance").string();
  std::set<std::string> known_failing;
  for (int a = 1; a < argc; ++a) {
    const std::string arg = argv[a];
    if (arg == "--known-failing" && a + 1 < argc) {
      std::stringstream ids(argv[++a]);
      for (std::string id; std::getline(ids, id, ',');) known_failing.insert(id);
    } else {
      scratch = arg;
    }
  }
  const std::vector<std::function<CheckResult()>> checks{
      [] { return check_gradient_fidelity(20, 0); },
      [] { return check_unbiased_estimator(0); },
      [] { return check_scalar_closed_form(); },
      [] { return check_dense_active_set(100, 0); },
      [] { return check_scenario_kkt(0); },
      [] { return check_hvac_closed_form(1000, 0); },
      [] { return check_schedule_simulation(0); },
      [] { return check_desk_scale_optimality(10); },
      [] { return check_load_shaping(5); },
      [] { return check_runtime_envelope(900.0); },
      [&] { return check_determinism(scratch); },
  };
  int failed = 0;
  int tolerated = 0;
  for (const auto& run : checks) {
    CheckResult c;
    try {
      c = run();
    } catch (const std::exception& e) {
      c.name = "check raised";
      c.detail = e.what();
    }
    std::cout << format_check(c) << std::endl;
    if (c.pass) continue;
    if (known_failing.count(c.id) != 0) {
      ++tolerated;
    } else {
      ++failed;
    }
  }
  std::cout << (failed == 0 ? "no unexpected acceptance failures" : std::to_string(failed) + " acceptance checks failed");
  if (tolerated > 0) std::cout << ", " << tolerated << " known-failing criteria failed";
  std::cout << std::endl;
  return failed == 0 ? EXIT_SUCCESS : EXIT_FAILURE;
}
