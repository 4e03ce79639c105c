#include <algorithm>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <vector>

#include "criteria.hpp"

using namespace weedid::acceptance;

int main(int argc, char** argv) {
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "gradient correctness", gradient_correctness},
      {2, "pretrain-then-finetune gain", pretraining_gain},
      {3, "k-shot monotonicity", kshot_monotonicity},
      {4, "conformal coverage", conformal_coverage},
      {5, "OOD separation", ood_separation},
      {6, "metric oracle equivalence", metric_oracles},
      {7, "attribution fidelity", attribution_fidelity},
      {8, "grouping bound", grouping_bound},
      {9, "downloader fault tolerance", downloader_fault_tolerance},
      {10, "serving contract", serving_contract},
      {11, "CLI determinism", cli_determinism},
  };
  // Optional arguments select criteria by number.
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    Stopwatch clock;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  [" << c.id << "] " << c.name << " (" << fmt(clock.seconds(), 1)
              << " s): " << o.detail << std::endl;
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
