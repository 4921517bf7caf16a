#pragma once

#include <string>
#include <vector>

namespace zsbir {

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

// Analytic-vs-central-difference checks over every op, layer, flow step,
// loss term, and the full combined generator objective at desk dimensions
// (feature 16, attr 8, latent 4, T = 3). `include_mutation` adds a
// deliberately corrupted backward rule that the harness must flag.
std::vector<GradCheckEntry> run_gradcheck_suite(bool include_mutation = false);

bool gradcheck_all_pass(const std::vector<GradCheckEntry>& entries);

}  // namespace zsbir
