#ifndef MTOC_GRADCHECK_HPP
#define MTOC_GRADCHECK_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "common.hpp"

namespace mtoc {

enum class GradCheckTarget {
  LinearStructure,  // d linear objective / d B
  NonlinearCoeffs,  // d similarity-layer objective / d A (Tikhonov)
  NonlinearWidth,   // d similarity-layer objective / d theta
  SparseCoeffs,     // d sparse-group objective / d A
};

GradCheckTarget parse_gradcheck_target(const std::string& name);
const char* gradcheck_target_name(GradCheckTarget target);

struct GradCheckCase {
  uint64_t seed = 0;
  double rel_error = 0.0;
  double analytic_norm = 0.0;
  double numeric_norm = 0.0;
};

struct GradCheckReport {
  GradCheckTarget target = GradCheckTarget::LinearStructure;
  int requested = 0;
  int degenerate_redraws = 0;
  double max_rel_error = 0.0;
  double mean_rel_error = 0.0;
  std::vector<GradCheckCase> cases;
};

// Compares the analytic gradient against a central finite difference on
// random small instances. rel_error = |g_num - g|_F / max(|g|, |g_num|).
// Instances whose gradients are too small to compare are redrawn and
// counted in degenerate_redraws. The base form draws sizes n in [6,15],
// T in [2,4]; the sized form pins n, T, and the difference step h.
GradCheckReport gradient_check(GradCheckTarget target, int instances,
                               uint64_t seed);
GradCheckReport gradient_check_sized(GradCheckTarget target, int instances,
                                     int n, int task_count, uint64_t seed,
                                     double h);

}  // namespace mtoc

#endif
