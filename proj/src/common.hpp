#ifndef MTOC_COMMON_HPP
#define MTOC_COMMON_HPP

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace mtoc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// One backtracking event inside a training loop. `block` identifies the
// parameter block being stepped ('A', 'B', or 'T' for the width theta).
struct StepAdjustment {
  int iteration = 0;
  char block = '?';
  double eta = 0.0;
  int halvings = 0;
  bool accepted = true;
};

struct TrainingTrace {
  std::vector<double> objective;  // value per accepted outer iteration, [0] = initial
  std::vector<StepAdjustment> steps;
  std::vector<std::string> warnings;
  int iterations = 0;
  bool converged = false;

  void warn(const std::string& message) { warnings.push_back(message); }
};

}  // namespace mtoc

#endif
