#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace gaclab::gradcheck {

struct OpResult {
  std::string op;
  double max_err = 0.0;
  int configs = 0;
};

// Central finite-difference verification of every layer and loss gradient,
// `configs_per_op` seeded configurations each. Configurations that land
// within a margin of an activation or |.| kink are re-drawn, since finite
// differences are only meaningful where the graph is differentiable.
std::vector<OpResult> run_suite(double eps, int configs_per_op, std::uint64_t seed);

// Largest error across the suite.
double suite_max_error(const std::vector<OpResult>& results);

}  // namespace gaclab::gradcheck
