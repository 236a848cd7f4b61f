#pragma once

// Central-difference gradient checking shared by the unit and acceptance
// suites.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fscd/diffcore.hpp"

namespace fscd::testing {

using LossBuilder = std::function<diff::Value(diff::Tape&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t entries = 0;
  std::string worst;  // "param[i]" of the largest error
};

// |analytic - numeric| / max(|analytic|, |numeric|, floor). `build` must
// rebuild the whole graph from the current parameter values.
GradCheckResult check_gradients(const std::vector<diff::Value>& params, const LossBuilder& build,
                                double h = 1e-5, double floor = 1e-6);

struct GradCase {
  std::string name;
  std::vector<diff::Value> params;
  LossBuilder build;
};

// One random configuration of every differentiable operation, plus the gated
// selection loss and the ungated fine-tuning loss of a small network. Inputs
// are kept away from kinks (relu at 0, clamp bounds) and from saturated gates.
std::vector<GradCase> gradient_cases(std::uint64_t seed);

}  // namespace fscd::testing
