#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "statt/param_set.hpp"

namespace statt {

/// Objective value plus the branch signature of the evaluation (0 for
/// smooth objectives).
struct Evaluation {
  Evaluation(double v, std::uint64_t b = 0) : value(v), branches(b) {}
  double value;
  std::uint64_t branches;
};

/// Evaluates a scalar objective at `params`. When `grads` is non-null it
/// also writes the analytic gradient (same names and shapes as params).
using Objective = std::function<Evaluation(const ParamSet<double>& params, ParamSet<double>* grads)>;

/// Maps a parameter name to the group it is reported under.
using GroupFn = std::function<std::string(const std::string&)>;

struct GradCheckSample {
  std::string param;
  std::size_t index = 0;
  double analytic = 0;
  double numeric = 0;
  double relative_error = 0;
};

struct GradCheckResult {
  double max_relative_error = 0;
  std::vector<GradCheckSample> samples;
  std::map<std::string, double> group_max;  // per group, max relative error
  std::size_t redraws = 0;  // picks whose stencil crossed a kink
};

/// Central-difference check of `samples` randomly chosen scalar parameters.
/// Samples are spread round-robin over the groups produced by `group_of`
/// (default: the name up to its first '.'), so every group is exercised.
/// Relative error uses max(|analytic|, |numeric|, 1e-8) as denominator.
/// A pick whose stencil p-eps, p, p+eps does not share one branch signature
/// straddles a relu or maxpool switch, where the central difference is not
/// a derivative; it is redrawn from the same group (up to 50 times, after
/// which the last pick is scored anyway).
GradCheckResult grad_check(const Objective& f, const ParamSet<double>& params, double eps, std::size_t samples,
                           std::uint64_t seed, const GroupFn& group_of = {});

}  // namespace statt
