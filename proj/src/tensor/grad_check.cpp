#include "statt/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace statt {
namespace {

std::string prefix_group(const std::string& name) { return name.substr(0, name.find('.')); }

}  // namespace

GradCheckResult grad_check(const Objective& f, const ParamSet<double>& params, double eps, std::size_t samples,
                           std::uint64_t seed, const GroupFn& group_of) {
  if (!(eps > 0)) throw ContractError("grad_check: eps must be positive");
  if (samples == 0) throw ContractError("grad_check: samples must be >= 1");
  if (params.element_count() == 0) throw ContractError("grad_check: no parameters");

  ParamSet<double> analytic = params.zeros_like();
  const Evaluation base = f(params, &analytic);
  if (!std::isfinite(base.value)) throw NumericalError("grad_check: objective is non-finite at the unperturbed point");

  // Groups in order of first appearance; each lists (tensor index, size).
  std::vector<std::string> group_names;
  std::vector<std::vector<std::size_t>> group_tensors;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string g = group_of ? group_of(params[i].name) : prefix_group(params[i].name);
    auto it = std::find(group_names.begin(), group_names.end(), g);
    if (it == group_names.end()) {
      group_names.push_back(g);
      group_tensors.emplace_back();
      it = group_names.end() - 1;
    }
    group_tensors[static_cast<std::size_t>(it - group_names.begin())].push_back(i);
  }

  std::mt19937_64 rng(seed);
  ParamSet<double> probe = params;
  GradCheckResult result;
  constexpr int kMaxRedraws = 50;
  for (std::size_t s = 0; s < samples; ++s) {
    const std::size_t gi = s % group_names.size();
    const auto& members = group_tensors[gi];
    std::size_t total = 0;
    for (std::size_t ti : members) total += params[ti].value.size();
    std::size_t ti = members.front(), pick = 0;
    double up = 0, down = 0;
    for (int attempt = 0;; ++attempt) {
      pick = std::uniform_int_distribution<std::size_t>(0, total - 1)(rng);
      for (std::size_t m : members) {
        if (pick < params[m].value.size()) {
          ti = m;
          break;
        }
        pick -= params[m].value.size();
      }
      double& slot = probe[ti].value[pick];
      const double original = slot;
      slot = original + eps;
      const Evaluation eu = f(probe, nullptr);
      slot = original - eps;
      const Evaluation ed = f(probe, nullptr);
      slot = original;
      if (!std::isfinite(eu.value) || !std::isfinite(ed.value)) {
        throw NumericalError("grad_check: objective is non-finite when perturbing " + params[ti].name + "[" +
                             std::to_string(pick) + "]");
      }
      up = eu.value;
      down = ed.value;
      if ((eu.branches == base.branches && ed.branches == base.branches) || attempt == kMaxRedraws) break;
      ++result.redraws;
    }
    const std::string& name = params[ti].name;
    GradCheckSample sample;
    sample.param = name;
    sample.index = pick;
    sample.analytic = analytic[ti].value[pick];
    sample.numeric = (up - down) / (2 * eps);
    const double denom = std::max({std::abs(sample.analytic), std::abs(sample.numeric), 1e-8});
    sample.relative_error = std::abs(sample.analytic - sample.numeric) / denom;
    result.max_relative_error = std::max(result.max_relative_error, sample.relative_error);
    double& gm = result.group_max[group_names[gi]];
    gm = std::max(gm, sample.relative_error);
    result.samples.push_back(std::move(sample));
  }
  return result;
}

}  // namespace statt
