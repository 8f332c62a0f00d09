#include <random>

#include "statt/model.hpp"
#include "statt/ops.hpp"
#include "statt/rng.hpp"

namespace statt {

Objective make_loss_objective(const ModelConfig& config, std::vector<LabeledPatch<double>> batch, std::string fault_op,
                              double fault_factor) {
  return [config, batch = std::move(batch), fault_op = std::move(fault_op), fault_factor](
             const ParamSet<double>& params, ParamSet<double>* grads) {
    Graph<double> g;
    if (!fault_op.empty()) g.inject_backward_fault(fault_op, fault_factor);
    BoundParams<double> bound(g, params);
    std::vector<Var<double>> probs;
    std::vector<std::span<const std::uint8_t>> labels;
    for (const auto& patch : batch) {
      probs.push_back(statt_forward(g.constant(patch.x), bound, config).probs);
      labels.emplace_back(patch.y);
    }
    Var<double> loss = cross_entropy_loss<double>(probs, labels);
    if (grads) {
      g.backward(loss);
      *grads = bound.gradients(params);
    }
    return Evaluation(loss.value()[0], g.branch_signature());
  };
}

std::vector<LabeledPatch<double>> random_batch(const ModelConfig& config, std::size_t count, std::uint64_t seed) {
  std::vector<LabeledPatch<double>> batch;
  for (std::size_t n = 0; n < count; ++n) {
    std::mt19937_64 rng(derive_seed(seed, n));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_int_distribution<int> cls(0, static_cast<int>(config.classes) - 1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    LabeledPatch<double> p;
    p.x = Tensor<double>({config.steps, config.channels, config.in_size, config.in_size});
    for (double& v : p.x.values()) v = normal(rng);
    p.y.resize(config.out_size * config.out_size);
    for (auto& l : p.y) l = u(rng) < 0.1 ? 255 : static_cast<std::uint8_t>(cls(rng));
    if (ops::count_labeled(p.y) == 0) p.y[0] = 0;
    batch.push_back(std::move(p));
  }
  return batch;
}

}  // namespace statt
