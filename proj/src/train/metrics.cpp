#include "statt/errors.hpp"
#include "statt/parallel.hpp"
#include "statt/train.hpp"

namespace statt {

using nlohmann::json;

void accumulate_confusion(std::span<const float> probs, std::span<const std::uint8_t> labels, std::size_t classes,
                          std::vector<std::vector<std::uint64_t>>& confusion) {
  const std::size_t pixels = labels.size();
  if (probs.size() != classes * pixels) throw DimensionError("accumulate_confusion: probs must be [L, P]");
  for (std::size_t p = 0; p < pixels; ++p) {
    const std::uint8_t truth = labels[p];
    if (truth == kIgnore) continue;
    if (truth >= classes) throw ContractError("accumulate_confusion: label " + std::to_string(truth) + " >= L");
    std::size_t best = 0;
    for (std::size_t l = 1; l < classes; ++l)
      if (probs[l * pixels + p] > probs[best * pixels + p]) best = l;
    ++confusion[truth][best];
  }
}

Metrics metrics_from_confusion(std::vector<std::vector<std::uint64_t>> confusion,
                               const std::vector<std::string>& class_names) {
  const std::size_t L = class_names.size();
  Metrics m;
  m.confusion = std::move(confusion);
  double sum = 0;
  std::size_t included = 0;
  for (std::size_t k = 0; k < L; ++k) {
    std::uint64_t tp = m.confusion[k][k], fp = 0, fn = 0, count = 0;
    for (std::size_t j = 0; j < L; ++j) {
      count += m.confusion[k][j];
      if (j != k) {
        fn += m.confusion[k][j];
        fp += m.confusion[j][k];
      }
    }
    ClassScore s;
    s.name = class_names[k];
    s.count = count;
    s.included = tp + fp + fn > 0;
    if (s.included) {
      s.f1 = 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
      sum += s.f1;
      ++included;
    }
    m.classes.push_back(s);
  }
  m.mean_f1 = included ? sum / static_cast<double>(included) : 0.0;
  return m;
}

json to_json(const Metrics& m) {
  json classes = json::array();
  for (const auto& c : m.classes) {
    classes.push_back({{"name", c.name},
                       {"count", c.count},
                       {"f1", c.included ? json(c.f1) : json(nullptr)},
                       {"included_in_mean", c.included}});
  }
  return {{"confusion", m.confusion}, {"classes", classes}, {"mean_f1", m.mean_f1}};
}

Metrics evaluate(const ModelParams<float>& params, const ModelConfig& config, const std::vector<Patch>& patches,
                 const std::vector<std::string>& class_names, std::size_t threads) {
  const std::size_t L = class_names.size();
  if (L != config.classes) throw ConfigError("/classes", "dataset has " + std::to_string(L) + " classes, model " +
                                                             std::to_string(config.classes));
  if (threads == 0) threads = worker_count();
  using Matrix = std::vector<std::vector<std::uint64_t>>;
  std::vector<Matrix> partial(std::max<std::size_t>(1, std::min(threads, patches.size())),
                              Matrix(L, std::vector<std::uint64_t>(L, 0)));
  parallel_for(patches.size(), partial.size(), [&](std::size_t i, std::size_t w) {
    const Prediction<float> pred = predict(params, config, patches[i].x);
    accumulate_confusion(pred.probs.values(), patches[i].y, L, partial[w]);
  });
  Matrix total(L, std::vector<std::uint64_t>(L, 0));
  for (const auto& m : partial)
    for (std::size_t a = 0; a < L; ++a)
      for (std::size_t b = 0; b < L; ++b) total[a][b] += m[a][b];
  return metrics_from_confusion(std::move(total), class_names);
}

AttentionProfile attention_profile(const ModelParams<float>& params, const ModelConfig& config,
                                   const std::vector<Patch>& patches, std::size_t classes, std::size_t threads) {
  if (config.mode != AggregationMode::attention) {
    throw ContractError("attention_profile: mean-mode models have constant weights 1/T");
  }
  if (patches.empty()) throw ContractError("attention_profile: no patches");
  if (threads == 0) threads = worker_count();
  const std::size_t T = config.steps;
  std::vector<std::vector<double>> alphas(patches.size());
  std::vector<std::size_t> majority(patches.size());
  parallel_for(patches.size(), threads, [&](std::size_t i, std::size_t) {
    const Prediction<float> pred = predict(params, config, patches[i].x);
    alphas[i].assign(pred.alpha.values().begin(), pred.alpha.values().end());
    std::vector<std::size_t> counts(classes, 0);
    for (auto l : patches[i].y)
      if (l != kIgnore && l < classes) ++counts[l];
    majority[i] = static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
  });
  AttentionProfile prof;
  prof.patches = patches.size();
  prof.mean.assign(T, 0.0);
  prof.per_class.assign(classes, {});
  prof.class_patches.assign(classes, 0);
  std::vector<std::vector<double>> sums(classes, std::vector<double>(T, 0.0));
  for (std::size_t i = 0; i < patches.size(); ++i) {
    for (std::size_t t = 0; t < T; ++t) {
      prof.mean[t] += alphas[i][t];
      sums[majority[i]][t] += alphas[i][t];
    }
    ++prof.class_patches[majority[i]];
  }
  for (double& v : prof.mean) v /= static_cast<double>(patches.size());
  for (std::size_t l = 0; l < classes; ++l) {
    if (prof.class_patches[l] == 0) continue;
    prof.per_class[l] = sums[l];
    for (double& v : prof.per_class[l]) v /= static_cast<double>(prof.class_patches[l]);
  }
  return prof;
}

}  // namespace statt
