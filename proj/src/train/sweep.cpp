#include <chrono>
#include <cstdio>

#include "statt/errors.hpp"
#include "statt/parallel.hpp"
#include "statt/train.hpp"

namespace statt {

std::vector<SweepRow> noise_sweep(const ModelConfig& model, const TrainConfig& train_config, const GenConfig& scene,
                                  const std::vector<double>& fractions, std::uint64_t seed,
                                  const std::function<void(const std::string&)>& log) {
  if (fractions.empty()) throw ConfigError("/fractions", "at least one fraction is required");
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    if (!(fractions[i] >= 0 && fractions[i] <= 0.5)) {
      throw ConfigError("/fractions/" + std::to_string(i), "must lie in [0, 0.5]");
    }
  }
  TrainConfig tc = train_config;
  tc.seed = seed;
  const ModelParams<float> init = init_params<float>(model, seed);
  std::vector<SweepRow> rows;
  for (double fraction : fractions) {
    GenConfig g = scene;
    g.scene.seed = seed;
    g.noise_fraction = fraction;
    const SceneDataset data = build_dataset(g);
    const auto train_p = extract_patches(data, Split::train, model.in_size, model.out_size);
    const auto val_p = extract_patches(data, Split::val, model.in_size, model.out_size);
    const auto test_p = extract_patches(data, Split::test, model.in_size, model.out_size);
    for (AggregationMode mode : {AggregationMode::attention, AggregationMode::mean}) {
      tc.mode = mode;
      ModelConfig mc = model;
      mc.mode = mode;
      const auto start = std::chrono::steady_clock::now();
      TrainResult r = train(mc, init, train_p, val_p, data.class_names, tc);
      SweepRow row;
      row.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      row.best_epoch = r.best_epoch;
      row.fraction = fraction;
      row.mode = mode;
      row.noisy_steps = data.noisy_steps;
      row.metrics = evaluate(r.best_params, mc, test_p, data.class_names, tc.threads);
      if (mode == AggregationMode::attention) {
        row.alpha_profile = attention_profile(r.best_params, mc, test_p, data.class_count(), tc.threads).mean;
      }
      if (log) {
        char line[160];
        std::snprintf(line, sizeof line, "fraction %.3g %s: test mean F1 %.4f (best epoch %zu)", fraction,
                      to_string(mode).c_str(), row.metrics.mean_f1, r.best_epoch);
        log(line);
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows, const std::vector<std::string>& class_names) {
  std::string out = "fraction,mode,mean_f1";
  for (const auto& n : class_names) out += "," + n + "_f1";
  out += "\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.6g,%s,%.6f", r.fraction, to_string(r.mode).c_str(), r.metrics.mean_f1);
    out += buf;
    for (const auto& c : r.metrics.classes) {
      if (c.included) {
        std::snprintf(buf, sizeof buf, ",%.6f", c.f1);
        out += buf;
      } else {
        out += ",";
      }
    }
    out += "\n";
  }
  return out;
}

}  // namespace statt
