#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "statt/data.hpp"
#include "statt/model.hpp"

namespace statt {

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  AggregationMode mode = AggregationMode::attention;  // overrides the model config's mode
  std::size_t patience = 0;                           // epochs without val improvement; 0 disables
  std::size_t threads = 0;                            // 0: worker_count()

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j, const std::string& path = "");

struct AdamState {
  std::vector<Tensor<float>> m, v;
  std::uint64_t step = 0;
};

/// One Adam update with bias correction. State moments are created on first
/// use. Throws NumericalError naming the parameter on a non-finite gradient.
void adam_step(ModelParams<float>& params, const ModelParams<float>& grads, AdamState& state,
               const TrainConfig& config);

struct ClassScore {
  std::string name;
  std::uint64_t count = 0;  // labeled pixels of this class in the truth
  double f1 = 0;
  bool included = false;    // false when TP + FP + FN = 0
};

struct Metrics {
  std::vector<std::vector<std::uint64_t>> confusion;  // [truth][prediction]
  std::vector<ClassScore> classes;
  double mean_f1 = 0;
};

/// Scores from a confusion matrix. Classes with TP + FP + FN = 0 are left
/// out of the unweighted mean.
Metrics metrics_from_confusion(std::vector<std::vector<std::uint64_t>> confusion,
                               const std::vector<std::string>& class_names);

/// Adds the non-ignored pixels of one prediction to `confusion`. `probs` is
/// [L, P]; the predicted class is the argmax, lowest id on ties.
void accumulate_confusion(std::span<const float> probs, std::span<const std::uint8_t> labels, std::size_t classes,
                          std::vector<std::vector<std::uint64_t>>& confusion);

nlohmann::json to_json(const Metrics& metrics);

Metrics evaluate(const ModelParams<float>& params, const ModelConfig& config, const std::vector<Patch>& patches,
                 const std::vector<std::string>& class_names, std::size_t threads = 0);

struct AttentionProfile {
  std::vector<double> mean;                      // per time step
  std::vector<std::vector<double>> per_class;    // [class][t]; empty when no patch has that majority class
  std::vector<std::size_t> class_patches;        // patches per majority class
  std::size_t patches = 0;
};

/// Averages alpha over the patches, overall and per majority label class.
/// Throws ContractError for mean-mode configurations.
AttentionProfile attention_profile(const ModelParams<float>& params, const ModelConfig& config,
                                   const std::vector<Patch>& patches, std::size_t classes, std::size_t threads = 0);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0;
  double val_mean_f1 = 0;
  double seconds = 0;
};

struct TrainResult {
  ModelParams<float> best_params;
  std::size_t best_epoch = 0;
  double best_val_mean_f1 = -1;
  std::vector<EpochRecord> history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mini-batch Adam on the train patches with model selection by validation
/// mean F1. Per-patch gradients are summed in batch order, so results do
/// not depend on the thread count.
TrainResult train(const ModelConfig& model, const ModelParams<float>& init, const std::vector<Patch>& train_patches,
                  const std::vector<Patch>& val_patches, const std::vector<std::string>& class_names,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

/// epoch,train_loss,val_mean_f1
std::string history_csv(const std::vector<EpochRecord>& history);

struct SweepRow {
  double fraction = 0;
  AggregationMode mode = AggregationMode::attention;
  Metrics metrics;
  std::vector<std::size_t> noisy_steps;
  std::vector<double> alpha_profile;  // test split, attention mode only
  std::size_t best_epoch = 0;
  double train_seconds = 0;           // wall clock, not part of the csv
};

/// For each fraction: rebuild the scene with that noise fraction, train
/// both aggregation modes from the same initialization and score the test
/// split. `seed` drives the scene, the noise and the training.
std::vector<SweepRow> noise_sweep(const ModelConfig& model, const TrainConfig& train_config, const GenConfig& scene,
                                  const std::vector<double>& fractions, std::uint64_t seed,
                                  const std::function<void(const std::string&)>& log = {});

/// fraction,mode,mean_f1,<class>_f1...
std::string sweep_csv(const std::vector<SweepRow>& rows, const std::vector<std::string>& class_names);

}  // namespace statt
