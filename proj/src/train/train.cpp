#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "statt/errors.hpp"
#include "statt/json_util.hpp"
#include "statt/ops.hpp"
#include "statt/parallel.hpp"
#include "statt/rng.hpp"
#include "statt/train.hpp"

namespace statt {

using nlohmann::json;

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("/epochs", "must be >= 1");
  if (batch_size < 1) throw ConfigError("/batch_size", "must be >= 1");
  if (!(learning_rate > 0) || !std::isfinite(learning_rate)) throw ConfigError("/learning_rate", "must be > 0");
  if (!(beta1 >= 0 && beta1 < 1)) throw ConfigError("/beta1", "must lie in [0, 1)");
  if (!(beta2 >= 0 && beta2 < 1)) throw ConfigError("/beta2", "must lie in [0, 1)");
  if (!(epsilon > 0)) throw ConfigError("/epsilon", "must be > 0");
}

json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},       {"batch_size", c.batch_size}, {"learning_rate", c.learning_rate},
          {"beta1", c.beta1},         {"beta2", c.beta2},           {"epsilon", c.epsilon},
          {"seed", c.seed},           {"mode", to_string(c.mode)},  {"patience", c.patience},
          {"threads", c.threads}};
}

TrainConfig train_config_from_json(const json& j, const std::string& path) {
  json_util::ObjectReader r(j, path);
  r.reject_unknown(
      {"epochs", "batch_size", "learning_rate", "beta1", "beta2", "epsilon", "seed", "mode", "patience", "threads"});
  TrainConfig c;
  c.epochs = r.get("epochs", c.epochs);
  c.batch_size = r.get("batch_size", c.batch_size);
  c.learning_rate = r.get("learning_rate", c.learning_rate);
  c.beta1 = r.get("beta1", c.beta1);
  c.beta2 = r.get("beta2", c.beta2);
  c.epsilon = r.get("epsilon", c.epsilon);
  c.seed = r.get("seed", c.seed);
  const auto mode = r.get<std::string>("mode", to_string(c.mode));
  if (mode != "attention" && mode != "mean") throw ConfigError(r.field("mode"), "expected 'attention' or 'mean'");
  c.mode = parse_aggregation_mode(mode);
  c.patience = r.get("patience", c.patience);
  c.threads = r.get("threads", c.threads);
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(path + e.field(), e.what());
  }
  return c;
}

void adam_step(ModelParams<float>& params, const ModelParams<float>& grads, AdamState& state,
               const TrainConfig& config) {
  if (grads.size() != params.size()) throw ContractError("adam_step: gradient set does not match parameters");
  if (state.m.empty()) {
    for (const auto& e : params) {
      state.m.emplace_back(e.value.shape(), 0.0f);
      state.v.emplace_back(e.value.shape(), 0.0f);
    }
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!grads[i].value.all_finite()) throw NumericalError("adam_step: non-finite gradient for " + grads[i].name);
  }
  ++state.step;
  const double b1 = config.beta1, b2 = config.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    float* p = params[i].value.data();
    const float* g = grads[i].value.data();
    float* m = state.m[i].data();
    float* v = state.v[i].data();
    for (std::size_t k = 0; k < params[i].value.size(); ++k) {
      m[k] = static_cast<float>(b1 * m[k] + (1 - b1) * g[k]);
      v[k] = static_cast<float>(b2 * v[k] + (1 - b2) * static_cast<double>(g[k]) * g[k]);
      const double mh = m[k] / c1, vh = v[k] / c2;
      p[k] = static_cast<float>(p[k] - config.learning_rate * mh / (std::sqrt(vh) + config.epsilon));
    }
  }
}

namespace {

struct PatchGradient {
  ModelParams<float> grads;
  double loss = 0;
};

PatchGradient patch_gradient(const ModelParams<float>& params, const ModelConfig& config, const Patch& patch,
                             float normalizer) {
  Graph<float> g;
  BoundParams<float> bound(g, params);
  ForwardTrace<float> trace = statt_forward(g.constant(patch.x), bound, config);
  Var<float> loss = ops::cross_entropy(trace.probs, std::span<const std::uint8_t>(patch.y), normalizer);
  g.backward(loss);
  return {bound.gradients(params), loss.value()[0]};
}

}  // namespace

TrainResult train(const ModelConfig& model, const ModelParams<float>& init, const std::vector<Patch>& train_patches,
                  const std::vector<Patch>& val_patches, const std::vector<std::string>& class_names,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (train_patches.empty()) throw ConfigError("/train", "train split has no patches");
  if (val_patches.empty()) throw ConfigError("/val", "validation split has no patches");
  ModelConfig cfg = model;
  cfg.mode = config.mode;
  cfg.validate();
  const std::size_t threads = config.threads ? config.threads : worker_count();

  ModelParams<float> params = init;
  AdamState adam;
  TrainResult result;
  std::size_t since_best = 0;
  std::vector<std::size_t> order(train_patches.size());

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(derive_seed(config.seed, epoch));
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0;
    std::size_t pixel_sum = 0;
    std::size_t batch_index = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += config.batch_size, ++batch_index) {
      const std::size_t b1 = std::min(order.size(), b0 + config.batch_size);
      std::size_t labeled = 0;
      for (std::size_t i = b0; i < b1; ++i) labeled += ops::count_labeled(train_patches[order[i]].y);
      if (labeled == 0) continue;
      std::vector<PatchGradient> parts(b1 - b0);
      try {
        parallel_for(parts.size(), threads, [&](std::size_t i, std::size_t) {
          parts[i] = patch_gradient(params, cfg, train_patches[order[b0 + i]], static_cast<float>(labeled));
        });
      } catch (const NumericalError& e) {
        throw NumericalError("epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch_index) + ": " +
                             e.what());
      }
      // Fixed-order reduction keeps the sum independent of scheduling.
      ModelParams<float> grads = std::move(parts[0].grads);
      double batch_loss = parts[0].loss;
      for (std::size_t i = 1; i < parts.size(); ++i) {
        batch_loss += parts[i].loss;
        for (std::size_t k = 0; k < grads.size(); ++k) {
          float* dst = grads[k].value.data();
          const float* src = parts[i].grads[k].value.data();
          for (std::size_t q = 0; q < grads[k].value.size(); ++q) dst[q] += src[q];
        }
      }
      if (!std::isfinite(batch_loss)) {
        throw NumericalError("epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch_index) +
                             ": non-finite loss");
      }
      try {
        adam_step(params, grads, adam, config);
      } catch (const NumericalError& e) {
        throw NumericalError("epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch_index) + ": " +
                             e.what());
      }
      loss_sum += batch_loss * static_cast<double>(labeled);
      pixel_sum += labeled;
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = pixel_sum ? loss_sum / static_cast<double>(pixel_sum) : 0.0;
    rec.val_mean_f1 = evaluate(params, cfg, val_patches, class_names, threads).mean_f1;
    rec.seconds = seconds;
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (rec.val_mean_f1 > result.best_val_mean_f1) {
      result.best_val_mean_f1 = rec.val_mean_f1;
      result.best_epoch = epoch;
      result.best_params = params;
      since_best = 0;
    } else if (config.patience > 0 && ++since_best >= config.patience) {
      break;
    }
  }
  return result;
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::string out = "epoch,train_loss,val_mean_f1\n";
  char line[96];
  for (const auto& r : history) {
    std::snprintf(line, sizeof line, "%zu,%.9g,%.9g\n", r.epoch, r.train_loss, r.val_mean_f1);
    out += line;
  }
  return out;
}

}  // namespace statt
