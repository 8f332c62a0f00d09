#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "statt/errors.hpp"
#include "statt/ops.hpp"
#include "statt/train.hpp"

using namespace statt;

namespace {

ModelConfig small_model() {
  ModelConfig c = ModelConfig::tiny();
  c.steps = 12;
  c.channels = 4;
  c.classes = 4;
  return c;
}

GenConfig small_gen(std::uint64_t seed = 3) {
  GenConfig g;
  g.scene.height = g.scene.width = 64;
  g.scene.mean_field_size = 12;
  g.scene.seed = seed;
  g.grid = {4, 4};
  return g;
}

struct SmallSplit {
  SceneDataset data;
  std::vector<Patch> train, val, test;
};

SmallSplit small_split(const ModelConfig& m, std::uint64_t seed = 3) {
  SmallSplit s{build_dataset(small_gen(seed)), {}, {}, {}};
  s.train = extract_patches(s.data, Split::train, m.in_size, m.out_size);
  s.val = extract_patches(s.data, Split::val, m.in_size, m.out_size);
  s.test = extract_patches(s.data, Split::test, m.in_size, m.out_size);
  return s;
}

ModelParams<float> single(const std::string& name, std::vector<float> v) {
  ModelParams<float> p;
  const std::size_t n = v.size();
  p.add(name, Tensor<float>({n}, std::move(v)));
  return p;
}

using Matrix = std::vector<std::vector<std::uint64_t>>;

std::vector<float> vals(const Tensor<float>& t) { return {t.values().begin(), t.values().end()}; }

}  // namespace

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  auto p = single("w", {0.5f, -1.0f, 2.0f});
  const auto before = p;
  AdamState s;
  TrainConfig c;
  for (int i = 0; i < 5; ++i) adam_step(p, single("w", {0, 0, 0}), s, c);
  for (std::size_t k = 0; k < 3; ++k) CHECK(p[0].value[k] == before[0].value[k]);
  CHECK(s.step == 5);
}

TEST_CASE("adam: first step moves each weight by lr against the gradient sign") {
  auto p = single("w", {0.5f, -1.0f, 2.0f, 0.0f});
  AdamState s;
  TrainConfig c;
  c.learning_rate = 0.01;
  adam_step(p, single("w", {3.0f, -0.2f, 1e-3f, -50.0f}), s, c);
  CHECK(p[0].value[0] == doctest::Approx(0.49).epsilon(1e-5));
  CHECK(p[0].value[1] == doctest::Approx(-0.99).epsilon(1e-5));
  CHECK(p[0].value[2] == doctest::Approx(1.99).epsilon(1e-5));
  CHECK(p[0].value[3] == doctest::Approx(0.01).epsilon(1e-4));
}

TEST_CASE("adam: matches a double-precision reference over several steps") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  std::vector<double> w(6), m(6, 0), v(6, 0);
  for (auto& x : w) x = nd(rng);
  std::vector<float> wf(w.begin(), w.end());
  auto p = single("w", wf);
  AdamState s;
  TrainConfig c;
  c.learning_rate = 0.05;
  for (int step = 1; step <= 10; ++step) {
    std::vector<float> g(6);
    for (auto& x : g) x = static_cast<float>(nd(rng));
    adam_step(p, single("w", g), s, c);
    for (std::size_t k = 0; k < 6; ++k) {
      m[k] = 0.9 * m[k] + 0.1 * g[k];
      v[k] = 0.999 * v[k] + 0.001 * double(g[k]) * g[k];
      const double mh = m[k] / (1 - std::pow(0.9, step)), vh = v[k] / (1 - std::pow(0.999, step));
      w[k] -= 0.05 * mh / (std::sqrt(vh) + 1e-8);
    }
  }
  for (std::size_t k = 0; k < 6; ++k) CHECK(p[0].value[k] == doctest::Approx(w[k]).epsilon(1e-5));
}

TEST_CASE("adam: non-finite gradient names the parameter") {
  auto p = single("enc.w", {1.0f});
  AdamState s;
  TrainConfig c;
  try {
    adam_step(p, single("enc.w", {NAN}), s, c);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("enc.w") != std::string::npos);
  }
}

TEST_CASE("train config: validation and JSON") {
  TrainConfig c;
  c.epochs = 7;
  c.mode = AggregationMode::mean;
  c.patience = 2;
  CHECK(train_config_from_json(to_json(c)) == c);
  CHECK_THROWS_AS(train_config_from_json({{"epochs", 0}}), ConfigError);
  CHECK_THROWS_AS(train_config_from_json({{"mode", "median"}}), ConfigError);
  CHECK_THROWS_AS(train_config_from_json({{"learning_rate", -1.0}}), ConfigError);
  CHECK_THROWS_AS(train_config_from_json({{"epoch", 3}}), ConfigError);
}

TEST_CASE("metrics: accumulate_confusion equals brute-force counting") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t L = 2 + rng() % 5, P = 1 + rng() % 200;
    std::vector<float> probs(L * P);
    std::uniform_real_distribution<float> u(0, 1);
    for (auto& v : probs) v = u(rng);
    // Occasional exact ties exercise the lowest-id rule.
    for (std::size_t p = 0; p < P; p += 7) probs[(L - 1) * P + p] = probs[p];
    std::vector<std::uint8_t> y(P);
    for (auto& l : y) l = rng() % 10 == 0 ? kIgnore : static_cast<std::uint8_t>(rng() % L);

    Matrix expect(L, std::vector<std::uint64_t>(L, 0));
    for (std::size_t p = 0; p < P; ++p) {
      if (y[p] == kIgnore) continue;
      std::size_t arg = 0;
      float best = -1;
      for (std::size_t l = 0; l < L; ++l) {
        if (probs[l * P + p] > best) {
          best = probs[l * P + p];
          arg = l;
        }
      }
      ++expect[y[p]][arg];
    }
    Matrix got(L, std::vector<std::uint64_t>(L, 0));
    accumulate_confusion(probs, y, L, got);
    REQUIRE(got == expect);
  }
}

TEST_CASE("metrics: F1 arithmetic and exclusion") {
  // Class 0: TP 3, FN 1 (predicted as 1), FP 1 (a class 1 pixel predicted as 0).
  Matrix c = {{3, 1, 0}, {1, 5, 0}, {0, 0, 0}};
  const Metrics m = metrics_from_confusion(c, {"a", "b", "c"});
  CHECK(m.classes[0].f1 == doctest::Approx(0.75));
  CHECK(m.classes[1].f1 == doctest::Approx(10.0 / 12.0));
  CHECK_FALSE(m.classes[2].included);
  CHECK(m.mean_f1 == doctest::Approx((0.75 + 10.0 / 12.0) / 2));
  CHECK(m.classes[0].count == 4);
  const auto j = to_json(m);
  CHECK(j["classes"][2]["f1"].is_null());
  CHECK(j["classes"][2]["included_in_mean"] == false);

  const Metrics perfect = metrics_from_confusion({{4, 0}, {0, 9}}, {"a", "b"});
  CHECK(perfect.mean_f1 == 1.0);

  // A class absent from the truth but predicted scores 0 and counts.
  const Metrics spurious = metrics_from_confusion({{4, 1}, {0, 0}}, {"a", "b"});
  CHECK(spurious.classes[1].included);
  CHECK(spurious.classes[1].f1 == 0.0);
}

TEST_CASE("metrics: evaluate counts every labeled pixel once") {
  const ModelConfig m = small_model();
  const auto s = small_split(m);
  const auto params = init_params<float>(m, 1);
  const Metrics r = evaluate(params, m, s.test, s.data.class_names, 1);
  std::uint64_t total = 0, labeled = 0;
  for (const auto& row : r.confusion)
    for (auto v : row) total += v;
  for (const auto& p : s.test) labeled += ops::count_labeled(p.y);
  CHECK(total == labeled);
  CHECK(evaluate(params, m, s.test, s.data.class_names, 3).confusion == r.confusion);
  CHECK_THROWS_AS(evaluate(params, m, s.test, {"a", "b"}, 1), ConfigError);
}

TEST_CASE("attention profile") {
  const ModelConfig m = small_model();
  const auto s = small_split(m);
  const auto params = init_params<float>(m, 2);
  std::vector<Patch> one = {s.test.at(0)};
  const auto prof = attention_profile(params, m, one, m.classes, 1);
  const auto pred = predict(params, m, one[0].x);
  REQUIRE(prof.mean.size() == m.steps);
  for (std::size_t t = 0; t < m.steps; ++t) CHECK(prof.mean[t] == doctest::Approx(pred.alpha[t]).epsilon(1e-7));

  const auto all = attention_profile(params, m, s.test, m.classes, 1);
  double sum = 0;
  for (double a : all.mean) sum += a;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
  std::size_t counted = 0;
  for (auto n : all.class_patches) counted += n;
  CHECK(counted == s.test.size());

  ModelConfig mean = m;
  mean.mode = AggregationMode::mean;
  CHECK_THROWS_AS(attention_profile(params, mean, s.test, m.classes, 1), ContractError);
}

TEST_CASE("train: deterministic, thread-count independent, loss decreases") {
  const ModelConfig m = small_model();
  const auto s = small_split(m);
  const auto init = init_params<float>(m, 4);
  TrainConfig c;
  c.epochs = 4;
  c.batch_size = 8;
  c.learning_rate = 5e-3;
  c.threads = 1;
  const auto a = train(m, init, s.train, s.val, s.data.class_names, c);
  c.threads = 3;
  const auto b = train(m, init, s.train, s.val, s.data.class_names, c);
  REQUIRE(a.history.size() == 4);
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].train_loss == b.history[i].train_loss);
    CHECK(a.history[i].val_mean_f1 == b.history[i].val_mean_f1);
  }
  for (std::size_t k = 0; k < a.best_params.size(); ++k) {
    CHECK(vals(a.best_params[k].value) == vals(b.best_params[k].value));
  }
  CHECK(a.history.back().train_loss < a.history.front().train_loss);
  CHECK(a.best_epoch >= 1);
  CHECK(history_csv(a.history).rfind("epoch,train_loss,val_mean_f1\n", 0) == 0);
}

TEST_CASE("train: mean mode leaves attention parameters at their initial values") {
  const ModelConfig m = small_model();
  const auto s = small_split(m);
  const auto init = init_params<float>(m, 6);
  TrainConfig c;
  c.epochs = 1;
  c.batch_size = 8;
  c.mode = AggregationMode::mean;
  c.threads = 1;
  const auto r = train(m, init, s.train, s.val, s.data.class_names, c);
  std::size_t checked = 0;
  bool other_moved = false;
  for (std::size_t k = 0; k < init.size(); ++k) {
    if (parameter_group(init[k].name) == "attention") {
      CHECK(vals(r.best_params[k].value) == vals(init[k].value));
      ++checked;
    } else if (vals(r.best_params[k].value) != vals(init[k].value)) {
      other_moved = true;
    }
  }
  CHECK(checked > 0);
  CHECK(other_moved);
}

TEST_CASE("train: patience stops early, empty splits rejected") {
  const ModelConfig m = small_model();
  const auto s = small_split(m);
  const auto init = init_params<float>(m, 8);
  TrainConfig c;
  c.epochs = 6;
  c.batch_size = 16;
  c.learning_rate = 1e-9;  // no progress, so validation never improves after epoch 1
  c.patience = 2;
  c.threads = 1;
  const auto r = train(m, init, s.train, s.val, s.data.class_names, c);
  CHECK(r.history.size() == 3);
  CHECK(r.best_epoch == 1);
  CHECK_THROWS_AS(train(m, init, {}, s.val, s.data.class_names, c), ConfigError);
  CHECK_THROWS_AS(train(m, init, s.train, {}, s.data.class_names, c), ConfigError);
}

TEST_CASE("noise sweep: fraction range and csv shape") {
  const ModelConfig m = small_model();
  TrainConfig c;
  c.epochs = 1;
  c.batch_size = 16;
  c.threads = 1;
  CHECK_THROWS_AS(noise_sweep(m, c, small_gen(), {0.0, 0.6}, 1), ConfigError);
  CHECK_THROWS_AS(noise_sweep(m, c, small_gen(), {}, 1), ConfigError);
  const auto rows = noise_sweep(m, c, small_gen(), {0.0, 0.25}, 1);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].mode == AggregationMode::attention);
  CHECK(rows[1].mode == AggregationMode::mean);
  CHECK(rows[0].alpha_profile.size() == m.steps);
  CHECK(rows[1].alpha_profile.empty());
  CHECK(rows[2].noisy_steps.size() == 3);
  std::vector<std::string> names;
  for (const auto& c : SceneConfig::default_classes()) names.push_back(c.name);
  const auto csv = sweep_csv(rows, names);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
  CHECK(csv.rfind("fraction,mode,mean_f1,corn_f1,", 0) == 0);
}
