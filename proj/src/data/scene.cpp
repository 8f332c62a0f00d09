#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <tuple>

#include "statt/data.hpp"
#include "statt/errors.hpp"
#include "statt/json_util.hpp"
#include "statt/rng.hpp"

namespace statt {

using nlohmann::json;

namespace {

// Stream indices under the scene seed.
constexpr std::uint64_t kGeometryStream = 1;
constexpr std::uint64_t kMixingStream = 2;
constexpr std::uint64_t kPixelNoiseStream = 3;
constexpr std::uint64_t kCloudStream = 4;

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct Rect {
  std::size_t y0, x0, h, w;
};

// Splits the longer side at a uniform point in its middle third until both
// sides are at most `limit`. Leaves come out in depth-first order.
void split_fields(const Rect& r, double limit, std::mt19937_64& rng, std::vector<Rect>& out) {
  if (static_cast<double>(r.h) <= limit && static_cast<double>(r.w) <= limit) {
    out.push_back(r);
    return;
  }
  const bool vertical = r.w >= r.h;
  const std::size_t len = vertical ? r.w : r.h;
  const std::size_t lo = std::max<std::size_t>(1, len / 3);
  const std::size_t hi = std::max(lo, len - len / 3);
  const std::size_t cut = std::uniform_int_distribution<std::size_t>(lo, std::min(hi, len - 1))(rng);
  if (vertical) {
    split_fields({r.y0, r.x0, r.h, cut}, limit, rng, out);
    split_fields({r.y0, r.x0 + cut, r.h, r.w - cut}, limit, rng, out);
  } else {
    split_fields({r.y0, r.x0, cut, r.w}, limit, rng, out);
    split_fields({r.y0 + cut, r.x0, r.h - cut, r.w}, limit, rng, out);
  }
}

double channel_baseline(std::size_t c) { return 0.1 + 0.05 * static_cast<double>(c); }

}  // namespace

std::vector<ClassSignature> SceneConfig::default_classes() {
  return {
      {"corn", 3.5, 6.0, 8.5, 0.75},
      {"cotton", 4.5, 7.5, 10.0, 0.85},
      {"wheat", 0.5, 3.0, 5.5, 0.65},
      {"alfalfa", 1.5, 5.5, 9.5, 0.5},
  };
}

void SceneConfig::validate() const {
  if (height < 1) throw ConfigError("/height", "must be >= 1");
  if (width < 1) throw ConfigError("/width", "must be >= 1");
  if (steps < 4) throw ConfigError("/steps", "T must be >= 4");
  if (channels < 1) throw ConfigError("/channels", "C must be >= 1");
  if (classes.size() < 2) throw ConfigError("/classes", "L must be >= 2");
  if (classes.size() >= kIgnore) throw ConfigError("/classes", "L must be < 255");
  if (!(slope > 0)) throw ConfigError("/slope", "must be > 0");
  if (!(mean_field_size >= 1)) throw ConfigError("/mean_field_size", "fields must be at least 1 px");
  if (!(noise_sigma >= 0) || !std::isfinite(noise_sigma)) throw ConfigError("/noise_sigma", "must be finite and >= 0");
  std::set<std::string> names;
  std::set<std::tuple<double, double, double>> timings;
  for (std::size_t l = 0; l < classes.size(); ++l) {
    const auto& c = classes[l];
    const std::string at = "/classes/" + std::to_string(l);
    if (c.name.empty()) throw ConfigError(at + "/name", "must be non-empty");
    if (!names.insert(c.name).second) throw ConfigError(at + "/name", "duplicate class name '" + c.name + "'");
    if (!(c.onset < c.peak && c.peak < c.offset)) throw ConfigError(at, "requires onset < peak < offset");
    if (!std::isfinite(c.amplitude)) throw ConfigError(at + "/amplitude", "must be finite");
    if (!timings.insert({c.onset, c.peak, c.offset}).second) {
      throw ConfigError(at, "(onset, peak, offset) duplicates another class");
    }
  }
}

json to_json(const SceneConfig& c) {
  json classes = json::array();
  for (const auto& s : c.classes) {
    classes.push_back(
        {{"name", s.name}, {"onset", s.onset}, {"peak", s.peak}, {"offset", s.offset}, {"amplitude", s.amplitude}});
  }
  return {{"height", c.height},   {"width", c.width},
          {"steps", c.steps},     {"channels", c.channels},
          {"classes", classes},   {"slope", c.slope},
          {"mean_field_size", c.mean_field_size}, {"noise_sigma", c.noise_sigma},
          {"seed", c.seed}};
}

namespace {

void read_scene_fields(const json_util::ObjectReader& r, SceneConfig& c) {
  c.height = r.get("height", c.height);
  c.width = r.get("width", c.width);
  c.steps = r.get("steps", c.steps);
  c.channels = r.get("channels", c.channels);
  c.slope = r.get("slope", c.slope);
  c.mean_field_size = r.get("mean_field_size", c.mean_field_size);
  c.noise_sigma = r.get("noise_sigma", c.noise_sigma);
  c.seed = r.get("seed", c.seed);
  if (r.has("classes")) {
    const json& arr = r.raw("classes");
    if (!arr.is_array()) throw ConfigError(r.field("classes"), "expected an array");
    c.classes.clear();
    for (std::size_t l = 0; l < arr.size(); ++l) {
      json_util::ObjectReader cr(arr[l], r.field("classes") + "/" + std::to_string(l));
      cr.reject_unknown({"name", "onset", "peak", "offset", "amplitude"});
      c.classes.push_back({cr.require<std::string>("name"), cr.require<double>("onset"), cr.require<double>("peak"),
                           cr.require<double>("offset"), cr.require<double>("amplitude")});
    }
  }
}

constexpr std::initializer_list<const char*> kSceneKeys = {
    "height", "width", "steps", "channels", "classes", "slope", "mean_field_size", "noise_sigma", "seed"};

}  // namespace

SceneConfig scene_config_from_json(const json& j, const std::string& path) {
  json_util::ObjectReader r(j, path);
  r.reject_unknown(kSceneKeys);
  SceneConfig c;
  read_scene_fields(r, c);
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(path + e.field(), e.what());
  }
  return c;
}

double signature_value(const SceneConfig& config, std::size_t cls, double t) {
  const ClassSignature& s = config.classes.at(cls);
  return s.amplitude * (logistic((t - s.onset) / config.slope) - logistic((t - s.offset) / config.slope));
}

SceneDataset generate_scene(const SceneConfig& config) {
  config.validate();
  const std::size_t T = config.steps, C = config.channels, H = config.height, W = config.width;
  const std::size_t L = config.class_count();

  SceneDataset scene;
  scene.steps = T;
  scene.channels = C;
  scene.height = H;
  scene.width = W;
  scene.seed = config.seed;
  for (const auto& s : config.classes) scene.class_names.push_back(s.name);

  std::mt19937_64 geometry(derive_seed(config.seed, kGeometryStream));
  std::vector<Rect> fields;
  split_fields({0, 0, H, W}, config.mean_field_size, geometry, fields);
  scene.field_count = fields.size();
  scene.y.assign(H * W, 0);
  std::uniform_int_distribution<std::size_t> pick_class(0, L - 1);
  for (const Rect& f : fields) {
    const auto cls = static_cast<std::uint8_t>(pick_class(geometry));
    for (std::size_t yy = f.y0; yy < f.y0 + f.h; ++yy)
      std::fill_n(scene.y.begin() + static_cast<std::ptrdiff_t>(yy * W + f.x0), f.w, cls);
  }

  // mixing[c][l] ~ 1 +- 0.1
  std::mt19937_64 mixing_rng(derive_seed(config.seed, kMixingStream));
  std::uniform_real_distribution<double> jitter(-0.1, 0.1);
  std::vector<double> mixing(C * L);
  for (double& m : mixing) m = 1.0 + jitter(mixing_rng);

  // Clean value per (t, c, class).
  std::vector<double> clean(T * C * L);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t l = 0; l < L; ++l)
        clean[(t * C + c) * L + l] =
            mixing[c * L + l] * signature_value(config, l, static_cast<double>(t)) + channel_baseline(c);

  scene.x = Tensor<float>({T, C, H, W});
  const std::uint64_t noise_seed = derive_seed(config.seed, kPixelNoiseStream);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t yy = 0; yy < H; ++yy) {
        // One stream per image row keeps rows independent of each other.
        std::mt19937_64 rng(derive_seed(noise_seed, (t * C + c) * H + yy));
        std::normal_distribution<double> noise(0.0, 1.0);
        float* row = scene.x.data() + ((t * C + c) * H + yy) * W;
        const double* base = &clean[(t * C + c) * L];
        for (std::size_t xx = 0; xx < W; ++xx) {
          const double n = config.noise_sigma > 0 ? config.noise_sigma * noise(rng) : 0.0;
          row[xx] = static_cast<float>(base[scene.y[yy * W + xx]] + n);
        }
      }
  return scene;
}

std::vector<std::size_t> inject_noise(SceneDataset& scene, double fraction, double noise_sigma, std::uint64_t seed) {
  if (!(fraction >= 0 && fraction <= 0.5)) throw ConfigError("/noise_fraction", "must lie in [0, 0.5]");
  const std::size_t T = scene.steps, C = scene.channels, plane = scene.height * scene.width;
  const auto count = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(T)));
  if (count == 0) return {};

  std::mt19937_64 rng(derive_seed(seed, kCloudStream));
  std::vector<std::size_t> order(T);
  for (std::size_t t = 0; t < T; ++t) order[t] = t;
  for (std::size_t i = 0; i < count; ++i) {
    std::swap(order[i], order[std::uniform_int_distribution<std::size_t>(i, T - 1)(rng)]);
  }
  std::vector<std::size_t> selected(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count));
  std::sort(selected.begin(), selected.end());

  // 90th percentile of each channel over frames that are still clean.
  std::vector<bool> dirty(T, false);
  for (std::size_t t : scene.noisy_steps) dirty.at(t) = true;
  std::vector<double> bright(C);
  for (std::size_t c = 0; c < C; ++c) {
    std::vector<float> values;
    values.reserve(T * plane);
    for (std::size_t t = 0; t < T; ++t) {
      if (dirty[t]) continue;
      const float* f = scene.x.data() + (t * C + c) * plane;
      values.insert(values.end(), f, f + plane);
    }
    if (values.empty()) throw ContractError("inject_noise: no clean frames left");
    auto nth = values.begin() + static_cast<std::ptrdiff_t>(0.9 * static_cast<double>(values.size() - 1));
    std::nth_element(values.begin(), nth, values.end());
    bright[c] = *nth;
  }

  for (std::size_t t : selected) {
    for (std::size_t c = 0; c < C; ++c) {
      std::mt19937_64 frame_rng(derive_seed(derive_seed(seed, kCloudStream), 1 + t * C + c));
      std::normal_distribution<double> noise(0.0, 2.0 * noise_sigma);
      float* f = scene.x.data() + (t * C + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        f[i] = static_cast<float>(bright[c] + (noise_sigma > 0 ? noise(frame_rng) : 0.0));
      }
    }
  }
  scene.noisy_steps.insert(scene.noisy_steps.end(), selected.begin(), selected.end());
  std::sort(scene.noisy_steps.begin(), scene.noisy_steps.end());
  return selected;
}

void GenConfig::validate() const {
  scene.validate();
  if (!(noise_fraction >= 0 && noise_fraction <= 0.5)) throw ConfigError("/noise_fraction", "must lie in [0, 0.5]");
  if (grid[0] < 1 || grid[1] < 1) throw ConfigError("/grid", "must be at least 1x1");
  if (grid[0] > scene.height || grid[1] > scene.width) throw ConfigError("/grid", "more cells than pixels");
  double sum = 0;
  for (double r : ratios) {
    if (!(r >= 0)) throw ConfigError("/ratios", "must be non-negative");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("/ratios", "must sum to 1");
}

json to_json(const GenConfig& c) {
  json j = to_json(c.scene);
  j["noise_fraction"] = c.noise_fraction;
  j["clean_labels"] = c.clean_labels;
  j["min_component"] = c.min_component;
  j["grid"] = c.grid;
  j["ratios"] = c.ratios;
  j["normalize"] = c.normalize;
  return j;
}

GenConfig gen_config_from_json(const json& j, const std::string& path) {
  json_util::ObjectReader r(j, path);
  std::vector<std::string> keys(kSceneKeys.begin(), kSceneKeys.end());
  for (auto it = j.begin(); it != j.end(); ++it) {
    static const std::set<std::string> extra = {"noise_fraction", "clean_labels", "min_component",
                                                "grid",           "ratios",       "normalize"};
    if (std::find(keys.begin(), keys.end(), it.key()) == keys.end() && !extra.count(it.key())) {
      throw ConfigError(r.field(it.key()), "unknown field");
    }
  }
  GenConfig c;
  read_scene_fields(r, c.scene);
  c.noise_fraction = r.get("noise_fraction", c.noise_fraction);
  c.clean_labels = r.get("clean_labels", c.clean_labels);
  c.min_component = r.get("min_component", c.min_component);
  c.grid = r.get("grid", c.grid);
  c.ratios = r.get("ratios", c.ratios);
  c.normalize = r.get("normalize", c.normalize);
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(path + e.field(), e.what());
  }
  return c;
}

SceneDataset build_dataset(const GenConfig& config) {
  config.validate();
  SceneDataset scene = generate_scene(config.scene);
  inject_noise(scene, config.noise_fraction, config.scene.noise_sigma, config.scene.seed);
  if (config.clean_labels) scene.y = clean_labels(scene.y, scene.height, scene.width, config.min_component);
  scene.split = grid_split(scene.height, scene.width, config.grid, config.ratios, config.scene.seed);
  if (config.normalize) normalize(scene);
  return scene;
}

}  // namespace statt
