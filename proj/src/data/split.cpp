#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "statt/data.hpp"
#include "statt/errors.hpp"
#include "statt/rng.hpp"

namespace statt {

std::string to_string(Split s) {
  switch (s) {
    case Split::train:
      return "train";
    case Split::val:
      return "val";
    case Split::test:
      return "test";
  }
  return "?";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw ConfigError("split", "expected 'train', 'val' or 'test', got '" + s + "'");
}

std::size_t SplitMap::cell_row(std::size_t y) const { return std::min(y / (height / rows), rows - 1); }
std::size_t SplitMap::cell_col(std::size_t x) const { return std::min(x / (width / cols), cols - 1); }

std::size_t SplitMap::count(Split s) const { return static_cast<std::size_t>(std::count(cells.begin(), cells.end(), s)); }

SplitMap grid_split(std::size_t height, std::size_t width, std::array<std::size_t, 2> grid,
                    std::array<double, 3> ratios, std::uint64_t seed) {
  if (grid[0] < 1 || grid[1] < 1 || grid[0] > height || grid[1] > width) {
    throw ConfigError("/grid", "grid must have between 1 and H (W) rows (columns)");
  }
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9) throw ConfigError("/ratios", "must sum to 1");
  SplitMap map;
  map.height = height;
  map.width = width;
  map.rows = grid[0];
  map.cols = grid[1];
  const std::size_t n = map.rows * map.cols;
  const auto n_train = static_cast<std::size_t>(std::lround(ratios[0] * static_cast<double>(n)));
  const auto n_val = std::min(n - n_train, static_cast<std::size_t>(std::lround(ratios[1] * static_cast<double>(n))));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(derive_seed(seed, 0x73706c6974ULL));
  std::shuffle(order.begin(), order.end(), rng);
  map.cells.assign(n, Split::test);
  for (std::size_t i = 0; i < n; ++i) {
    map.cells[order[i]] = i < n_train ? Split::train : i < n_train + n_val ? Split::val : Split::test;
  }
  return map;
}

NormalizationStats train_statistics(const SceneDataset& scene) {
  const std::size_t T = scene.steps, C = scene.channels, H = scene.height, W = scene.width;
  NormalizationStats stats;
  stats.mean.assign(C, 0.0);
  stats.stddev.assign(C, 0.0);
  std::vector<std::size_t> train_pixels;
  for (std::size_t yy = 0; yy < H; ++yy)
    for (std::size_t xx = 0; xx < W; ++xx)
      if (scene.split.at(yy, xx) == Split::train) train_pixels.push_back(yy * W + xx);
  if (train_pixels.empty()) throw ConfigError("/ratios", "train split has no pixels");
  const double n = static_cast<double>(train_pixels.size() * T);
  for (std::size_t c = 0; c < C; ++c) {
    double sum = 0, sq = 0;
    for (std::size_t t = 0; t < T; ++t) {
      const float* f = scene.x.data() + (t * C + c) * H * W;
      for (std::size_t p : train_pixels) sum += f[p];
    }
    const double mean = sum / n;
    for (std::size_t t = 0; t < T; ++t) {
      const float* f = scene.x.data() + (t * C + c) * H * W;
      for (std::size_t p : train_pixels) sq += (f[p] - mean) * (f[p] - mean);
    }
    stats.mean[c] = mean;
    stats.stddev[c] = std::sqrt(sq / n);
  }
  return stats;
}

void normalize(SceneDataset& scene) {
  if (scene.normalization.applied) throw ContractError("normalize: dataset is already normalized");
  NormalizationStats stats = train_statistics(scene);
  const std::size_t T = scene.steps, C = scene.channels, plane = scene.height * scene.width;
  for (std::size_t c = 0; c < C; ++c) {
    if (!(stats.stddev[c] > 0)) {
      throw ConfigError("/normalization/stddev/" + std::to_string(c), "channel has zero variance on the train split");
    }
  }
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t c = 0; c < C; ++c) {
      float* f = scene.x.data() + (t * C + c) * plane;
      const double m = stats.mean[c], s = stats.stddev[c];
      for (std::size_t i = 0; i < plane; ++i) f[i] = static_cast<float>((f[i] - m) / s);
    }
  stats.applied = true;
  scene.normalization = std::move(stats);
}

}  // namespace statt
