#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "statt/tensor.hpp"

namespace statt {

/// Double-logistic phenology of one class, in time-step units:
/// s(t) = amplitude * (logistic((t - onset)/r) - logistic((t - offset)/r)).
/// `peak` documents the plateau and must lie strictly between onset and
/// offset; the curve itself is set by onset, offset, amplitude and r.
struct ClassSignature {
  std::string name;
  double onset = 0;
  double peak = 0;
  double offset = 0;
  double amplitude = 0;

  friend bool operator==(const ClassSignature&, const ClassSignature&) = default;
};

struct SceneConfig {
  std::size_t height = 512;
  std::size_t width = 512;
  std::size_t steps = 12;
  std::size_t channels = 4;
  std::vector<ClassSignature> classes = default_classes();
  double slope = 0.6;             // r
  double mean_field_size = 40;    // fields are split until both sides are <= this
  double noise_sigma = 0.15;      // per-pixel Gaussian noise
  std::uint64_t seed = 42;

  std::size_t class_count() const { return classes.size(); }
  /// Throws ConfigError naming the offending field.
  void validate() const;
  /// Four crop-like classes with distinct green-up and harvest timing over
  /// a 12-step season.
  static std::vector<ClassSignature> default_classes();

  friend bool operator==(const SceneConfig&, const SceneConfig&) = default;
};

nlohmann::json to_json(const SceneConfig& config);
SceneConfig scene_config_from_json(const nlohmann::json& j, const std::string& path = "");

/// Signature value of class `cls` at time step t.
double signature_value(const SceneConfig& config, std::size_t cls, double t);

enum class Split : std::uint8_t { train, val, test };
std::string to_string(Split s);
Split parse_split(const std::string& s);

/// Grid-cell to split assignment. Cells have floor(H/rows) x floor(W/cols)
/// pixels; the remainder rows/columns attach to the last cell.
struct SplitMap {
  std::size_t height = 0, width = 0;
  std::size_t rows = 10, cols = 10;
  std::vector<Split> cells;  // row-major, rows*cols

  std::size_t cell_row(std::size_t y) const;
  std::size_t cell_col(std::size_t x) const;
  Split at(std::size_t y, std::size_t x) const { return cells[cell_row(y) * cols + cell_col(x)]; }
  std::size_t count(Split s) const;

  friend bool operator==(const SplitMap&, const SplitMap&) = default;
};

/// Seeded permutation of the grid cells; the first ratios[0] share goes to
/// train, the next ratios[1] to val, the rest to test.
SplitMap grid_split(std::size_t height, std::size_t width, std::array<std::size_t, 2> grid = {10, 10},
                    std::array<double, 3> ratios = {0.6, 0.2, 0.2}, std::uint64_t seed = 0);

inline constexpr std::uint8_t kIgnore = 255;

struct NormalizationStats {
  bool applied = false;
  std::vector<double> mean, stddev;  // per channel
};

struct SceneDataset {
  std::size_t steps = 0, channels = 0, height = 0, width = 0;
  std::vector<std::string> class_names;
  Tensor<float> x;              // [T,C,H,W]
  std::vector<std::uint8_t> y;  // [H,W], kIgnore = unlabeled
  SplitMap split;
  std::uint64_t seed = 0;
  std::size_t field_count = 0;
  std::vector<std::size_t> noisy_steps;
  NormalizationStats normalization;

  std::size_t class_count() const { return class_names.size(); }
  std::size_t pixel(std::size_t y_, std::size_t x_) const { return y_ * width + x_; }
};

/// Recursive field partition, class assignment, signature rendering and
/// pixel noise. Labels are the raw field classes; the split map is empty.
SceneDataset generate_scene(const SceneConfig& config);

/// Replaces round(fraction * T) whole frames with cloud-like values (the
/// 90th percentile of each channel's clean values plus N(0, 2 sigma)).
/// Returns the selected steps in increasing order; they are also appended
/// to scene.noisy_steps.
std::vector<std::size_t> inject_noise(SceneDataset& scene, double fraction, double noise_sigma, std::uint64_t seed);

/// One-pixel erosion with a 3x3 square element per class, then removal of
/// 8-connected components smaller than min_size. Removed pixels become
/// kIgnore.
std::vector<std::uint8_t> clean_labels(std::span<const std::uint8_t> y, std::size_t height, std::size_t width,
                                       std::size_t min_size = 10);

/// Per-channel mean/stddev over train-split pixels and all time steps.
NormalizationStats train_statistics(const SceneDataset& scene);
/// Standardizes x in place with train-split statistics. Throws ContractError
/// if already applied, ConfigError on a zero-variance channel.
void normalize(SceneDataset& scene);

struct Patch {
  std::size_t row = 0, col = 0;  // scene coordinates of the label window
  Tensor<float> x;               // [T,C,in,in]
  std::vector<std::uint8_t> y;   // out*out
};

/// Label windows tile the scene from its origin at `stride`. A window is a
/// patch of `split` when every label pixel lies in that split's cells and
/// at least one is labeled. Inputs are the centered in_size window with
/// mirror padding at the scene border.
std::vector<Patch> extract_patches(const SceneDataset& scene, Split split, std::size_t in_size, std::size_t out_size,
                                   std::size_t stride = 0);

/// Dataset directory: manifest.json, X.bin (f32le), Y.bin (u8), splits.json.
void save_dataset(const std::filesystem::path& dir, const SceneDataset& scene);
SceneDataset load_dataset(const std::filesystem::path& dir);

/// Everything `gen` does before writing: scene, optional noise, optional
/// label cleaning, grid split, optional normalization.
struct GenConfig {
  SceneConfig scene;
  double noise_fraction = 0;
  bool clean_labels = true;
  std::size_t min_component = 10;
  std::array<std::size_t, 2> grid = {10, 10};
  std::array<double, 3> ratios = {0.6, 0.2, 0.2};
  bool normalize = true;

  void validate() const;
  friend bool operator==(const GenConfig&, const GenConfig&) = default;
};

nlohmann::json to_json(const GenConfig& config);
/// Accepts the scene fields at top level alongside the pipeline fields.
GenConfig gen_config_from_json(const nlohmann::json& j, const std::string& path = "");

SceneDataset build_dataset(const GenConfig& config);

}  // namespace statt
