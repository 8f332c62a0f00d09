#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "statt/binary_io.hpp"
#include "statt/data.hpp"
#include "statt/errors.hpp"

using namespace statt;
namespace fs = std::filesystem;

namespace {

SceneConfig small_scene(std::size_t size = 64) {
  SceneConfig c;
  c.height = c.width = size;
  c.mean_field_size = 12;
  return c;
}

std::vector<std::uint8_t> block_grid(std::size_t n, std::size_t r0, std::size_t side, std::uint8_t background,
                                     std::uint8_t block) {
  std::vector<std::uint8_t> y(n * n, background);
  for (std::size_t r = r0; r < r0 + side; ++r)
    for (std::size_t c = r0; c < r0 + side; ++c) y[r * n + c] = block;
  return y;
}

std::vector<double> class_means(const SceneDataset& s, std::size_t t, std::size_t c) {
  std::vector<double> sum(s.class_count(), 0.0), n(s.class_count(), 0.0);
  const float* f = s.x.data() + (t * s.channels + c) * s.height * s.width;
  for (std::size_t i = 0; i < s.y.size(); ++i) {
    sum[s.y[i]] += f[i];
    n[s.y[i]] += 1;
  }
  for (std::size_t l = 0; l < sum.size(); ++l) sum[l] /= n[l];
  return sum;
}

}  // namespace

TEST_CASE("scene config validation and JSON") {
  CHECK_NOTHROW(SceneConfig{}.validate());
  SceneConfig c;
  c.classes.resize(1);
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = SceneConfig{};
  c.classes[1].onset = c.classes[0].onset;
  c.classes[1].peak = c.classes[0].peak;
  c.classes[1].offset = c.classes[0].offset;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = SceneConfig{};
  c.classes[0].peak = c.classes[0].offset + 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = SceneConfig{};
  c.mean_field_size = 0.5;
  CHECK_THROWS_AS(generate_scene(c), ConfigError);
  c = SceneConfig{};
  c.steps = 3;
  CHECK_THROWS_AS(c.validate(), ConfigError);

  GenConfig g;
  g.scene = small_scene();
  g.noise_fraction = 0.25;
  g.clean_labels = false;
  CHECK(gen_config_from_json(to_json(g)) == g);
  CHECK(scene_config_from_json(to_json(g.scene)) == g.scene);
  nlohmann::json j = to_json(g);
  j["colour"] = 1;
  CHECK_THROWS_AS(gen_config_from_json(j), ConfigError);
  j = to_json(g);
  j["classes"] = nlohmann::json::array({j["classes"][0]});
  try {
    gen_config_from_json(j);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.field() == "/classes");
  }
  j = to_json(g);
  j["noise_fraction"] = 0.7;
  CHECK_THROWS_AS(gen_config_from_json(j), ConfigError);
}

TEST_CASE("generate_scene") {
  SceneConfig c = small_scene();
  const SceneDataset a = generate_scene(c);
  CHECK(a.x.shape() == Shape{12, 4, 64, 64});
  CHECK(a.y.size() == 64 * 64);
  CHECK(a.field_count > 4);
  for (auto v : a.y) CHECK(v < 4);
  CHECK(generate_scene(c).x == a.x);
  c.seed = 43;
  CHECK_FALSE(generate_scene(c).x == a.x);

  SUBCASE("no noise: equal classes give identical series") {
    c.noise_sigma = 0;
    const SceneDataset s = generate_scene(c);
    std::size_t p = 0, q = 1;
    while (s.y[q] != s.y[p]) ++q;
    for (std::size_t tc = 0; tc < 48; ++tc) CHECK(s.x[tc * 4096 + p] == s.x[tc * 4096 + q]);
  }
  SUBCASE("time-shifted signatures cross") {
    c.steps = 12;
    c.classes = {{"early", 0.5, 2.0, 4.5, 0.8}, {"late", 6.5, 8.0, 10.5, 0.8}};
    const SceneDataset s = generate_scene(c);
    bool early_above = false, late_above = false;
    for (std::size_t t = 0; t < 12; ++t) {
      const auto m = class_means(s, t, 0);
      early_above = early_above || m[0] > m[1] + 0.1;
      late_above = late_above || m[1] > m[0] + 0.1;
    }
    CHECK(early_above);
    CHECK(late_above);
  }
  SUBCASE("signature formula") {
    const double v = signature_value(c, 0, 6.0);
    const auto& s = c.classes[0];
    const double want = s.amplitude * (1 / (1 + std::exp(-(6.0 - s.onset) / c.slope)) -
                                       1 / (1 + std::exp(-(6.0 - s.offset) / c.slope)));
    CHECK(v == doctest::Approx(want).epsilon(1e-15));
  }
}

TEST_CASE("inject_noise") {
  SceneConfig c = small_scene(128);
  const SceneDataset clean = generate_scene(c);
  SceneDataset s = clean;
  CHECK(inject_noise(s, 0.0, c.noise_sigma, 1).empty());
  CHECK(s.x == clean.x);
  CHECK_THROWS_AS(inject_noise(s, 0.6, c.noise_sigma, 1), ConfigError);
  CHECK_THROWS_AS(inject_noise(s, -0.1, c.noise_sigma, 1), ConfigError);

  const auto steps = inject_noise(s, 0.25, c.noise_sigma, 1);
  CHECK(steps.size() == 3);
  CHECK(s.noisy_steps == steps);
  CHECK(std::is_sorted(steps.begin(), steps.end()));
  const std::size_t frame = 4 * 128 * 128;
  for (std::size_t t = 0; t < 12; ++t) {
    const bool noisy = std::find(steps.begin(), steps.end(), t) != steps.end();
    const bool same = std::equal(s.x.data() + t * frame, s.x.data() + (t + 1) * frame, clean.x.data() + t * frame);
    CHECK(same != noisy);
  }
  // A noisy frame carries no class information.
  for (std::size_t ch = 0; ch < 4; ++ch) {
    const auto m = class_means(s, steps[0], ch);
    CHECK(*std::max_element(m.begin(), m.end()) - *std::min_element(m.begin(), m.end()) < c.noise_sigma / 10);
  }
  SceneDataset again = clean;
  inject_noise(again, 0.25, c.noise_sigma, 1);
  CHECK(again.x == s.x);

  SceneConfig c24 = small_scene(16);
  c24.steps = 24;
  SceneDataset s24 = generate_scene(c24);
  CHECK(inject_noise(s24, 0.5, c24.noise_sigma, 3).size() == 12);
}

TEST_CASE("clean_labels examples") {
  SUBCASE("uniform plane loses its border") {
    const auto out = clean_labels(std::vector<std::uint8_t>(100, 2), 10, 10);
    for (std::size_t r = 0; r < 10; ++r)
      for (std::size_t c = 0; c < 10; ++c) {
        const bool border = r == 0 || c == 0 || r == 9 || c == 9;
        CHECK(out[r * 10 + c] == (border ? 255 : 2));
      }
  }
  SUBCASE("isolated 5x5 block disappears") {
    const auto out = clean_labels(block_grid(20, 7, 5, 255, 1), 20, 20);
    CHECK(std::count(out.begin(), out.end(), 1) == 0);
  }
  SUBCASE("isolated 6x6 block keeps its 4x4 core") {
    const auto out = clean_labels(block_grid(20, 7, 6, 255, 1), 20, 20);
    CHECK(std::count(out.begin(), out.end(), 1) == 16);
    for (std::size_t r = 8; r < 12; ++r)
      for (std::size_t c = 8; c < 12; ++c) CHECK(out[r * 20 + c] == 1);
  }
  CHECK_THROWS_AS(clean_labels(std::vector<std::uint8_t>(10, 0), 3, 3), DimensionError);
}

TEST_CASE("clean_labels matches the brute-force oracle on random grids") {
  std::mt19937_64 rng(2024);
  int mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<std::uint8_t> y(32 * 32);
    std::uniform_int_distribution<int> cls(0, 3);
    for (auto& v : y) v = static_cast<std::uint8_t>(cls(rng));
    // Paint rectangles so components of many sizes appear.
    const int rects = 5 + trial % 30;
    for (int k = 0; k < rects; ++k) {
      const int r0 = static_cast<int>(rng() % 32), c0 = static_cast<int>(rng() % 32);
      const int h = 1 + static_cast<int>(rng() % 12), w = 1 + static_cast<int>(rng() % 12);
      const auto v = static_cast<std::uint8_t>(rng() % 7 == 0 ? 255 : cls(rng));
      for (int r = r0; r < std::min(32, r0 + h); ++r)
        for (int c = c0; c < std::min(32, c0 + w); ++c) y[r * 32 + c] = v;
    }
    const std::size_t min_size = trial % 4 == 0 ? 1 + rng() % 20 : 10;
    if (clean_labels(y, 32, 32, min_size) != oracle::clean_labels(y, 32, 32, min_size)) ++mismatches;
  }
  CHECK(mismatches == 0);
}

TEST_CASE("grid_split") {
  const SplitMap m = grid_split(512, 512, {10, 10}, {0.6, 0.2, 0.2}, 7);
  CHECK(m.cells.size() == 100);
  CHECK(m.count(Split::train) == 60);
  CHECK(m.count(Split::val) == 20);
  CHECK(m.count(Split::test) == 20);
  CHECK(grid_split(512, 512, {10, 10}, {0.6, 0.2, 0.2}, 7) == m);
  CHECK_FALSE(grid_split(512, 512, {10, 10}, {0.6, 0.2, 0.2}, 8) == m);
  // 512 = 10 * 51 + 2: the last cell absorbs the remainder.
  CHECK(m.cell_row(509) == 9);
  CHECK(m.cell_row(511) == 9);
  CHECK(m.cell_row(458) == 8);
  CHECK(m.cell_col(459) == 9);
  CHECK_THROWS_AS(grid_split(5, 5, {10, 10}, {0.6, 0.2, 0.2}, 1), ConfigError);
  CHECK_THROWS_AS(grid_split(50, 50, {10, 10}, {0.6, 0.2, 0.3}, 1), ConfigError);
  CHECK(parse_split("val") == Split::val);
  CHECK_THROWS_AS(parse_split("dev"), ConfigError);
}

TEST_CASE("normalize") {
  GenConfig g;
  g.scene = small_scene(100);
  g.normalize = false;
  SceneDataset s = build_dataset(g);
  normalize(s);
  CHECK(s.normalization.applied);
  const auto after = train_statistics(s);
  for (std::size_t c = 0; c < 4; ++c) {
    CHECK(std::abs(after.mean[c]) < 1e-3);
    CHECK(std::abs(after.stddev[c] - 1) < 1e-3);
  }
  CHECK_THROWS_AS(normalize(s), ContractError);

  SceneDataset flat = build_dataset(g);
  for (std::size_t t = 0; t < flat.steps; ++t)
    std::fill_n(flat.x.data() + (t * 4 + 2) * 100 * 100, 100 * 100, 0.5f);
  CHECK_THROWS_AS(normalize(flat), ConfigError);
  CHECK_FALSE(flat.normalization.applied);
}

TEST_CASE("extract_patches") {
  GenConfig g;
  g.scene = small_scene(128);
  const SceneDataset s = build_dataset(g);
  std::vector<int> cover(128 * 128, 0);
  std::size_t total = 0;
  for (Split split : {Split::train, Split::val, Split::test}) {
    const auto patches = extract_patches(s, split, 32, 16);
    total += patches.size();
    for (const auto& p : patches) {
      REQUIRE(p.x.shape() == Shape{12, 4, 32, 32});
      bool any = false;
      for (std::size_t i = 0; i < 16; ++i)
        for (std::size_t j = 0; j < 16; ++j) {
          CHECK(s.split.at(p.row + i, p.col + j) == split);
          CHECK(p.y[i * 16 + j] == s.y[(p.row + i) * 128 + p.col + j]);
          any = any || p.y[i * 16 + j] != kIgnore;
          ++cover[(p.row + i) * 128 + p.col + j];
        }
      CHECK(any);
      // The label window sits at the centre of the input window.
      for (std::size_t i = 0; i < 16; ++i)
        for (std::size_t j = 0; j < 16; ++j)
          CHECK(p.x[((5 * 4 + 1) * 32 + 8 + i) * 32 + 8 + j] == s.x[((5 * 4 + 1) * 128 + p.row + i) * 128 + p.col + j]);
    }
  }
  CHECK(total > 0);
  // Every labeled pixel of a tile that lies in a single split is covered once.
  for (std::size_t r = 0; r < 128; r += 16)
    for (std::size_t c = 0; c < 128; c += 16) {
      bool single = true, labeled = false;
      for (std::size_t i = 0; i < 16; ++i)
        for (std::size_t j = 0; j < 16; ++j) {
          single = single && s.split.at(r + i, c + j) == s.split.at(r, c);
          labeled = labeled || s.y[(r + i) * 128 + c + j] != kIgnore;
        }
      for (std::size_t i = 0; i < 16; ++i)
        for (std::size_t j = 0; j < 16; ++j) CHECK(cover[(r + i) * 128 + c + j] == (single && labeled ? 1 : 0));
    }

  SUBCASE("mirror padding at the scene corner") {
    SceneDataset all = s;
    std::fill(all.split.cells.begin(), all.split.cells.end(), Split::train);
    std::fill(all.y.begin(), all.y.end(), 0);
    const auto patches = extract_patches(all, Split::train, 32, 16);
    CHECK(patches.size() == 64);
    const Patch& p = patches.front();
    REQUIRE(p.row == 0);
    // Input pixel (8 - 1, 8 - 2) mirrors scene pixel (1, 2).
    CHECK(p.x[7 * 32 + 6] == s.x[1 * 128 + 2]);
    CHECK(p.x[0] == s.x[8 * 128 + 8]);
    const auto d2 = extract_patches(all, Split::train, 64, 60);
    CHECK(d2.size() == 4);
    CHECK(d2[0].x.shape() == Shape{12, 4, 64, 64});
    CHECK(d2[0].y.size() == 3600);
  }
  CHECK_THROWS_AS(extract_patches(s, Split::train, 256, 16), ConfigError);
}

TEST_CASE("dataset round trip and load errors") {
  const fs::path dir = fs::temp_directory_path() / "statt_test_dataset";
  fs::remove_all(dir);
  GenConfig g;
  g.scene = small_scene(40);
  g.noise_fraction = 0.25;
  const SceneDataset s = build_dataset(g);
  save_dataset(dir, s);
  const SceneDataset r = load_dataset(dir);
  CHECK(r.x == s.x);
  CHECK(r.y == s.y);
  CHECK(r.split == s.split);
  CHECK(r.noisy_steps == s.noisy_steps);
  CHECK(r.class_names == s.class_names);
  CHECK(r.normalization.mean == s.normalization.mean);
  CHECK(r.normalization.stddev == s.normalization.stddev);
  CHECK(r.field_count == s.field_count);

  SUBCASE("regenerating gives identical files") {
    const fs::path other = dir.string() + "_again";
    save_dataset(other, build_dataset(g));
    for (const char* f : {"manifest.json", "X.bin", "Y.bin", "splits.json"}) {
      CHECK(binary_io::read_file(dir / f) == binary_io::read_file(other / f));
    }
    fs::remove_all(other);
  }
  SUBCASE("truncated X.bin") {
    auto bytes = binary_io::read_file(dir / "X.bin");
    bytes.pop_back();
    binary_io::write_file_atomic(dir / "X.bin", bytes);
    try {
      load_dataset(dir);
      FAIL("expected IoError");
    } catch (const IoError& e) {
      CHECK(std::string(e.what()).find("size mismatch") != std::string::npos);
    }
  }
  SUBCASE("unknown version") {
    auto text = binary_io::read_file(dir / "manifest.json");
    auto j = nlohmann::json::parse(text.begin(), text.end());
    j["version"] = 9;
    binary_io::write_text_atomic(dir / "manifest.json", j.dump());
    try {
      load_dataset(dir);
      FAIL("expected IoError");
    } catch (const IoError& e) {
      CHECK(std::string(e.what()).find("version") != std::string::npos);
    }
  }
  SUBCASE("missing split file") {
    fs::remove(dir / "splits.json");
    CHECK_THROWS_AS(load_dataset(dir), IoError);
  }
  SUBCASE("bad split name") {
    binary_io::write_text_atomic(dir / "splits.json", R"({"rows":1,"cols":1,"cells":["dev"]})");
    CHECK_THROWS_AS(load_dataset(dir), IoError);
  }
  fs::remove_all(dir);
}

TEST_CASE("X.bin size follows the manifest dims") {
  const fs::path dir = fs::temp_directory_path() / "statt_test_dims";
  fs::remove_all(dir);
  SceneDataset s;
  s.steps = 2;
  s.channels = 3;
  s.height = 4;
  s.width = 5;
  s.class_names = {"a", "b"};
  s.x = Tensor<float>({2, 3, 4, 5}, 1.5f);
  s.y.assign(20, 1);
  s.split = grid_split(4, 5, {1, 1}, {1.0, 0.0, 0.0}, 0);
  save_dataset(dir, s);
  CHECK(fs::file_size(dir / "X.bin") == 480);
  CHECK(fs::file_size(dir / "Y.bin") == 20);
  CHECK(load_dataset(dir).x == s.x);
  fs::remove_all(dir);
}
