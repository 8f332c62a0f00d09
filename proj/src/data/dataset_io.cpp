#include <set>

#include "statt/binary_io.hpp"
#include "statt/data.hpp"
#include "statt/errors.hpp"
#include "statt/json_util.hpp"

namespace statt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kDatasetVersion = 1;

json read_json(const fs::path& path) {
  const auto text = binary_io::read_file(path);
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::exception& e) {
    throw IoError(path.filename().string() + ": " + e.what());
  }
}

}  // namespace

void save_dataset(const fs::path& dir, const SceneDataset& scene) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  const std::size_t x_bytes = scene.x.size() * 4;
  json manifest = {
      {"version", kDatasetVersion},
      {"dims", {{"T", scene.steps}, {"C", scene.channels}, {"H", scene.height}, {"W", scene.width},
                {"L", scene.class_count()}}},
      {"class_names", scene.class_names},
      {"seed", scene.seed},
      {"field_count", scene.field_count},
      {"noisy_steps", scene.noisy_steps},
      {"normalization", {{"applied", scene.normalization.applied},
                         {"mean", scene.normalization.mean},
                         {"stddev", scene.normalization.stddev}}},
      {"files", {{"X", {{"name", "X.bin"}, {"bytes", x_bytes}}},
                 {"Y", {{"name", "Y.bin"}, {"bytes", scene.y.size()}}},
                 {"splits", {{"name", "splits.json"}}}}},
  };
  json cells = json::array();
  for (Split s : scene.split.cells) cells.push_back(to_string(s));
  const json splits = {{"rows", scene.split.rows}, {"cols", scene.split.cols}, {"cells", cells}};

  binary_io::write_file_atomic(dir / "X.bin", binary_io::encode_f32le(scene.x.values()));
  binary_io::write_file_atomic(
      dir / "Y.bin", std::span<const char>(reinterpret_cast<const char*>(scene.y.data()), scene.y.size()));
  binary_io::write_text_atomic(dir / "splits.json", splits.dump(1) + "\n");
  binary_io::write_text_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

SceneDataset load_dataset(const fs::path& dir) {
  const json manifest = read_json(dir / "manifest.json");
  SceneDataset scene;
  try {
    json_util::ObjectReader r(manifest, "manifest.json");
    const int version = r.require<int>("version");
    if (version != kDatasetVersion) {
      throw IoError("manifest.json/version: unsupported dataset version " + std::to_string(version));
    }
    json_util::ObjectReader dims(r.raw("dims"), r.field("dims"));
    scene.steps = dims.require<std::size_t>("T");
    scene.channels = dims.require<std::size_t>("C");
    scene.height = dims.require<std::size_t>("H");
    scene.width = dims.require<std::size_t>("W");
    const auto L = dims.require<std::size_t>("L");
    scene.class_names = r.require<std::vector<std::string>>("class_names");
    if (scene.class_names.size() != L) throw IoError("manifest.json/class_names: expected " + std::to_string(L) + " names");
    if (scene.steps == 0 || scene.channels == 0 || scene.height == 0 || scene.width == 0) {
      throw IoError("manifest.json/dims: dimensions must be positive");
    }
    scene.seed = r.require<std::uint64_t>("seed");
    scene.field_count = r.get<std::size_t>("field_count", 0);
    scene.noisy_steps = r.get<std::vector<std::size_t>>("noisy_steps", {});
    for (std::size_t t : scene.noisy_steps)
      if (t >= scene.steps) throw IoError("manifest.json/noisy_steps: step " + std::to_string(t) + " out of range");
    json_util::ObjectReader norm(r.raw("normalization"), r.field("normalization"));
    scene.normalization.applied = norm.require<bool>("applied");
    scene.normalization.mean = norm.require<std::vector<double>>("mean");
    scene.normalization.stddev = norm.require<std::vector<double>>("stddev");
    if (scene.normalization.applied &&
        (scene.normalization.mean.size() != scene.channels || scene.normalization.stddev.size() != scene.channels)) {
      throw IoError("manifest.json/normalization: expected one mean/stddev per channel");
    }
  } catch (const ConfigError& e) {
    throw IoError(std::string(e.what()));
  }

  const auto x_bytes = binary_io::read_file(dir / "X.bin");
  const std::size_t expected_x = scene.steps * scene.channels * scene.height * scene.width * 4;
  if (x_bytes.size() != expected_x) {
    throw IoError("X.bin: size mismatch, manifest dims imply " + std::to_string(expected_x) + " bytes, file has " +
                  std::to_string(x_bytes.size()));
  }
  scene.x = Tensor<float>({scene.steps, scene.channels, scene.height, scene.width}, binary_io::decode_f32le(x_bytes));

  const auto y_bytes = binary_io::read_file(dir / "Y.bin");
  if (y_bytes.size() != scene.height * scene.width) {
    throw IoError("Y.bin: size mismatch, manifest dims imply " + std::to_string(scene.height * scene.width) +
                  " bytes, file has " + std::to_string(y_bytes.size()));
  }
  scene.y.assign(reinterpret_cast<const std::uint8_t*>(y_bytes.data()),
                 reinterpret_cast<const std::uint8_t*>(y_bytes.data()) + y_bytes.size());
  for (std::size_t i = 0; i < scene.y.size(); ++i) {
    if (scene.y[i] != kIgnore && scene.y[i] >= scene.class_count()) {
      throw IoError("Y.bin: label " + std::to_string(scene.y[i]) + " at pixel " + std::to_string(i) +
                    " is not a class id");
    }
  }

  const json splits = read_json(dir / "splits.json");
  try {
    json_util::ObjectReader r(splits, "splits.json");
    scene.split.height = scene.height;
    scene.split.width = scene.width;
    scene.split.rows = r.require<std::size_t>("rows");
    scene.split.cols = r.require<std::size_t>("cols");
    if (scene.split.rows < 1 || scene.split.cols < 1 || scene.split.rows > scene.height ||
        scene.split.cols > scene.width) {
      throw IoError("splits.json/rows: grid does not fit the scene");
    }
    const auto cells = r.require<std::vector<std::string>>("cells");
    if (cells.size() != scene.split.rows * scene.split.cols) {
      throw IoError("splits.json/cells: expected " + std::to_string(scene.split.rows * scene.split.cols) + " entries");
    }
    for (const auto& c : cells) scene.split.cells.push_back(parse_split(c));
  } catch (const ConfigError& e) {
    throw IoError("splits.json: " + std::string(e.what()));
  }
  return scene;
}

}  // namespace statt
