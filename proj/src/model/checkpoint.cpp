#include "statt/checkpoint.hpp"

#include "statt/binary_io.hpp"
#include "statt/json_util.hpp"

namespace statt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {
constexpr int kCheckpointVersion = 1;
}

void save_checkpoint(const fs::path& dir, const ModelConfig& config, const ModelParams<float>& params) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  json entries = json::array();
  std::vector<float> flat;
  flat.reserve(params.element_count());
  for (const auto& e : params) {
    entries.push_back({{"name", e.name}, {"shape", e.value.shape()}, {"offset", flat.size() * 4},
                       {"count", e.value.size()}});
    flat.insert(flat.end(), e.value.values().begin(), e.value.values().end());
  }
  const json manifest = {{"version", kCheckpointVersion},
                         {"dtype", "f32le"},
                         {"model_config", to_json(config)},
                         {"params", entries},
                         {"total_bytes", flat.size() * 4}};
  binary_io::write_file_atomic(dir / "params.bin", binary_io::encode_f32le(flat));
  binary_io::write_text_atomic(dir / "params.json", manifest.dump(2) + "\n");
}

Checkpoint load_checkpoint(const fs::path& dir) {
  const auto text = binary_io::read_file(dir / "params.json");
  json manifest;
  try {
    manifest = json::parse(text.begin(), text.end());
  } catch (const json::exception& e) {
    throw IoError("params.json: " + std::string(e.what()));
  }
  json_util::ObjectReader r(manifest, "params.json");
  const int version = r.require<int>("version");
  if (version != kCheckpointVersion) throw IoError("params.json/version: unsupported version " + std::to_string(version));
  if (r.require<std::string>("dtype") != "f32le") throw IoError("params.json/dtype: only f32le is supported");
  Checkpoint ck;
  ck.config = model_config_from_json(r.raw("model_config"), "params.json/model_config");

  const auto bytes = binary_io::read_file(dir / "params.bin");
  const std::size_t total = r.require<std::size_t>("total_bytes");
  if (bytes.size() != total) {
    throw IoError("params.bin: size mismatch, manifest says " + std::to_string(total) + " bytes, file has " +
                  std::to_string(bytes.size()));
  }
  const std::vector<float> flat = binary_io::decode_f32le(bytes);
  for (const json& e : r.raw("params")) {
    json_util::ObjectReader er(e, "params.json/params");
    const auto name = er.require<std::string>("name");
    const auto shape = er.require<Shape>("shape");
    const auto offset = er.require<std::size_t>("offset");
    const auto count = er.require<std::size_t>("count");
    if (shape_size(shape) != count || offset % 4 != 0 || offset / 4 + count > flat.size()) {
      throw IoError("params.json: entry '" + name + "' is inconsistent with params.bin");
    }
    ck.params.add(name, Tensor<float>(shape, std::vector<float>(flat.begin() + static_cast<std::ptrdiff_t>(offset / 4),
                                                                flat.begin() + static_cast<std::ptrdiff_t>(offset / 4 + count))));
  }
  // Shapes must agree with the declared model.
  const ModelParams<float> expected = init_params<float>(ck.config, 0);
  if (expected.size() != ck.params.size()) {
    throw ConfigError("params.json/params", "parameter count does not match model_config");
  }
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (expected[i].name != ck.params[i].name || expected[i].value.shape() != ck.params[i].value.shape()) {
      throw ConfigError("params.json/params/" + ck.params[i].name, "name or shape does not match model_config (expected " +
                                                                     expected[i].name + " " +
                                                                     shape_string(expected[i].value.shape()) + ")");
    }
  }
  return ck;
}

}  // namespace statt
