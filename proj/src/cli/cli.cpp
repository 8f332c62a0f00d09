#include "statt/cli.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "statt/binary_io.hpp"
#include "statt/charts.hpp"
#include "statt/checkpoint.hpp"
#include "statt/data.hpp"
#include "statt/errors.hpp"
#include "statt/grad_check.hpp"
#include "statt/json_util.hpp"
#include "statt/parallel.hpp"
#include "statt/simd.hpp"
#include "statt/train.hpp"

#ifndef STATT_VERSION
#define STATT_VERSION "0.0.0"
#endif

namespace statt {

const char* library_version() { return STATT_VERSION; }

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using Seconds = std::chrono::duration<double>;

constexpr double kGradThreshold = 1e-4;
constexpr std::size_t kGradParamLimit = 1'000'000;

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return Seconds(std::chrono::steady_clock::now() - start).count();
}

json read_config(const std::string& path) {
  const auto bytes = binary_io::read_file(path);
  try {
    return json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw ConfigError(path, std::string("invalid JSON: ") + e.what());
  }
}

std::string fixed(double v, const char* format = "%.9g") {
  char buf[48];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

// Resolved configuration, seeds, paths and wall-clock times of one command.
// Written last, so its presence marks a completed run.
class RunManifest {
 public:
  RunManifest(const std::string& command, const std::vector<std::string>& args) : started_(utc_now()) {
    j_["command"] = command;
    j_["argv"] = args;
    j_["library_version"] = library_version();
    j_["simd"] = std::string(simd::isa_name(simd::active_isa()));
    j_["threads"] = worker_count();
  }
  json& operator[](const char* key) { return j_[key]; }
  void write(const fs::path& path) {
    j_["started_at"] = started_;
    j_["finished_at"] = utc_now();
    binary_io::write_text_atomic(path, j_.dump(2) + "\n");
  }

 private:
  json j_;
  std::string started_;
};

void create_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

fs::path manifest_beside(const fs::path& file) {
  fs::path p = file;
  p.replace_extension(".run_manifest.json");
  return p;
}

void require_dims(const ModelConfig& m, std::size_t steps, std::size_t channels, std::size_t classes) {
  auto check = [](const char* field, std::size_t model, std::size_t data) {
    if (model != data) {
      throw ConfigError(std::string("/model/") + field,
                        "model has " + std::to_string(model) + ", dataset has " + std::to_string(data));
    }
  };
  check("steps", m.steps, steps);
  check("channels", m.channels, channels);
  check("classes", m.classes, classes);
}

ModelConfig desk_for(std::size_t steps, std::size_t channels, std::size_t classes) {
  ModelConfig m = ModelConfig::desk();
  m.steps = steps;
  m.channels = channels;
  m.classes = classes;
  return m;
}

// A checkpoint fits a dataset when its parameter shapes are the ones the
// dataset dimensions imply; the first differing tensor is named.
void require_compatible(const Checkpoint& ck, const SceneDataset& data) {
  ModelConfig want = ck.config;
  want.steps = data.steps;
  want.channels = data.channels;
  want.classes = data.class_count();
  if (want == ck.config) return;
  const auto expected = init_params<float>(want, 0);
  for (std::size_t i = 0; i < expected.size() && i < ck.params.size(); ++i) {
    if (expected[i].value.shape() != ck.params[i].value.shape()) {
      throw DimensionError("checkpoint tensor " + ck.params[i].name + " has shape " +
                           shape_string(ck.params[i].value.shape()) + ", dataset needs " +
                           shape_string(expected[i].value.shape()));
    }
  }
  throw DimensionError("checkpoint was trained for T=" + std::to_string(ck.config.steps) + ", dataset has T=" +
                       std::to_string(data.steps));
}

std::vector<double> parse_fractions(const std::string& text) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string cell;
  while (std::getline(in, cell, ',')) {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(cell, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != cell.size()) throw ConfigError("/fractions", "'" + cell + "' is not a number");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("/fractions", "at least one fraction is required");
  return out;
}

// ---------------------------------------------------------------- gen

struct GenArgs {
  std::string config, out;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

int cmd_gen(const GenArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
  GenConfig g = a.config.empty() ? GenConfig{} : gen_config_from_json(read_config(a.config));
  if (a.seed_set) g.scene.seed = a.seed;
  g.validate();
  RunManifest manifest("gen", argv);
  const auto start = std::chrono::steady_clock::now();
  const SceneDataset data = build_dataset(g);
  save_dataset(a.out, data);
  manifest["config"] = to_json(g);
  manifest["seeds"] = {{"scene", g.scene.seed}};
  manifest["inputs"] = {{"config", a.config}};
  manifest["outputs"] = {{"dataset", a.out}, {"files", {"manifest.json", "X.bin", "Y.bin", "splits.json"}}};
  manifest["timing"] = {{"seconds", seconds_since(start)}};
  manifest.write(fs::path(a.out) / "run_manifest.json");
  out << "wrote " << a.out << ": " << data.height << "x" << data.width << ", T=" << data.steps
      << ", fields=" << data.field_count << ", noisy steps=" << data.noisy_steps.size() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string data, model, train, mode, out;
};

int cmd_train(const TrainArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
  const SceneDataset data = load_dataset(a.data);
  ModelConfig m = a.model.empty() ? desk_for(data.steps, data.channels, data.class_count())
                                  : model_config_from_json(read_config(a.model), "/model");
  require_dims(m, data.steps, data.channels, data.class_count());
  TrainConfig tc = a.train.empty() ? TrainConfig{} : train_config_from_json(read_config(a.train), "/train");
  if (!a.mode.empty()) tc.mode = parse_aggregation_mode(a.mode);
  m.mode = tc.mode;
  m.validate();

  RunManifest manifest("train", argv);
  const auto train_p = extract_patches(data, Split::train, m.in_size, m.out_size);
  const auto val_p = extract_patches(data, Split::val, m.in_size, m.out_size);
  const auto test_p = extract_patches(data, Split::test, m.in_size, m.out_size);
  out << "patches: train " << train_p.size() << ", val " << val_p.size() << ", test " << test_p.size()
      << "; parameters " << parameter_count(m) << "\n";

  const TrainResult r = train(m, init_params<float>(m, tc.seed), train_p, val_p, data.class_names, tc,
                              [&](const EpochRecord& e) {
                                out << "epoch " << e.epoch << " loss " << fixed(e.train_loss, "%.4f") << " val F1 "
                                    << fixed(e.val_mean_f1, "%.4f") << " (" << fixed(e.seconds, "%.1f") << " s)\n";
                                out.flush();
                              });
  const auto test_start = std::chrono::steady_clock::now();
  const Metrics metrics = evaluate(r.best_params, m, test_p, data.class_names, tc.threads);
  const double test_seconds = seconds_since(test_start);

  const fs::path dir(a.out);
  create_dir(dir);
  save_checkpoint(dir / "checkpoint", m, r.best_params);
  binary_io::write_text_atomic(dir / "history.csv", history_csv(r.history));
  binary_io::write_text_atomic(dir / "metrics.json", to_json(metrics).dump(2) + "\n");

  double epoch_seconds = 0;
  for (const auto& e : r.history) epoch_seconds += e.seconds;
  manifest["config"] = {{"model", to_json(m)}, {"train", to_json(tc)}};
  manifest["seeds"] = {{"init", tc.seed}, {"shuffle", tc.seed}, {"dataset", data.seed}};
  manifest["inputs"] = {{"data", a.data}, {"model", a.model}, {"train", a.train}};
  manifest["outputs"] = {{"checkpoint", (dir / "checkpoint").string()},
                         {"history", (dir / "history.csv").string()},
                         {"metrics", (dir / "metrics.json").string()}};
  manifest["timing"] = {{"train_seconds_per_epoch", epoch_seconds / static_cast<double>(r.history.size())},
                        {"epochs_run", r.history.size()},
                        {"test_seconds", test_seconds}};
  manifest["best_epoch"] = r.best_epoch;
  manifest.write(dir / "run_manifest.json");
  out << "best epoch " << r.best_epoch << ", test mean F1 " << fixed(metrics.mean_f1, "%.4f") << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string data, ckpt, split = "test", out;
};

int cmd_eval(const EvalArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
  const Split split = parse_split(a.split);
  const SceneDataset data = load_dataset(a.data);
  const Checkpoint ck = load_checkpoint(a.ckpt);
  require_compatible(ck, data);
  RunManifest manifest("eval", argv);
  const auto patches = extract_patches(data, split, ck.config.in_size, ck.config.out_size);
  if (patches.empty()) throw ConfigError("/split", "split '" + a.split + "' has no patches");
  const auto start = std::chrono::steady_clock::now();
  const Metrics metrics = evaluate(ck.params, ck.config, patches, data.class_names);
  const double seconds = seconds_since(start);
  const fs::path path(a.out);
  if (path.has_parent_path()) create_dir(path.parent_path());
  binary_io::write_text_atomic(path, to_json(metrics).dump(2) + "\n");
  manifest["config"] = {{"model", to_json(ck.config)}, {"split", a.split}};
  manifest["seeds"] = {{"dataset", data.seed}};
  manifest["inputs"] = {{"data", a.data}, {"checkpoint", a.ckpt}};
  manifest["outputs"] = {{"metrics", a.out}};
  manifest["timing"] = {{"test_seconds", seconds}};
  manifest.write(manifest_beside(path));
  out << a.split << " mean F1 " << fixed(metrics.mean_f1, "%.4f") << " over " << patches.size() << " patches\n";
  return kExitOk;
}

// ---------------------------------------------------------------- noise-sweep

struct SweepArgs {
  std::string config, fractions = "0,0.25,0.5", out;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

struct SweepBundle {
  ModelConfig model;
  TrainConfig train;
  GenConfig scene;
  std::uint64_t seed = 0;
};

SweepBundle read_bundle(const std::string& path) {
  SweepBundle b;
  json j = path.empty() ? json::object() : read_config(path);
  json_util::ObjectReader r(j, "");
  r.reject_unknown({"model", "train", "scene", "seed"});
  if (r.has("scene")) b.scene = gen_config_from_json(r.raw("scene"), "/scene");
  const auto& sc = b.scene.scene;
  b.model = r.has("model") ? model_config_from_json(r.raw("model"), "/model")
                           : desk_for(sc.steps, sc.channels, sc.class_count());
  if (r.has("train")) b.train = train_config_from_json(r.raw("train"), "/train");
  b.seed = r.get<std::uint64_t>("seed", 0);
  return b;
}

int cmd_noise_sweep(const SweepArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
  SweepBundle b = read_bundle(a.config);
  if (a.seed_set) b.seed = a.seed;
  const std::vector<double> fractions = parse_fractions(a.fractions);
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    if (!(fractions[i] >= 0 && fractions[i] <= 0.5)) {
      throw ConfigError("/fractions/" + std::to_string(i), "must lie in [0, 0.5]");
    }
  }
  require_dims(b.model, b.scene.scene.steps, b.scene.scene.channels, b.scene.scene.class_count());
  b.scene.validate();
  b.model.validate();

  RunManifest manifest("noise-sweep", argv);
  const auto start = std::chrono::steady_clock::now();
  const auto rows = noise_sweep(b.model, b.train, b.scene, fractions, b.seed, [&](const std::string& line) {
    out << line << "\n";
    out.flush();
  });
  std::vector<std::string> names;
  for (const auto& c : b.scene.scene.classes) names.push_back(c.name);
  const std::string csv = sweep_csv(rows, names);

  std::string alpha = "fraction,t,alpha_mean,noisy\n";
  for (const auto& row : rows) {
    for (std::size_t t = 0; t < row.alpha_profile.size(); ++t) {
      const bool noisy = std::find(row.noisy_steps.begin(), row.noisy_steps.end(), t) != row.noisy_steps.end();
      alpha += fixed(row.fraction, "%.6g") + "," + std::to_string(t) + "," + fixed(row.alpha_profile[t]) + "," +
               (noisy ? "1" : "0") + "\n";
    }
  }

  const fs::path dir(a.out);
  create_dir(dir);
  binary_io::write_text_atomic(dir / "sweep.csv", csv);
  binary_io::write_text_atomic(dir / "sweep.svg", charts::sweep_svg(csv));
  binary_io::write_text_atomic(dir / "sweep_attention.csv", alpha);
  json config = {{"model", to_json(b.model)}, {"train", to_json(b.train)}, {"scene", to_json(b.scene)},
                 {"seed", b.seed}};
  manifest["config"] = config;
  manifest["fractions"] = fractions;
  manifest["seeds"] = {{"scene", b.seed}, {"init", b.seed}, {"shuffle", b.seed}};
  manifest["inputs"] = {{"config", a.config}};
  manifest["outputs"] = {{"csv", (dir / "sweep.csv").string()},
                         {"svg", (dir / "sweep.svg").string()},
                         {"attention", (dir / "sweep_attention.csv").string()}};
  manifest["timing"] = {{"seconds", seconds_since(start)}};
  manifest.write(dir / "run_manifest.json");
  return kExitOk;
}

// ---------------------------------------------------------------- attn

struct AttnArgs {
  std::string data, ckpt, split = "test", cls, out;
};

int cmd_attn(const AttnArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
  const Split split = parse_split(a.split);
  const SceneDataset data = load_dataset(a.data);
  std::vector<std::size_t> classes;
  if (a.cls == "all") {
    for (std::size_t l = 0; l < data.class_count(); ++l) classes.push_back(l);
  } else if (!a.cls.empty()) {
    auto it = std::find(data.class_names.begin(), data.class_names.end(), a.cls);
    if (it == data.class_names.end()) {
      std::string known;
      for (const auto& n : data.class_names) known += (known.empty() ? "" : ", ") + n;
      throw ConfigError("/class", "unknown class '" + a.cls + "'; known classes: " + known + ", all");
    }
    classes.push_back(static_cast<std::size_t>(it - data.class_names.begin()));
  }
  const Checkpoint ck = load_checkpoint(a.ckpt);
  require_compatible(ck, data);
  RunManifest manifest("attn", argv);
  const auto patches = extract_patches(data, split, ck.config.in_size, ck.config.out_size);
  if (patches.empty()) throw ConfigError("/split", "split '" + a.split + "' has no patches");
  const AttentionProfile prof = attention_profile(ck.params, ck.config, patches, data.class_count());

  std::string csv = "t,alpha_mean";
  for (std::size_t l : classes) csv += ",alpha_class_" + data.class_names[l];
  csv += "\n";
  for (std::size_t t = 0; t < prof.mean.size(); ++t) {
    csv += std::to_string(t) + "," + fixed(prof.mean[t]);
    for (std::size_t l : classes) csv += "," + (prof.per_class[l].empty() ? std::string() : fixed(prof.per_class[l][t]));
    csv += "\n";
  }
  const fs::path dir(a.out);
  create_dir(dir);
  binary_io::write_text_atomic(dir / "attention.csv", csv);
  binary_io::write_text_atomic(dir / "attention.svg", charts::attention_svg(csv));
  json counts = json::object();
  for (std::size_t l : classes) counts[data.class_names[l]] = prof.class_patches[l];
  manifest["config"] = {{"model", to_json(ck.config)}, {"split", a.split}, {"class", a.cls}};
  manifest["seeds"] = {{"dataset", data.seed}};
  manifest["inputs"] = {{"data", a.data}, {"checkpoint", a.ckpt}};
  manifest["outputs"] = {{"csv", (dir / "attention.csv").string()}, {"svg", (dir / "attention.svg").string()}};
  manifest["patches"] = {{"total", prof.patches}, {"per_class", counts}};
  manifest.write(dir / "run_manifest.json");
  out << "attention profile over " << prof.patches << " " << a.split << " patches written to " << a.out << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- gradcheck

struct GradArgs {
  std::string model, out, fault_op;
  std::uint64_t seed = 0;
  std::size_t samples = 100, batch = 2;
  double eps = 1e-3, fault_factor = 1.5;
  bool allow_large = false;
};

int cmd_gradcheck(const GradArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
  const ModelConfig m = a.model.empty() ? ModelConfig::tiny() : model_config_from_json(read_config(a.model), "/model");
  m.validate();
  if (a.samples == 0) throw ConfigError("/samples", "must be >= 1");
  if (a.batch == 0) throw ConfigError("/batch", "must be >= 1");
  if (!(a.eps > 0)) throw ConfigError("/eps", "must be > 0");
  const std::size_t count = parameter_count(m);
  if (count > kGradParamLimit && !a.allow_large) {
    throw ConfigError("/model", std::to_string(count) + " parameters; finite differences on more than " +
                                    std::to_string(kGradParamLimit) + " need --allow-large");
  }
  RunManifest manifest("gradcheck", argv);
  const auto start = std::chrono::steady_clock::now();
  const auto params = init_params<double>(m, a.seed);
  const Objective f = make_loss_objective(m, random_batch(m, a.batch, a.seed), a.fault_op, a.fault_factor);
  const GradCheckResult r = grad_check(f, params, a.eps, a.samples, a.seed, parameter_group);
  const double seconds = seconds_since(start);
  const bool pass = r.max_relative_error < kGradThreshold;

  out << "parameters " << count << ", samples " << r.samples.size() << ", eps " << fixed(a.eps, "%g")
      << ", kink redraws " << r.redraws << "\n";
  json groups = json::object();
  for (const auto& [group, err] : r.group_max) {
    out << "  " << group << ": " << fixed(err, "%.3e") << "\n";
    groups[group] = err;
  }
  out << "max relative error " << fixed(r.max_relative_error, "%.3e") << " (threshold " << fixed(kGradThreshold, "%g")
      << "): " << (pass ? "PASS" : "FAIL") << "\n";

  if (!a.out.empty()) {
    const fs::path dir(a.out);
    create_dir(dir);
    json samples = json::array();
    for (const auto& s : r.samples) {
      samples.push_back({{"param", s.param}, {"index", s.index}, {"analytic", s.analytic}, {"numeric", s.numeric},
                         {"relative_error", s.relative_error}});
    }
    const json report = {{"max_relative_error", r.max_relative_error}, {"threshold", kGradThreshold},
                         {"pass", pass},  {"groups", groups}, {"redraws", r.redraws}, {"samples", samples}};
    binary_io::write_text_atomic(dir / "gradcheck.json", report.dump(2) + "\n");
    manifest["config"] = {{"model", to_json(m)}, {"samples", a.samples}, {"batch", a.batch}, {"eps", a.eps}};
    manifest["seeds"] = {{"init", a.seed}, {"batch", a.seed}, {"sampling", a.seed}};
    manifest["inputs"] = {{"model", a.model}};
    manifest["outputs"] = {{"report", (dir / "gradcheck.json").string()}};
    manifest["timing"] = {{"seconds", seconds}};
    manifest.write(dir / "run_manifest.json");
  }
  return pass ? kExitOk : kExitCheckFailed;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"STATT: spatio-temporal attention segmentation on synthetic crop scenes", "statt"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen", "Generate a synthetic scene dataset");
  gen_cmd->add_option("--config", gen.config, "Scene/generation config (JSON)");
  gen_cmd->add_option("--seed", gen.seed, "Scene seed (overrides the config)");
  gen_cmd->add_option("--out", gen.out, "Dataset directory")->required();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a model and score the test split");
  train_cmd->add_option("--data", tr.data, "Dataset directory")->required();
  train_cmd->add_option("--model", tr.model, "Model config (JSON); default: desk preset sized to the data");
  train_cmd->add_option("--train", tr.train, "Training config (JSON)");
  train_cmd->add_option("--mode", tr.mode, "Aggregation mode")->check(CLI::IsMember({"attention", "mean"}));
  train_cmd->add_option("--out", tr.out, "Run directory")->required();

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint on one split");
  eval_cmd->add_option("--data", ev.data, "Dataset directory")->required();
  eval_cmd->add_option("--ckpt", ev.ckpt, "Checkpoint directory")->required();
  eval_cmd->add_option("--split", ev.split, "train, val or test")->capture_default_str();
  eval_cmd->add_option("--out", ev.out, "Metrics JSON path")->required();

  SweepArgs sw;
  auto* sweep_cmd = app.add_subcommand("noise-sweep", "Train both modes over noise fractions");
  sweep_cmd->add_option("--config", sw.config, "Bundle {model, train, scene, seed} (JSON)");
  sweep_cmd->add_option("--fractions", sw.fractions, "Comma-separated fractions in [0, 0.5]")->capture_default_str();
  sweep_cmd->add_option("--seed", sw.seed, "Seed for scene, noise and training (overrides the bundle)");
  sweep_cmd->add_option("--out", sw.out, "Output directory")->required();

  AttnArgs at;
  auto* attn_cmd = app.add_subcommand("attn", "Dump the attention profile of a checkpoint");
  attn_cmd->add_option("--data", at.data, "Dataset directory")->required();
  attn_cmd->add_option("--ckpt", at.ckpt, "Checkpoint directory")->required();
  attn_cmd->add_option("--split", at.split, "train, val or test")->capture_default_str();
  attn_cmd->add_option("--class", at.cls, "Class name or 'all' for per-class columns");
  attn_cmd->add_option("--out", at.out, "Output directory")->required();

  GradArgs gc;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of the full model gradient");
  grad_cmd->add_option("--model", gc.model, "Model config (JSON); default: tiny preset");
  grad_cmd->add_option("--seed", gc.seed)->capture_default_str();
  grad_cmd->add_option("--samples", gc.samples, "Sampled parameters")->capture_default_str();
  grad_cmd->add_option("--eps", gc.eps, "Central-difference step")->capture_default_str();
  grad_cmd->add_option("--batch", gc.batch, "Random patches in the loss")->capture_default_str();
  grad_cmd->add_flag("--allow-large", gc.allow_large, "Permit models above 10^6 parameters");
  grad_cmd->add_option("--out", gc.out, "Directory for gradcheck.json and the run manifest");
  // Negative control for tests: scales the backward pass of one op type.
  grad_cmd->add_option("--inject-fault", gc.fault_op)->group("");
  grad_cmd->add_option("--fault-factor", gc.fault_factor)->group("");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }
  gen.seed_set = gen_cmd->count("--seed") > 0;
  sw.seed_set = sweep_cmd->count("--seed") > 0;

  try {
    if (*gen_cmd) return cmd_gen(gen, args, out);
    if (*train_cmd) return cmd_train(tr, args, out);
    if (*eval_cmd) return cmd_eval(ev, args, out);
    if (*sweep_cmd) return cmd_noise_sweep(sw, args, out);
    if (*attn_cmd) return cmd_attn(at, args, out);
    if (*grad_cmd) return cmd_gradcheck(gc, args, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ContractError& e) {
    err << "contract error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DimensionError& e) {
    err << "dimension error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    err << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitConfig;
}

}  // namespace statt
