#include "statt/model.hpp"

#include <cmath>
#include <random>

#include "statt/json_util.hpp"
#include "statt/ops.hpp"
#include "statt/rng.hpp"

namespace statt {

std::string to_string(AggregationMode mode) { return mode == AggregationMode::attention ? "attention" : "mean"; }

AggregationMode parse_aggregation_mode(const std::string& s) {
  if (s == "attention") return AggregationMode::attention;
  if (s == "mean") return AggregationMode::mean;
  throw ConfigError("mode", "expected 'attention' or 'mean', got '" + s + "'");
}

void ModelConfig::validate() const {
  if (steps < 2) throw ConfigError("/steps", "T must be >= 2");
  if (channels < 1) throw ConfigError("/channels", "C must be >= 1");
  if (classes < 2) throw ConfigError("/classes", "L must be >= 2");
  if (classes > 255) throw ConfigError("/classes", "L must be < 255 (255 is the ignore label)");
  if (blocks < 1) throw ConfigError("/blocks", "K must be >= 1");
  if (base_channels < 1) throw ConfigError("/base_channels", "must be >= 1");
  if (lstm_hidden < 1) throw ConfigError("/lstm_hidden", "U must be >= 1");
  if (attn_hidden < 1) throw ConfigError("/attn_hidden", "must be >= 1");
  if (blocks >= 16 || in_size == 0 || in_size % (std::size_t{1} << blocks) != 0) {
    throw ConfigError("/in_size", "must be divisible by 2^blocks");
  }
  if (out_size < 1 || out_size > in_size) throw ConfigError("/out_size", "must satisfy 1 <= out_size <= in_size");
}

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.steps = 4;
  c.channels = 2;
  c.classes = 3;
  c.in_size = 16;
  c.out_size = 8;
  c.blocks = 2;
  c.base_channels = 4;
  c.lstm_hidden = 8;
  c.attn_hidden = 8;
  return c;
}

ModelConfig ModelConfig::desk() {
  ModelConfig c;
  c.blocks = 2;
  c.base_channels = 8;
  c.lstm_hidden = 16;
  c.attn_hidden = 16;
  return c;
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"steps", c.steps},
          {"channels", c.channels},
          {"classes", c.classes},
          {"in_size", c.in_size},
          {"out_size", c.out_size},
          {"blocks", c.blocks},
          {"base_channels", c.base_channels},
          {"lstm_hidden", c.lstm_hidden},
          {"attn_hidden", c.attn_hidden},
          {"mode", to_string(c.mode)}};
}

ModelConfig model_config_from_json(const nlohmann::json& j, const std::string& path) {
  json_util::ObjectReader r(j, path);
  r.reject_unknown({"steps", "channels", "classes", "in_size", "out_size", "blocks", "base_channels", "lstm_hidden",
                    "attn_hidden", "mode"});
  ModelConfig c;
  c.steps = r.get("steps", c.steps);
  c.channels = r.get("channels", c.channels);
  c.classes = r.get("classes", c.classes);
  c.in_size = r.get("in_size", c.in_size);
  c.out_size = r.get("out_size", c.out_size);
  c.blocks = r.get("blocks", c.blocks);
  c.base_channels = r.get("base_channels", c.base_channels);
  c.lstm_hidden = r.get("lstm_hidden", c.lstm_hidden);
  c.attn_hidden = r.get("attn_hidden", c.attn_hidden);
  const std::string mode = r.get<std::string>("mode", to_string(c.mode));
  if (mode != "attention" && mode != "mean") throw ConfigError(r.field("mode"), "expected 'attention' or 'mean'");
  c.mode = parse_aggregation_mode(mode);
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(path + e.field(), e.what());
  }
  return c;
}

namespace {

const char* const kGates[4] = {"F", "I", "O", "G"};

// Parameter layout shared by init_params and parameter_count.
struct ParamSpec {
  std::string name;
  Shape shape;
  enum Kind { conv, transposed, dense, bias, forget_bias } kind;
};

std::vector<ParamSpec> param_specs(const ModelConfig& c) {
  std::vector<ParamSpec> specs;
  const std::size_t u = c.lstm_hidden, cp = c.bottleneck_channels();
  std::size_t cin = c.channels;
  for (std::size_t k = 0; k < c.blocks; ++k) {
    const std::size_t ch = c.block_channels(k);
    const std::string pre = "enc" + std::to_string(k);
    specs.push_back({pre + ".conv1.weight", {ch, cin, 3, 3}, ParamSpec::conv});
    specs.push_back({pre + ".conv1.bias", {ch}, ParamSpec::bias});
    specs.push_back({pre + ".conv2.weight", {ch, ch, 3, 3}, ParamSpec::conv});
    specs.push_back({pre + ".conv2.bias", {ch}, ParamSpec::bias});
    cin = ch;
  }
  for (const char* dir : {"fwd", "bwd"}) {
    const std::string pre = std::string("lstm.") + dir;
    for (const char* g : kGates) specs.push_back({pre + ".W_H_" + g, {u, u}, ParamSpec::dense});
    for (const char* g : kGates) specs.push_back({pre + ".W_Z_" + g, {u, cp}, ParamSpec::dense});
    for (const char* g : kGates) {
      specs.push_back({pre + ".b_" + g, {u}, std::string(g) == "F" ? ParamSpec::forget_bias : ParamSpec::bias});
    }
  }
  specs.push_back({"attn.fc1.weight", {c.attn_hidden, 2 * u}, ParamSpec::dense});
  specs.push_back({"attn.fc1.bias", {c.attn_hidden}, ParamSpec::bias});
  specs.push_back({"attn.fc2.weight", {1, c.attn_hidden}, ParamSpec::dense});
  specs.push_back({"attn.fc2.bias", {1}, ParamSpec::bias});
  specs.push_back({"dec.proj.weight", {cp, 2 * u, 1, 1}, ParamSpec::conv});
  specs.push_back({"dec.proj.bias", {cp}, ParamSpec::bias});
  for (std::size_t k = c.blocks; k-- > 0;) {
    const std::size_t ch = c.block_channels(k);
    const std::size_t up_in = (k + 1 == c.blocks) ? cp : c.block_channels(k + 1);
    const std::string pre = "dec" + std::to_string(k);
    specs.push_back({pre + ".up.weight", {up_in, ch, 2, 2}, ParamSpec::transposed});
    specs.push_back({pre + ".conv1.weight", {ch, 2 * ch, 3, 3}, ParamSpec::conv});
    specs.push_back({pre + ".conv1.bias", {ch}, ParamSpec::bias});
    specs.push_back({pre + ".conv2.weight", {ch, ch, 3, 3}, ParamSpec::conv});
    specs.push_back({pre + ".conv2.bias", {ch}, ParamSpec::bias});
  }
  specs.push_back({"cls.weight", {c.classes, c.base_channels, 1, 1}, ParamSpec::conv});
  specs.push_back({"cls.bias", {c.classes}, ParamSpec::bias});
  return specs;
}

}  // namespace

std::size_t parameter_count(const ModelConfig& c) {
  c.validate();
  const std::size_t u = c.lstm_hidden, cp = c.bottleneck_channels(), a = c.attn_hidden;
  std::size_t n = 0;
  std::size_t cin = c.channels;
  for (std::size_t k = 0; k < c.blocks; ++k) {
    const std::size_t ch = c.block_channels(k);
    n += ch * cin * 9 + ch + ch * ch * 9 + ch;
    cin = ch;
  }
  n += 2 * (4 * u * u + 4 * u * cp + 4 * u);
  n += a * 2 * u + a + a + 1;
  n += cp * 2 * u + cp;
  for (std::size_t k = 0; k < c.blocks; ++k) {
    const std::size_t ch = c.block_channels(k);
    const std::size_t up_in = (k + 1 == c.blocks) ? cp : c.block_channels(k + 1);
    n += up_in * ch * 4 + ch * 2 * ch * 9 + ch + ch * ch * 9 + ch;
  }
  n += c.classes * c.base_channels + c.classes;
  return n;
}

std::string parameter_group(const std::string& name) {
  if (name.rfind("enc", 0) == 0) return "encoder";
  if (name.rfind("lstm.fwd", 0) == 0) return "lstm_forward";
  if (name.rfind("lstm.bwd", 0) == 0) return "lstm_backward";
  if (name.rfind("attn", 0) == 0) return "attention";
  if (name.rfind("dec", 0) == 0) return "decoder";
  if (name.rfind("cls", 0) == 0) return "classifier";
  return "other";
}

template <typename T>
ModelParams<T> init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ModelParams<T> params;
  const auto specs = param_specs(config);
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const ParamSpec& s = specs[i];
    Tensor<T> t(s.shape);
    double fan_in = 0, fan_out = 0;
    switch (s.kind) {
      case ParamSpec::conv: {
        const double rf = static_cast<double>(s.shape[2] * s.shape[3]);
        fan_in = static_cast<double>(s.shape[1]) * rf;
        fan_out = static_cast<double>(s.shape[0]) * rf;
        break;
      }
      case ParamSpec::transposed: {
        const double rf = static_cast<double>(s.shape[2] * s.shape[3]);
        fan_in = static_cast<double>(s.shape[0]) * rf;
        fan_out = static_cast<double>(s.shape[1]) * rf;
        break;
      }
      case ParamSpec::dense:
        fan_in = static_cast<double>(s.shape[1]);
        fan_out = static_cast<double>(s.shape[0]);
        break;
      case ParamSpec::forget_bias:
        t.fill(T(1));
        break;
      case ParamSpec::bias:
        break;
    }
    if (fan_in > 0) {
      const double limit = std::sqrt(6.0 / (fan_in + fan_out));
      std::mt19937_64 rng(derive_seed(seed, i));
      std::uniform_real_distribution<double> dist(-limit, limit);
      for (T& v : t.values()) v = static_cast<T>(dist(rng));
    }
    params.add(s.name, std::move(t));
  }
  return params;
}

template <typename T>
BoundParams<T>::BoundParams(Graph<T>& graph, const ModelParams<T>& params, bool trainable) : graph_(&graph) {
  for (const auto& e : params) {
    vars_.emplace(e.name, trainable ? graph.parameter(e.name, e.value) : graph.constant(e.value));
  }
}

template <typename T>
Var<T> BoundParams<T>::operator()(const std::string& name) const {
  auto it = vars_.find(name);
  if (it == vars_.end()) throw ContractError("model parameter '" + name + "' is not bound");
  return it->second;
}

template <typename T>
ModelParams<T> BoundParams<T>::gradients(const ModelParams<T>& like) const {
  ModelParams<T> out;
  for (const auto& e : like) out.add(e.name, graph_->grad((*this)(e.name)));
  return out;
}

template <typename T>
LstmWeights<T> fuse_lstm_weights(const BoundParams<T>& p, const std::string& direction) {
  const std::string pre = "lstm." + direction + ".";
  std::vector<Var<T>> wh, wz, b;
  for (const char* g : kGates) {
    wh.push_back(p(pre + "W_H_" + g));
    wz.push_back(p(pre + "W_Z_" + g));
    b.push_back(p(pre + "b_" + g));
  }
  LstmWeights<T> w;
  w.w_h = ops::concat(std::span<const Var<T>>(wh), 0);
  w.w_z = ops::concat(std::span<const Var<T>>(wz), 0);
  w.bias = ops::concat(std::span<const Var<T>>(b), 0);
  w.hidden = wh[0].shape()[0];
  return w;
}

template <typename T>
EncoderOutput<T> encoder_forward(Var<T> x, const BoundParams<T>& p, const ModelConfig& config) {
  const Shape& xs = x.shape();
  if (xs.size() != 3 || xs[0] != config.channels || xs[1] != config.in_size || xs[2] != config.in_size) {
    throw DimensionError("encoder_forward: expected input [" + std::to_string(config.channels) + "," +
                         std::to_string(config.in_size) + "," + std::to_string(config.in_size) + "], got " +
                         shape_string(xs));
  }
  EncoderOutput<T> out;
  Var<T> h = x;
  for (std::size_t k = 0; k < config.blocks; ++k) {
    const std::string pre = "enc" + std::to_string(k);
    h = ops::relu(ops::conv2d(h, p(pre + ".conv1.weight"), p(pre + ".conv1.bias"), ops::Padding::same));
    h = ops::relu(ops::conv2d(h, p(pre + ".conv2.weight"), p(pre + ".conv2.bias"), ops::Padding::same));
    out.skips.push_back(h);
    h = ops::maxpool2d(h);
  }
  out.bottleneck = h;
  return out;
}

template <typename T>
LstmState<T> lstm_step(Var<T> h_prev, Var<T> c_prev, Var<T> input_projection, const LstmWeights<T>& w) {
  const std::size_t u = w.hidden;
  const std::size_t axis = input_projection.shape().size() - 1;
  if (input_projection.shape()[axis] != 4 * u) {
    throw DimensionError("lstm_step: input projection last axis must be 4U = " + std::to_string(4 * u));
  }
  if (h_prev.shape() != c_prev.shape()) throw DimensionError("lstm_step: H and C state shapes differ");
  Var<T> pre = ops::add(input_projection, ops::affine(h_prev, w.w_h, Var<T>()));
  Var<T> f = ops::sigmoid(ops::slice(pre, axis, 0, u));
  Var<T> i = ops::sigmoid(ops::slice(pre, axis, u, u));
  Var<T> o = ops::sigmoid(ops::slice(pre, axis, 2 * u, u));
  Var<T> g = ops::tanh(ops::slice(pre, axis, 3 * u, u));
  Var<T> c = ops::add(ops::hadamard(f, c_prev), ops::hadamard(i, g));
  Var<T> h = ops::hadamard(o, ops::tanh(c));
  return {h, c};
}

template <typename T>
LstmState<T> lstm_cell(Var<T> h_prev, Var<T> c_prev, Var<T> z, const LstmWeights<T>& w) {
  return lstm_step(h_prev, c_prev, ops::affine(z, w.w_z, w.bias), w);
}

template <typename T>
Var<T> bilstm_forward(Var<T> z_seq, const LstmWeights<T>& forward, const LstmWeights<T>& backward) {
  const Shape& zs = z_seq.shape();
  if (zs.size() != 4) throw DimensionError("bilstm_forward: expected [T,C',H',W'], got " + shape_string(zs));
  const std::size_t steps = zs[0], cp = zs[1], pixels = zs[2] * zs[3], u = forward.hidden;
  if (steps < 2) throw ContractError("bilstm_forward: T must be >= 2, got " + std::to_string(steps));
  Graph<T>& g = z_seq.graph();
  // Pixel-major rows: [T*P, C'].
  Var<T> rows = ops::reshape(ops::transpose_last2(ops::reshape(z_seq, {steps, cp, pixels})), {steps * pixels, cp});

  auto run = [&](const LstmWeights<T>& w, bool reverse) {
    Var<T> proj = ops::reshape(ops::affine(rows, w.w_z, w.bias), {steps, pixels, 4 * u});
    LstmState<T> state{g.constant(Tensor<T>({pixels, u})), g.constant(Tensor<T>({pixels, u}))};
    std::vector<Var<T>> hs(steps);
    for (std::size_t n = 0; n < steps; ++n) {
      const std::size_t t = reverse ? steps - 1 - n : n;
      Var<T> step_proj = ops::reshape(ops::slice(proj, 0, t, 1), {pixels, 4 * u});
      state = lstm_step(state.h, state.c, step_proj, w);
      hs[t] = state.h;
    }
    return hs;
  };
  const std::vector<Var<T>> hf = run(forward, false);
  const std::vector<Var<T>> hb = run(backward, true);
  std::vector<Var<T>> merged(steps);
  for (std::size_t t = 0; t < steps; ++t) merged[t] = ops::concat({hf[t], hb[t]}, 1);
  Var<T> seq = ops::transpose_last2(ops::stack(std::span<const Var<T>>(merged)));  // [T,2U,P]
  return ops::reshape(seq, {steps, 2 * u, zs[2], zs[3]});
}

template <typename T>
Var<T> attention_weights(Var<T> h_seq, const BoundParams<T>& p) {
  const Shape& hs = h_seq.shape();
  if (hs.size() != 4) throw DimensionError("attention_weights: expected [T,2U,H',W'], got " + shape_string(hs));
  const std::size_t steps = hs[0], width = hs[1], pixels = hs[2] * hs[3];
  Var<T> rows = ops::transpose_last2(ops::reshape(h_seq, {steps, width, pixels}));  // [T,P,2U]
  Var<T> hidden = ops::tanh(ops::affine(rows, p("attn.fc1.weight"), p("attn.fc1.bias")));
  Var<T> scores = ops::affine(hidden, p("attn.fc2.weight"), p("attn.fc2.bias"));  // [T,P,1]
  return ops::softmax(ops::mean(scores, {1, 2}), 0);
}

template <typename T>
Var<T> aggregate(Var<T> h_seq, Var<T> alpha) {
  return ops::weighted_sum(h_seq, alpha);
}

template <typename T>
std::vector<Var<T>> aggregate_skips(const std::vector<std::vector<Var<T>>>& skips, Var<T> alpha) {
  std::vector<Var<T>> out;
  out.reserve(skips.size());
  for (const auto& per_t : skips) {
    if (per_t.size() != alpha.shape()[0]) {
      throw DimensionError("aggregate_skips: " + std::to_string(per_t.size()) + " time steps vs alpha length " +
                           std::to_string(alpha.shape()[0]));
    }
    out.push_back(ops::weighted_sum(ops::stack(std::span<const Var<T>>(per_t)), alpha));
  }
  return out;
}

template <typename T>
Var<T> decoder_forward(Var<T> aggregated, const std::vector<Var<T>>& skip_aggregates, const BoundParams<T>& p,
                       const ModelConfig& config) {
  if (skip_aggregates.size() != config.blocks) {
    throw DimensionError("decoder_forward: expected " + std::to_string(config.blocks) + " skip maps, got " +
                         std::to_string(skip_aggregates.size()));
  }
  Var<T> h = ops::conv2d(aggregated, p("dec.proj.weight"), p("dec.proj.bias"), ops::Padding::same);
  for (std::size_t k = config.blocks; k-- > 0;) {
    const std::string pre = "dec" + std::to_string(k);
    Var<T> up = ops::transposed_conv2d(h, p(pre + ".up.weight"));
    const Shape& us = up.shape();
    const Shape& ss = skip_aggregates[k].shape();
    if (us[1] != ss[1] || us[2] != ss[2]) {
      throw DimensionError("decoder_forward: upsampled " + shape_string(us) + " vs skip " + shape_string(ss) +
                           " at level " + std::to_string(k));
    }
    h = ops::concat({up, skip_aggregates[k]}, 0);
    h = ops::relu(ops::conv2d(h, p(pre + ".conv1.weight"), p(pre + ".conv1.bias"), ops::Padding::same));
    h = ops::relu(ops::conv2d(h, p(pre + ".conv2.weight"), p(pre + ".conv2.bias"), ops::Padding::same));
  }
  Var<T> logits = ops::conv2d(h, p("cls.weight"), p("cls.bias"), ops::Padding::same);
  return ops::center_crop(logits, config.out_size, config.out_size);
}

template <typename T>
ForwardTrace<T> statt_forward(Var<T> x, const BoundParams<T>& p, const ModelConfig& config) {
  const Shape& xs = x.shape();
  if (xs.size() != 4 || xs[0] != config.steps) {
    throw DimensionError("statt_forward: expected [" + std::to_string(config.steps) + ",C,H,W] input, got " +
                         shape_string(xs));
  }
  ForwardTrace<T> trace;
  trace.skips.assign(config.blocks, {});
  std::vector<Var<T>> bottlenecks;
  for (std::size_t t = 0; t < config.steps; ++t) {
    Var<T> frame = ops::reshape(ops::slice(x, 0, t, 1), {xs[1], xs[2], xs[3]});
    EncoderOutput<T> enc = encoder_forward(frame, p, config);
    bottlenecks.push_back(enc.bottleneck);
    for (std::size_t k = 0; k < config.blocks; ++k) trace.skips[k].push_back(enc.skips[k]);
  }
  Var<T> z_seq = ops::stack(std::span<const Var<T>>(bottlenecks));
  trace.h_seq = bilstm_forward(z_seq, fuse_lstm_weights(p, "fwd"), fuse_lstm_weights(p, "bwd"));
  if (config.mode == AggregationMode::attention) {
    trace.alpha = attention_weights(trace.h_seq, p);
  } else {
    trace.alpha = p.graph().constant(Tensor<T>({config.steps}, T(1) / static_cast<T>(config.steps)));
  }
  trace.aggregated = aggregate(trace.h_seq, trace.alpha);
  trace.skip_aggregates = aggregate_skips(trace.skips, trace.alpha);
  trace.logits = decoder_forward(trace.aggregated, trace.skip_aggregates, p, config);
  trace.probs = ops::softmax(trace.logits, 0);
  return trace;
}

template <typename T>
Var<T> cross_entropy_loss(std::span<const Var<T>> probs, std::span<const std::span<const std::uint8_t>> labels) {
  if (probs.size() != labels.size() || probs.empty()) {
    throw ContractError("cross_entropy_loss: need one label grid per prediction");
  }
  std::size_t valid = 0;
  for (const auto& l : labels) valid += ops::count_labeled(l);
  if (valid == 0) throw ContractError("cross_entropy_loss: every pixel is ignored (empty loss)");
  Var<T> total;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    Var<T> term = ops::cross_entropy(probs[i], labels[i], static_cast<T>(valid));
    total = total.valid() ? ops::add(total, term) : term;
  }
  return total;
}

template <typename T>
Prediction<T> predict(const ModelParams<T>& params, const ModelConfig& config, const Tensor<T>& x) {
  Graph<T> g;
  BoundParams<T> p(g, params, false);
  ForwardTrace<T> trace = statt_forward(g.constant(x), p, config);
  return {trace.alpha.value(), trace.probs.value()};
}

#define STATT_INSTANTIATE_MODEL(T)                                                                            \
  template ModelParams<T> init_params<T>(const ModelConfig&, std::uint64_t);                                  \
  template class BoundParams<T>;                                                                              \
  template LstmWeights<T> fuse_lstm_weights<T>(const BoundParams<T>&, const std::string&);                    \
  template EncoderOutput<T> encoder_forward<T>(Var<T>, const BoundParams<T>&, const ModelConfig&);            \
  template LstmState<T> lstm_step<T>(Var<T>, Var<T>, Var<T>, const LstmWeights<T>&);                          \
  template LstmState<T> lstm_cell<T>(Var<T>, Var<T>, Var<T>, const LstmWeights<T>&);                          \
  template Var<T> bilstm_forward<T>(Var<T>, const LstmWeights<T>&, const LstmWeights<T>&);                    \
  template Var<T> attention_weights<T>(Var<T>, const BoundParams<T>&);                                        \
  template Var<T> aggregate<T>(Var<T>, Var<T>);                                                               \
  template std::vector<Var<T>> aggregate_skips<T>(const std::vector<std::vector<Var<T>>>&, Var<T>);           \
  template Var<T> decoder_forward<T>(Var<T>, const std::vector<Var<T>>&, const BoundParams<T>&,               \
                                     const ModelConfig&);                                                     \
  template ForwardTrace<T> statt_forward<T>(Var<T>, const BoundParams<T>&, const ModelConfig&);               \
  template Var<T> cross_entropy_loss<T>(std::span<const Var<T>>, std::span<const std::span<const std::uint8_t>>); \
  template Prediction<T> predict<T>(const ModelParams<T>&, const ModelConfig&, const Tensor<T>&);

STATT_INSTANTIATE_MODEL(float)
STATT_INSTANTIATE_MODEL(double)

}  // namespace statt
