#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "statt/graph.hpp"
#include "statt/param_set.hpp"

namespace statt {

enum class AggregationMode { attention, mean };

std::string to_string(AggregationMode mode);
AggregationMode parse_aggregation_mode(const std::string& s);

struct ModelConfig {
  std::size_t steps = 12;          // T
  std::size_t channels = 4;        // C
  std::size_t classes = 4;         // L
  std::size_t in_size = 32;
  std::size_t out_size = 16;
  std::size_t blocks = 3;          // encoder depth K
  std::size_t base_channels = 16;  // block 1 width, doubling per block
  std::size_t lstm_hidden = 256;   // U
  std::size_t attn_hidden = 64;
  AggregationMode mode = AggregationMode::attention;

  /// Channels of encoder block k (0-based).
  std::size_t block_channels(std::size_t k) const { return base_channels << k; }
  /// Bottleneck width C'.
  std::size_t bottleneck_channels() const { return block_channels(blocks - 1); }
  std::size_t bottleneck_size() const { return in_size >> blocks; }

  /// Throws ConfigError naming the offending field.
  void validate() const;

  /// Small configuration used for gradient checks.
  static ModelConfig tiny();
  /// Desk-scale configuration used by the synthetic experiments.
  static ModelConfig desk();

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

nlohmann::json to_json(const ModelConfig& config);
/// Missing fields take their defaults; unknown fields are rejected.
ModelConfig model_config_from_json(const nlohmann::json& j, const std::string& path = "");

template <typename T>
using ModelParams = ParamSet<T>;

/// Exact parameter count implied by the configuration.
std::size_t parameter_count(const ModelConfig& config);

/// Gradient-check reporting group of a parameter name (encoder,
/// lstm_forward, lstm_backward, attention, decoder, classifier).
std::string parameter_group(const std::string& name);

/// Glorot-uniform weights, zero biases except LSTM forget-gate bias = 1.
/// Values are generated in double precision and then rounded, so float and
/// double parameter sets from one seed agree to float precision.
template <typename T>
ModelParams<T> init_params(const ModelConfig& config, std::uint64_t seed);

/// Parameters registered as leaves of one graph. With trainable = false they
/// are bound as constants and no backward closures are recorded.
template <typename T>
class BoundParams {
 public:
  BoundParams(Graph<T>& graph, const ModelParams<T>& params, bool trainable = true);
  Var<T> operator()(const std::string& name) const;
  Graph<T>& graph() const { return *graph_; }
  /// Copies parameter gradients out of the graph after backward().
  ModelParams<T> gradients(const ModelParams<T>& like) const;

 private:
  Graph<T>* graph_;
  std::map<std::string, Var<T>> vars_;
};

/// Gate weights of one LSTM direction, fused as [F;I;O;G] row blocks.
template <typename T>
struct LstmWeights {
  Var<T> w_h;   // [4U, U]
  Var<T> w_z;   // [4U, C']
  Var<T> bias;  // [4U]
  std::size_t hidden = 0;
};

/// direction is "fwd" or "bwd".
template <typename T>
LstmWeights<T> fuse_lstm_weights(const BoundParams<T>& p, const std::string& direction);

template <typename T>
struct LstmState {
  Var<T> h;
  Var<T> c;
};

template <typename T>
struct EncoderOutput {
  Var<T> bottleneck;          // [C', in/2^K, in/2^K]
  std::vector<Var<T>> skips;  // pre-pool output of each block
};

template <typename T>
EncoderOutput<T> encoder_forward(Var<T> x, const BoundParams<T>& p, const ModelConfig& config);

/// One LSTM step for a batch of independent rows: h_prev, c_prev [..., U],
/// z [..., C'].
template <typename T>
LstmState<T> lstm_cell(Var<T> h_prev, Var<T> c_prev, Var<T> z, const LstmWeights<T>& w);

/// Same step given the precomputed input projection W_Z z + b [..., 4U].
template <typename T>
LstmState<T> lstm_step(Var<T> h_prev, Var<T> c_prev, Var<T> input_projection, const LstmWeights<T>& w);

/// [T,C',H',W'] -> [T,2U,H',W']; channels [0,U) are the forward direction,
/// [U,2U) the backward direction's state after consuming steps T..t.
template <typename T>
Var<T> bilstm_forward(Var<T> z_seq, const LstmWeights<T>& forward, const LstmWeights<T>& backward);

/// Softmax over t of the spatial mean of the scorer output. Returns [T].
template <typename T>
Var<T> attention_weights(Var<T> h_seq, const BoundParams<T>& p);

/// sum_t alpha_t * H^t.
template <typename T>
Var<T> aggregate(Var<T> h_seq, Var<T> alpha);

/// skips[k][t] is block k's output at time t; returns one aggregate per block.
template <typename T>
std::vector<Var<T>> aggregate_skips(const std::vector<std::vector<Var<T>>>& skips, Var<T> alpha);

template <typename T>
Var<T> decoder_forward(Var<T> aggregated, const std::vector<Var<T>>& skip_aggregates, const BoundParams<T>& p,
                       const ModelConfig& config);

template <typename T>
struct ForwardTrace {
  Var<T> alpha;                         // [T]
  Var<T> h_seq;                         // [T,2U,H',W']
  std::vector<std::vector<Var<T>>> skips;  // [block][t]
  Var<T> aggregated;                    // C
  std::vector<Var<T>> skip_aggregates;  // S_k
  Var<T> logits;                        // [L,out,out]
  Var<T> probs;
};

/// x is [T,C,in,in].
template <typename T>
ForwardTrace<T> statt_forward(Var<T> x, const BoundParams<T>& p, const ModelConfig& config);

/// Mean of -log p(true class) over all labeled pixels of a batch.
/// Throws ContractError when every pixel is ignored.
template <typename T>
Var<T> cross_entropy_loss(std::span<const Var<T>> probs, std::span<const std::span<const std::uint8_t>> labels);

/// Forward-only evaluation of one patch.
template <typename T>
struct Prediction {
  Tensor<T> alpha;
  Tensor<T> probs;
};

template <typename T>
Prediction<T> predict(const ModelParams<T>& params, const ModelConfig& config, const Tensor<T>& x);

}  // namespace statt

#include "statt/grad_check.hpp"

namespace statt {

/// One labeled training example: x [T,C,in,in], y out*out class ids.
template <typename T>
struct LabeledPatch {
  Tensor<T> x;
  std::vector<std::uint8_t> y;
};

/// Batch loss (mean over labeled pixels of the batch) as a function of the
/// parameters, evaluated in 64-bit precision, for grad_check. A non-empty
/// `fault_op` corrupts that op's backward pass (negative control).
Objective make_loss_objective(const ModelConfig& config, std::vector<LabeledPatch<double>> batch,
                              std::string fault_op = {}, double fault_factor = 1.0);

/// Deterministic random batch for gradient checks: N(0,1) inputs, uniform
/// labels with roughly 10% ignored pixels.
std::vector<LabeledPatch<double>> random_batch(const ModelConfig& config, std::size_t count, std::uint64_t seed);

}  // namespace statt
