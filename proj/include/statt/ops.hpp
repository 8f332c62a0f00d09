#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "statt/graph.hpp"

namespace statt::ops {

enum class Padding { same, valid };
enum class Activation { sigmoid, tanh, relu };
enum class Elementwise { add, hadamard };

inline constexpr std::uint8_t kIgnoreLabel = 255;

/// 2-D cross-correlation of [Cin,H,W] with [Cout,Cin,k,k] plus per-channel
/// bias. k must be odd. `same` zero-pads by k/2.
template <typename T>
Var<T> conv2d(Var<T> input, Var<T> kernel, Var<T> bias, Padding padding);

/// Fractionally strided 2x2 upsampling: [Cin,H,W] x [Cin,Cout,2,2] ->
/// [Cout,2H,2W]. Only stride 2 is supported.
template <typename T>
Var<T> transposed_conv2d(Var<T> input, Var<T> kernel, std::size_t stride = 2);

/// Non-overlapping 2x2 max. Gradient goes to the first maximum in row-major
/// order within each block.
template <typename T>
Var<T> maxpool2d(Var<T> input);

/// x W^T + b over the last axis of x; leading axes are batch. `bias` may be
/// an invalid Var for no bias.
template <typename T>
Var<T> affine(Var<T> x, Var<T> weight, Var<T> bias);

template <typename T>
Var<T> activation(Var<T> x, Activation kind);

/// Max-subtracted softmax along `axis`.
template <typename T>
Var<T> softmax(Var<T> x, std::size_t axis);

template <typename T>
Var<T> elementwise(Var<T> x, Var<T> y, Elementwise kind);

template <typename T>
Var<T> concat(std::span<const Var<T>> xs, std::size_t axis);

template <typename T>
Var<T> slice(Var<T> x, std::size_t axis, std::size_t start, std::size_t length);

/// Stacks equal-shaped tensors along a new leading axis.
template <typename T>
Var<T> stack(std::span<const Var<T>> xs);

template <typename T>
Var<T> reshape(Var<T> x, Shape shape);

/// Swaps the last two axes.
template <typename T>
Var<T> transpose_last2(Var<T> x);

/// Arithmetic mean over the listed axes (distinct, in range). Reducing every
/// axis yields shape [1].
template <typename T>
Var<T> mean(Var<T> x, std::vector<std::size_t> axes);

/// Sum of all elements, shape [1].
template <typename T>
Var<T> sum(Var<T> x);

template <typename T>
Var<T> scale(Var<T> x, T factor);

/// sum_t weights[t] * stacked[t, ...] for stacked of shape [T, ...].
template <typename T>
Var<T> weighted_sum(Var<T> stacked, Var<T> weights);

/// Centered spatial crop of [C,H,W]; offsets are (H-out_h)/2, (W-out_w)/2.
template <typename T>
Var<T> center_crop(Var<T> x, std::size_t out_h, std::size_t out_w);

/// sum over non-ignored pixels of -log(max(p_true, 1e-12)), divided by
/// `normalizer`. probs is [L,H,W]; labels is H*W class ids.
template <typename T>
Var<T> cross_entropy(Var<T> probs, std::span<const std::uint8_t> labels, T normalizer);

std::size_t count_labeled(std::span<const std::uint8_t> labels);

// Convenience wrappers.
template <typename T>
Var<T> add(Var<T> x, Var<T> y) {
  return elementwise(x, y, Elementwise::add);
}
template <typename T>
Var<T> hadamard(Var<T> x, Var<T> y) {
  return elementwise(x, y, Elementwise::hadamard);
}
template <typename T>
Var<T> sigmoid(Var<T> x) {
  return activation(x, Activation::sigmoid);
}
template <typename T>
Var<T> tanh(Var<T> x) {
  return activation(x, Activation::tanh);
}
template <typename T>
Var<T> relu(Var<T> x) {
  return activation(x, Activation::relu);
}
template <typename T>
Var<T> concat(std::initializer_list<Var<T>> xs, std::size_t axis) {
  return concat(std::span<const Var<T>>(xs.begin(), xs.size()), axis);
}

}  // namespace statt::ops
