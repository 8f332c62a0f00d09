#include "statt/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "statt/simd.hpp"

namespace statt::ops {
namespace {

template <typename T>
void require_same_graph(Var<T> a, Var<T> b, const char* op) {
  if (&a.graph() != &b.graph()) throw ContractError(std::string(op) + ": operands live in different graphs");
}

// Folds a stream of small discrete choices into the graph's branch signature.
class BranchHasher {
 public:
  void push(std::uint64_t value, unsigned bits) {
    if (used_ + bits > 64) flush();
    word_ |= value << used_;
    used_ += bits;
  }
  std::uint64_t finish() {
    flush();
    return hash_;
  }

 private:
  void flush() {
    hash_ = mix64(hash_ ^ word_);
    word_ = 0;
    used_ = 0;
  }
  std::uint64_t word_ = 0, hash_ = 0;
  unsigned used_ = 0;
};

[[noreturn]] void dim_error(const std::string& op, const std::string& detail) {
  throw DimensionError(op + ": " + detail);
}

// Output columns [lo, hi) of a kernel tap at offset `tap` that read inside
// an input row of width w.
inline void valid_range(std::size_t tap, std::size_t pad, std::size_t w, std::size_t wo, std::size_t& lo,
                        std::size_t& hi) {
  lo = tap < pad ? pad - tap : 0;
  hi = std::min(wo, w + pad > tap ? w + pad - tap : 0);
  if (hi < lo) hi = lo;
}

// Lowers [Cin,H,W] into columns [Cin*k*k, Ho*Wo] for a stride-1 correlation
// with zero padding `pad`.
template <typename T>
void im2col(const T* in, std::size_t cin, std::size_t h, std::size_t w, std::size_t k, std::size_t pad,
            std::size_t ho, std::size_t wo, T* col) {
  for (std::size_t c = 0; c < cin; ++c) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        T* row = col + ((c * k + ky) * k + kx) * ho * wo;
        std::size_t lo, hi;
        valid_range(kx, pad, w, wo, lo, hi);
        for (std::size_t y = 0; y < ho; ++y) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + ky) - static_cast<std::ptrdiff_t>(pad);
          T* out = row + y * wo;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) {
            std::fill(out, out + wo, T(0));
            continue;
          }
          const T* src = in + (c * h + static_cast<std::size_t>(iy)) * w + kx - pad;
          std::fill(out, out + lo, T(0));
          std::copy(src + lo, src + hi, out + lo);
          std::fill(out + hi, out + wo, T(0));
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, std::size_t cin, std::size_t h, std::size_t w, std::size_t k, std::size_t pad,
                std::size_t ho, std::size_t wo, T* in) {
  for (std::size_t c = 0; c < cin; ++c) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const T* row = col + ((c * k + ky) * k + kx) * ho * wo;
        std::size_t lo, hi;
        valid_range(kx, pad, w, wo, lo, hi);
        for (std::size_t y = 0; y < ho; ++y) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + ky) - static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          T* dst = in + (c * h + static_cast<std::size_t>(iy)) * w + kx - pad;
          const T* src = row + y * wo;
          for (std::size_t x = lo; x < hi; ++x) dst[x] += src[x];
        }
      }
    }
  }
}

// Per-thread scratch reused across calls; grows, never shrinks.
template <typename T, int Slot>
T* scratch(std::size_t n) {
  thread_local std::vector<T> buf;
  if (buf.size() < n) buf.resize(n);
  return buf.data();
}

// Outer/axis/inner decomposition of a shape around one axis.
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

std::size_t count_labeled(std::span<const std::uint8_t> labels) {
  return static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](std::uint8_t v) { return v != kIgnoreLabel; }));
}

template <typename T>
Var<T> conv2d(Var<T> input, Var<T> kernel, Var<T> bias, Padding padding) {
  require_same_graph(input, kernel, "conv2d");
  require_same_graph(input, bias, "conv2d");
  const Shape& is = input.shape();
  const Shape& ks = kernel.shape();
  if (is.size() != 3) dim_error("conv2d", "input must be [Cin,H,W], got " + shape_string(is));
  if (ks.size() != 4 || ks[2] != ks[3]) dim_error("conv2d", "kernel must be [Cout,Cin,k,k], got " + shape_string(ks));
  if (ks[2] % 2 == 0) dim_error("conv2d", "kernel size must be odd, got " + std::to_string(ks[2]));
  if (ks[1] != is[0]) {
    dim_error("conv2d", "input channels (axis 0 = " + std::to_string(is[0]) + ") do not match kernel axis 1 (" +
                            std::to_string(ks[1]) + ")");
  }
  if (bias.shape() != Shape{ks[0]}) {
    dim_error("conv2d", "bias must be [" + std::to_string(ks[0]) + "], got " + shape_string(bias.shape()));
  }
  const std::size_t cin = is[0], h = is[1], w = is[2], cout = ks[0], k = ks[2];
  const std::size_t pad = padding == Padding::same ? k / 2 : 0;
  if (padding == Padding::valid && (h < k || w < k)) dim_error("conv2d", "valid padding needs H,W >= k");
  const std::size_t ho = h + 2 * pad - k + 1, wo = w + 2 * pad - k + 1;
  const std::size_t kk = cin * k * k, p = ho * wo;
  const bool pointwise = (k == 1);

  Tensor<T> out({cout, ho, wo});
  {
    const T* cols = input.value().data();
    if (!pointwise) {
      T* col = scratch<T, 0>(kk * p);
      im2col(input.value().data(), cin, h, w, k, pad, ho, wo, col);
      cols = col;
    }
    simd::gemm<T>(false, false, cout, p, kk, kernel.value().data(), kk, cols, p, out.data(), p, false);
    const T* b = bias.value().data();
    for (std::size_t c = 0; c < cout; ++c) {
      T* row = out.data() + c * p;
      for (std::size_t i = 0; i < p; ++i) row[i] += b[c];
    }
  }
  const std::size_t xi = input.id(), ki = kernel.id(), bi = bias.id();
  auto backward = [=](Graph<T>& g, std::size_t self) {
    const Tensor<T>& dout = g.node(self).grad;
    const T* x = g.value(xi).data();
    const T* cols = x;
    if (g.requires_grad(ki)) {
      if (!pointwise) {
        T* col = scratch<T, 0>(kk * p);
        im2col(x, cin, h, w, k, pad, ho, wo, col);
        cols = col;
      }
      simd::gemm<T>(false, true, cout, kk, p, dout.data(), p, cols, p, g.grad_buffer(ki).data(), kk, true);
    }
    if (g.requires_grad(bi)) {
      T* db = g.grad_buffer(bi).data();
      for (std::size_t c = 0; c < cout; ++c) {
        const T* row = dout.data() + c * p;
        T s = 0;
        for (std::size_t i = 0; i < p; ++i) s += row[i];
        db[c] += s;
      }
    }
    if (g.requires_grad(xi)) {
      T* dx = g.grad_buffer(xi).data();
      if (pointwise) {
        simd::gemm<T>(true, false, kk, p, cout, g.value(ki).data(), kk, dout.data(), p, dx, p, true);
      } else {
        T* dcol = scratch<T, 1>(kk * p);
        simd::gemm<T>(true, false, kk, p, cout, g.value(ki).data(), kk, dout.data(), p, dcol, p, false);
        col2im_add(dcol, cin, h, w, k, pad, ho, wo, dx);
      }
    }
  };
  return input.graph().record("conv2d", {xi, ki, bi}, std::move(out), backward);
}

template <typename T>
Var<T> transposed_conv2d(Var<T> input, Var<T> kernel, std::size_t stride) {
  require_same_graph(input, kernel, "transposed_conv2d");
  if (stride != 2) {
    throw ContractError("transposed_conv2d: unsupported configuration, stride " + std::to_string(stride) +
                        " (only 2 is supported)");
  }
  const Shape& is = input.shape();
  const Shape& ks = kernel.shape();
  if (is.size() != 3) dim_error("transposed_conv2d", "input must be [Cin,H,W], got " + shape_string(is));
  if (ks.size() != 4 || ks[2] != 2 || ks[3] != 2) {
    dim_error("transposed_conv2d", "kernel must be [Cin,Cout,2,2], got " + shape_string(ks));
  }
  if (ks[0] != is[0]) {
    dim_error("transposed_conv2d", "input channels (axis 0 = " + std::to_string(is[0]) +
                                       ") do not match kernel axis 0 (" + std::to_string(ks[0]) + ")");
  }
  const std::size_t cin = is[0], h = is[1], w = is[2], cout = ks[1], p = h * w;
  const std::size_t rows = cout * 4;
  // tmp[(co,a,b), (i,j)] = sum_ci K[ci,(co,a,b)] x[ci,(i,j)]
  std::vector<T> tmp(rows * p);
  simd::gemm<T>(true, false, rows, p, cin, kernel.value().data(), rows, input.value().data(), p, tmp.data(), p,
                false);
  Tensor<T> out({cout, 2 * h, 2 * w});
  const std::size_t ow = 2 * w;
  for (std::size_t co = 0; co < cout; ++co)
    for (std::size_t a = 0; a < 2; ++a)
      for (std::size_t b = 0; b < 2; ++b) {
        const T* src = tmp.data() + ((co * 2 + a) * 2 + b) * p;
        T* dst = out.data() + co * 4 * p;
        for (std::size_t i = 0; i < h; ++i)
          for (std::size_t j = 0; j < w; ++j) dst[(2 * i + a) * ow + 2 * j + b] = src[i * w + j];
      }
  const std::size_t xi = input.id(), ki = kernel.id();
  auto backward = [=](Graph<T>& g, std::size_t self) {
    const T* dout = g.node(self).grad.data();
    std::vector<T> dtmp(rows * p);
    for (std::size_t co = 0; co < cout; ++co)
      for (std::size_t a = 0; a < 2; ++a)
        for (std::size_t b = 0; b < 2; ++b) {
          T* dst = dtmp.data() + ((co * 2 + a) * 2 + b) * p;
          const T* src = dout + co * 4 * p;
          for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j) dst[i * w + j] = src[(2 * i + a) * ow + 2 * j + b];
        }
    if (g.requires_grad(xi)) {
      simd::gemm<T>(false, false, cin, p, rows, g.value(ki).data(), rows, dtmp.data(), p,
                    g.grad_buffer(xi).data(), p, true);
    }
    if (g.requires_grad(ki)) {
      simd::gemm<T>(false, true, cin, rows, p, g.value(xi).data(), p, dtmp.data(), p, g.grad_buffer(ki).data(),
                    rows, true);
    }
  };
  return input.graph().record("transposed_conv2d", {xi, ki}, std::move(out), backward);
}

template <typename T>
Var<T> maxpool2d(Var<T> input) {
  const Shape& is = input.shape();
  if (is.size() != 3) dim_error("maxpool2d", "input must be [C,H,W], got " + shape_string(is));
  if (is[1] % 2 != 0 || is[2] % 2 != 0) {
    dim_error("maxpool2d", "spatial axes 1,2 must be even, got " + shape_string(is));
  }
  const std::size_t c = is[0], h = is[1], w = is[2], ho = h / 2, wo = w / 2;
  Tensor<T> out({c, ho, wo});
  std::vector<std::size_t> argmax(c * ho * wo);
  const T* x = input.value().data();
  BranchHasher branches;
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < ho; ++i)
      for (std::size_t j = 0; j < wo; ++j) {
        std::size_t best = (ch * h + 2 * i) * w + 2 * j;
        for (std::size_t a = 0; a < 2; ++a)
          for (std::size_t b = 0; b < 2; ++b) {
            const std::size_t idx = (ch * h + 2 * i + a) * w + 2 * j + b;
            if (x[idx] > x[best]) best = idx;
          }
        const std::size_t o = (ch * ho + i) * wo + j;
        out[o] = x[best];
        argmax[o] = best;
        branches.push(((best / w) % 2) * 2 + best % 2, 2);
      }
  input.graph().note_branches(branches.finish());
  const std::size_t xi = input.id();
  auto backward = [xi, argmax = std::move(argmax)](Graph<T>& g, std::size_t self) {
    const Tensor<T>& dout = g.node(self).grad;
    T* dx = g.grad_buffer(xi).data();
    for (std::size_t o = 0; o < argmax.size(); ++o) dx[argmax[o]] += dout[o];
  };
  return input.graph().record("maxpool2d", {xi}, std::move(out), backward);
}

template <typename T>
Var<T> affine(Var<T> x, Var<T> weight, Var<T> bias) {
  require_same_graph(x, weight, "affine");
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  if (ws.size() != 2) dim_error("affine", "weight must be [m,n], got " + shape_string(ws));
  const std::size_t m = ws[0], n = ws[1];
  if (xs.back() != n) {
    dim_error("affine", "input last axis (" + std::to_string(xs.back()) + ") does not match weight axis 1 (" +
                            std::to_string(n) + ")");
  }
  const bool has_bias = bias.valid();
  if (has_bias) {
    require_same_graph(x, bias, "affine");
    if (bias.shape() != Shape{m}) dim_error("affine", "bias must be [" + std::to_string(m) + "], got " + shape_string(bias.shape()));
  }
  const std::size_t rows = x.value().size() / n;
  Shape os = xs;
  os.back() = m;
  Tensor<T> out(os);
  simd::gemm<T>(false, true, rows, m, n, x.value().data(), n, weight.value().data(), n, out.data(), m, false);
  if (has_bias) {
    const T* b = bias.value().data();
    for (std::size_t r = 0; r < rows; ++r) {
      T* row = out.data() + r * m;
      for (std::size_t j = 0; j < m; ++j) row[j] += b[j];
    }
  }
  const std::size_t xi = x.id(), wi = weight.id(), bi = has_bias ? bias.id() : 0;
  auto backward = [=](Graph<T>& g, std::size_t self) {
    const T* dy = g.node(self).grad.data();
    if (g.requires_grad(xi)) {
      simd::gemm<T>(false, false, rows, n, m, dy, m, g.value(wi).data(), n, g.grad_buffer(xi).data(), n, true);
    }
    if (g.requires_grad(wi)) {
      simd::gemm<T>(true, false, m, n, rows, dy, m, g.value(xi).data(), n, g.grad_buffer(wi).data(), n, true);
    }
    if (has_bias && g.requires_grad(bi)) {
      T* db = g.grad_buffer(bi).data();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < m; ++j) db[j] += dy[r * m + j];
    }
  };
  std::vector<std::size_t> parents{xi, wi};
  if (has_bias) parents.push_back(bi);
  return x.graph().record("affine", std::move(parents), std::move(out), backward);
}

template <typename T>
Var<T> activation(Var<T> x, Activation kind) {
  Tensor<T> out(x.shape());
  const T* in = x.value().data();
  T* o = out.data();
  const std::size_t n = out.size();
  switch (kind) {
    case Activation::sigmoid:
      for (std::size_t i = 0; i < n; ++i) o[i] = T(1) / (T(1) + std::exp(-in[i]));
      break;
    case Activation::tanh:
      for (std::size_t i = 0; i < n; ++i) o[i] = std::tanh(in[i]);
      break;
    case Activation::relu: {
      BranchHasher branches;
      for (std::size_t i = 0; i < n; ++i) {
        o[i] = in[i] > T(0) ? in[i] : T(0);
        branches.push(in[i] > T(0), 1);
      }
      x.graph().note_branches(branches.finish());
      break;
    }
  }
  const std::size_t xi = x.id();
  auto backward = [=](Graph<T>& g, std::size_t self) {
    const T* dy = g.node(self).grad.data();
    const T* y = g.value(self).data();
    T* dx = g.grad_buffer(xi).data();
    switch (kind) {
      case Activation::sigmoid:
        for (std::size_t i = 0; i < n; ++i) dx[i] += dy[i] * y[i] * (T(1) - y[i]);
        break;
      case Activation::tanh:
        for (std::size_t i = 0; i < n; ++i) dx[i] += dy[i] * (T(1) - y[i] * y[i]);
        break;
      case Activation::relu:
        for (std::size_t i = 0; i < n; ++i)
          if (y[i] > T(0)) dx[i] += dy[i];
        break;
    }
  };
  const char* name = kind == Activation::sigmoid ? "sigmoid" : kind == Activation::tanh ? "tanh" : "relu";
  return x.graph().record(name, {xi}, std::move(out), backward);
}

template <typename T>
Var<T> softmax(Var<T> x, std::size_t axis) {
  if (axis >= x.shape().size()) dim_error("softmax", "axis " + std::to_string(axis) + " out of range");
  const AxisSplit s = split_at(x.shape(), axis);
  Tensor<T> out(x.shape());
  const T* in = x.value().data();
  T* o = out.data();
  for (std::size_t a = 0; a < s.outer; ++a)
    for (std::size_t c = 0; c < s.inner; ++c) {
      const std::size_t base = a * s.extent * s.inner + c;
      T mx = in[base];
      for (std::size_t e = 1; e < s.extent; ++e) mx = std::max(mx, in[base + e * s.inner]);
      T total = 0;
      for (std::size_t e = 0; e < s.extent; ++e) {
        const T v = std::exp(in[base + e * s.inner] - mx);
        o[base + e * s.inner] = v;
        total += v;
      }
      for (std::size_t e = 0; e < s.extent; ++e) o[base + e * s.inner] /= total;
    }
  const std::size_t xi = x.id();
  auto backward = [=](Graph<T>& g, std::size_t self) {
    const T* dy = g.node(self).grad.data();
    const T* y = g.value(self).data();
    T* dx = g.grad_buffer(xi).data();
    for (std::size_t a = 0; a < s.outer; ++a)
      for (std::size_t c = 0; c < s.inner; ++c) {
        const std::size_t base = a * s.extent * s.inner + c;
        T inner = 0;
        for (std::size_t e = 0; e < s.extent; ++e) inner += dy[base + e * s.inner] * y[base + e * s.inner];
        for (std::size_t e = 0; e < s.extent; ++e) {
          const std::size_t i = base + e * s.inner;
          dx[i] += y[i] * (dy[i] - inner);
        }
      }
  };
  return x.graph().record("softmax", {xi}, std::move(out), backward);
}

template <typename T>
Var<T> elementwise(Var<T> x, Var<T> y, Elementwise kind) {
  require_same_graph(x, y, "elementwise");
  if (x.shape() != y.shape()) {
    dim_error("elementwise", "shape mismatch " + shape_string(x.shape()) + " vs " + shape_string(y.shape()));
  }
  const std::size_t n = x.value().size();
  Tensor<T> out(x.shape());
  const T* a = x.value().data();
  const T* b = y.value().data();
  T* o = out.data();
  if (kind == Elementwise::add) {
    for (std::size_t i = 0; i < n; ++i) o[i] = a[i] + b[i];
  } else {
    for (std::size_t i = 0; i < n; ++i) o[i] = a[i] * b[i];
  }
  const std::size_t xi = x.id(), yi = y.id();
  auto backward = [=](Graph<T>& g, std::size_t self) {
    const T* dy = g.node(self).grad.data();
    if (kind == Elementwise::add) {
      if (g.requires_grad(xi)) simd::axpy<T>(n, T(1), dy, g.grad_buffer(xi).data());
      if (g.requires_grad(yi)) simd::axpy<T>(n, T(1), dy, g.grad_buffer(yi).data());
      return;
    }
    if (g.requires_grad(xi)) {
      T* dx = g.grad_buffer(xi).data();
      const T* yv = g.value(yi).data();
      for (std::size_t i = 0; i < n; ++i) dx[i] += dy[i] * yv[i];
    }
    if (g.requires_grad(yi)) {
      T* dyy = g.grad_buffer(yi).data();
      const T* xv = g.value(xi).data();
      for (std::size_t i = 0; i < n; ++i) dyy[i] += dy[i] * xv[i];
    }
  };
  return x.graph().record(kind == Elementwise::add ? "add" : "hadamard", {xi, yi}, std::move(out), backward);
}

template <typename T>
Var<T> concat(std::span<const Var<T>> xs, std::size_t axis) {
  if (xs.empty()) throw ContractError("concat: empty input list");
  const Shape& first = xs[0].shape();
  if (axis >= first.size()) dim_error("concat", "axis " + std::to_string(axis) + " out of range");
  Shape os = first;
  os[axis] = 0;
  std::vector<std::size_t> extents;
  std::vector<std::size_t> ids;
  for (const Var<T>& v : xs) {
    require_same_graph(xs[0], v, "concat");
    const Shape& s = v.shape();
    if (s.size() != first.size()) dim_error("concat", "rank mismatch " + shape_string(first) + " vs " + shape_string(s));
    for (std::size_t a = 0; a < s.size(); ++a) {
      if (a != axis && s[a] != first[a]) {
        dim_error("concat", "axis " + std::to_string(a) + " differs: " + shape_string(first) + " vs " + shape_string(s));
      }
    }
    os[axis] += s[axis];
    extents.push_back(s[axis]);
    ids.push_back(v.id());
  }
  const AxisSplit so = split_at(os, axis);
  Tensor<T> out(os);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const std::size_t chunk = extents[k] * so.inner;
    const T* src = xs[k].value().data();
    for (std::size_t a = 0; a < so.outer; ++a) {
      std::copy(src + a * chunk, src + (a + 1) * chunk, out.data() + a * so.extent * so.inner + offset * so.inner);
    }
    offset += extents[k];
  }
  auto backward = [=](Graph<T>& g, std::size_t self) {
    const T* dy = g.node(self).grad.data();
    std::size_t off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      const std::size_t chunk = extents[k] * so.inner;
      if (g.requires_grad(ids[k])) {
        T* dx = g.grad_buffer(ids[k]).data();
        for (std::size_t a = 0; a < so.outer; ++a) {
          simd::axpy<T>(chunk, T(1), dy + a * so.extent * so.inner + off * so.inner, dx + a * chunk);
        }
      }
      off += extents[k];
    }
  };
  return xs[0].graph().record("concat", ids, std::move(out), backward);
}

template <typename T>
Var<T> slice(Var<T> x, std::size_t axis, std::size_t start, std::size_t length) {
  const Shape& xs = x.shape();
  if (axis >= xs.size()) dim_error("slice", "axis " + std::to_string(axis) + " out of range");
  if (length == 0 || start + length > xs[axis]) {
    dim_error("slice", "range [" + std::to_string(start) + "," + std::to_string(start + length) +
                           ") exceeds axis " + std::to_string(axis) + " extent " + std::to_string(xs[axis]));
  }
  const AxisSplit s = split_at(xs, axis);
  Shape os = xs;
  os[axis] = length;
  Tensor<T> out(os);
  const std::size_t chunk = length * s.inner;
  const T* src = x.value().data();
  for (std::size_t a = 0; a < s.outer; ++a) {
    const T* from = src + a * s.extent * s.inner + start * s.inner;
    std::copy(from, from + chunk, out.data() + a * chunk);
  }
  const std::size_t xi = x.id();
  auto backward = [=](Graph<T>& g, std::size_t self) {
    const T* dy = g.node(self).grad.data();
    T* dx = g.grad_buffer(xi).data();
    for (std::size_t a = 0; a < s.outer; ++a) {
      simd::axpy<T>(chunk, T(1), dy + a * chunk, dx + a * s.extent * s.inner + start * s.inner);
    }
  };
  return x.graph().record("slice", {xi}, std::move(out), backward);
}

template <typename T>
Var<T> stack(std::span<const Var<T>> xs) {
  if (xs.empty()) throw ContractError("stack: empty input list");
  std::vector<Var<T>> expanded;
  expanded.reserve(xs.size());
  Shape es{1};
  es.insert(es.end(), xs[0].shape().begin(), xs[0].shape().end());
  for (const Var<T>& v : xs) {
    if (v.shape() != xs[0].shape()) {
      dim_error("stack", "shape mismatch " + shape_string(xs[0].shape()) + " vs " + shape_string(v.shape()));
    }
    expanded.push_back(reshape(v, es));
  }
  return concat(std::span<const Var<T>>(expanded), 0);
}

template <typename T>
Var<T> reshape(Var<T> x, Shape shape) {
  Tensor<T> out = x.value().reshaped(std::move(shape));
  const std::size_t xi = x.id();
  auto backward = [xi](Graph<T>& g, std::size_t self) {
    const Tensor<T>& dy = g.node(self).grad;
    simd::axpy<T>(dy.size(), T(1), dy.data(), g.grad_buffer(xi).data());
  };
  return x.graph().record("reshape", {xi}, std::move(out), backward);
}

template <typename T>
Var<T> transpose_last2(Var<T> x) {
  const Shape& xs = x.shape();
  if (xs.size() < 2) dim_error("transpose_last2", "needs rank >= 2, got " + shape_string(xs));
  const std::size_t r = xs[xs.size() - 2], c = xs.back(), batch = x.value().size() / (r * c);
  Shape os = xs;
  std::swap(os[os.size() - 2], os.back());
  Tensor<T> out(os);
  const T* in = x.value().data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) out[b * r * c + j * r + i] = in[b * r * c + i * c + j];
  const std::size_t xi = x.id();
  auto backward = [=](Graph<T>& g, std::size_t self) {
    const T* dy = g.node(self).grad.data();
    T* dx = g.grad_buffer(xi).data();
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) dx[b * r * c + i * c + j] += dy[b * r * c + j * r + i];
  };
  return x.graph().record("transpose", {xi}, std::move(out), backward);
}

template <typename T>
Var<T> mean(Var<T> x, std::vector<std::size_t> axes) {
  const Shape& xs = x.shape();
  std::vector<bool> reduced(xs.size(), false);
  for (std::size_t a : axes) {
    if (a >= xs.size()) dim_error("mean", "axis " + std::to_string(a) + " out of range for " + shape_string(xs));
    if (reduced[a]) dim_error("mean", "axis " + std::to_string(a) + " listed twice");
    reduced[a] = true;
  }
  if (axes.empty()) dim_error("mean", "no axes given");
  Shape os;
  std::size_t count = 1;
  for (std::size_t a = 0; a < xs.size(); ++a) {
    if (reduced[a]) {
      count *= xs[a];
    } else {
      os.push_back(xs[a]);
    }
  }
  if (os.empty()) os = {1};
  // Output flat index of every input element.
  const std::size_t n = x.value().size();
  std::vector<std::size_t> target(n);
  {
    std::vector<std::size_t> idx(xs.size(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t o = 0;
      for (std::size_t a = 0; a < xs.size(); ++a)
        if (!reduced[a]) o = o * xs[a] + idx[a];
      target[i] = o;
      for (std::size_t a = xs.size(); a-- > 0;) {
        if (++idx[a] < xs[a]) break;
        idx[a] = 0;
      }
    }
  }
  Tensor<T> out(os);
  const T* in = x.value().data();
  for (std::size_t i = 0; i < n; ++i) out[target[i]] += in[i];
  const T inv = T(1) / static_cast<T>(count);
  for (T& v : out.values()) v *= inv;
  const std::size_t xi = x.id();
  auto backward = [xi, inv, target = std::move(target)](Graph<T>& g, std::size_t self) {
    const T* dy = g.node(self).grad.data();
    T* dx = g.grad_buffer(xi).data();
    for (std::size_t i = 0; i < target.size(); ++i) dx[i] += dy[target[i]] * inv;
  };
  return x.graph().record("mean", {xi}, std::move(out), backward);
}

template <typename T>
Var<T> sum(Var<T> x) {
  T total = 0;
  for (T v : x.value().values()) total += v;
  const std::size_t xi = x.id();
  auto backward = [xi](Graph<T>& g, std::size_t self) {
    const T d = g.node(self).grad[0];
    for (T& v : g.grad_buffer(xi).values()) v += d;
  };
  return x.graph().record("sum", {xi}, Tensor<T>::scalar(total), backward);
}

template <typename T>
Var<T> scale(Var<T> x, T factor) {
  Tensor<T> out = x.value();
  for (T& v : out.values()) v *= factor;
  const std::size_t xi = x.id();
  auto backward = [xi, factor](Graph<T>& g, std::size_t self) {
    const Tensor<T>& dy = g.node(self).grad;
    simd::axpy<T>(dy.size(), factor, dy.data(), g.grad_buffer(xi).data());
  };
  return x.graph().record("scale", {xi}, std::move(out), backward);
}

template <typename T>
Var<T> weighted_sum(Var<T> stacked, Var<T> weights) {
  require_same_graph(stacked, weights, "weighted_sum");
  const Shape& ss = stacked.shape();
  if (ss.size() < 2) dim_error("weighted_sum", "stacked input needs rank >= 2, got " + shape_string(ss));
  if (weights.shape() != Shape{ss[0]}) {
    dim_error("weighted_sum", "weights " + shape_string(weights.shape()) + " do not match axis 0 of " +
                                  shape_string(ss));
  }
  const std::size_t steps = ss[0], n = stacked.value().size() / steps;
  Shape os(ss.begin() + 1, ss.end());
  Tensor<T> out(os);
  const T* x = stacked.value().data();
  const T* w = weights.value().data();
  for (std::size_t t = 0; t < steps; ++t) simd::axpy<T>(n, w[t], x + t * n, out.data());
  const std::size_t xi = stacked.id(), wi = weights.id();
  auto backward = [=](Graph<T>& g, std::size_t self) {
    const T* dy = g.node(self).grad.data();
    if (g.requires_grad(xi)) {
      T* dx = g.grad_buffer(xi).data();
      const T* wv = g.value(wi).data();
      for (std::size_t t = 0; t < steps; ++t) simd::axpy<T>(n, wv[t], dy, dx + t * n);
    }
    if (g.requires_grad(wi)) {
      T* dw = g.grad_buffer(wi).data();
      const T* xv = g.value(xi).data();
      for (std::size_t t = 0; t < steps; ++t) dw[t] += simd::dot<T>(n, xv + t * n, dy);
    }
  };
  return stacked.graph().record("weighted_sum", {xi, wi}, std::move(out), backward);
}

template <typename T>
Var<T> center_crop(Var<T> x, std::size_t out_h, std::size_t out_w) {
  const Shape& xs = x.shape();
  if (xs.size() != 3) dim_error("center_crop", "input must be [C,H,W], got " + shape_string(xs));
  if (out_h > xs[1] || out_w > xs[2] || out_h == 0 || out_w == 0) {
    dim_error("center_crop", "cannot crop " + shape_string(xs) + " to " + std::to_string(out_h) + "x" +
                                 std::to_string(out_w));
  }
  const std::size_t c = xs[0], h = xs[1], w = xs[2];
  const std::size_t oy = (h - out_h) / 2, ox = (w - out_w) / 2;
  Tensor<T> out({c, out_h, out_w});
  const T* in = x.value().data();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < out_h; ++i) {
      const T* src = in + (ch * h + oy + i) * w + ox;
      std::copy(src, src + out_w, out.data() + (ch * out_h + i) * out_w);
    }
  const std::size_t xi = x.id();
  auto backward = [=](Graph<T>& g, std::size_t self) {
    const T* dy = g.node(self).grad.data();
    T* dx = g.grad_buffer(xi).data();
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < out_h; ++i) {
        simd::axpy<T>(out_w, T(1), dy + (ch * out_h + i) * out_w, dx + (ch * h + oy + i) * w + ox);
      }
  };
  return x.graph().record("center_crop", {xi}, std::move(out), backward);
}

template <typename T>
Var<T> cross_entropy(Var<T> probs, std::span<const std::uint8_t> labels, T normalizer) {
  const Shape& ps = probs.shape();
  if (ps.size() != 3) dim_error("cross_entropy", "probs must be [L,H,W], got " + shape_string(ps));
  const std::size_t classes = ps[0], pixels = ps[1] * ps[2];
  if (labels.size() != pixels) {
    dim_error("cross_entropy", "label count " + std::to_string(labels.size()) + " vs " + std::to_string(pixels) +
                                   " pixels");
  }
  if (!(normalizer > T(0))) throw ContractError("cross_entropy: normalizer must be positive");
  constexpr T floor = T(1e-12);
  const T* p = probs.value().data();
  T total = 0;
  for (std::size_t i = 0; i < pixels; ++i) {
    const std::uint8_t l = labels[i];
    if (l == kIgnoreLabel) continue;
    if (l >= classes) {
      throw ContractError("cross_entropy: label " + std::to_string(l) + " >= class count " + std::to_string(classes));
    }
    total -= std::log(std::max(p[l * pixels + i], floor));
  }
  const std::size_t pi = probs.id();
  std::vector<std::uint8_t> lab(labels.begin(), labels.end());
  auto backward = [=, lab = std::move(lab)](Graph<T>& g, std::size_t self) {
    const T d = g.node(self).grad[0] / normalizer;
    const T* pv = g.value(pi).data();
    T* dp = g.grad_buffer(pi).data();
    for (std::size_t i = 0; i < pixels; ++i) {
      const std::uint8_t l = lab[i];
      if (l == kIgnoreLabel) continue;
      const T v = pv[l * pixels + i];
      if (v > floor) dp[l * pixels + i] -= d / v;
    }
  };
  return probs.graph().record("cross_entropy", {pi}, Tensor<T>::scalar(total / normalizer), backward);
}

#define STATT_INSTANTIATE_OPS(T)                                                                 \
  template Var<T> conv2d<T>(Var<T>, Var<T>, Var<T>, Padding);                                    \
  template Var<T> transposed_conv2d<T>(Var<T>, Var<T>, std::size_t);                             \
  template Var<T> maxpool2d<T>(Var<T>);                                                          \
  template Var<T> affine<T>(Var<T>, Var<T>, Var<T>);                                             \
  template Var<T> activation<T>(Var<T>, Activation);                                             \
  template Var<T> softmax<T>(Var<T>, std::size_t);                                               \
  template Var<T> elementwise<T>(Var<T>, Var<T>, Elementwise);                                   \
  template Var<T> concat<T>(std::span<const Var<T>>, std::size_t);                               \
  template Var<T> slice<T>(Var<T>, std::size_t, std::size_t, std::size_t);                       \
  template Var<T> stack<T>(std::span<const Var<T>>);                                             \
  template Var<T> reshape<T>(Var<T>, Shape);                                                     \
  template Var<T> transpose_last2<T>(Var<T>);                                                    \
  template Var<T> mean<T>(Var<T>, std::vector<std::size_t>);                                     \
  template Var<T> sum<T>(Var<T>);                                                                \
  template Var<T> scale<T>(Var<T>, T);                                                           \
  template Var<T> weighted_sum<T>(Var<T>, Var<T>);                                               \
  template Var<T> center_crop<T>(Var<T>, std::size_t, std::size_t);                              \
  template Var<T> cross_entropy<T>(Var<T>, std::span<const std::uint8_t>, T);

STATT_INSTANTIATE_OPS(float)
STATT_INSTANTIATE_OPS(double)

}  // namespace statt::ops
