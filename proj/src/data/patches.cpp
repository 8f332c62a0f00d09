#include "statt/data.hpp"
#include "statt/errors.hpp"

namespace statt {
namespace {

// Reflection about the border pixels (-1 -> 1, n -> n-2).
std::size_t mirror(long i, long n) {
  if (n == 1) return 0;
  const long period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return static_cast<std::size_t>(i < n ? i : period - i);
}

}  // namespace

std::vector<Patch> extract_patches(const SceneDataset& scene, Split split, std::size_t in_size, std::size_t out_size,
                                   std::size_t stride) {
  if (stride == 0) stride = out_size;
  if (out_size < 1 || in_size < out_size) throw ConfigError("/out_size", "requires 1 <= out_size <= in_size");
  if (in_size > scene.height || in_size > scene.width) {
    throw ConfigError("/in_size", "input window (" + std::to_string(in_size) + ") exceeds the scene (" +
                                      std::to_string(scene.height) + "x" + std::to_string(scene.width) + ")");
  }
  if (scene.split.cells.empty()) throw ContractError("extract_patches: dataset has no split map");
  const std::size_t T = scene.steps, C = scene.channels, H = scene.height, W = scene.width;
  const long margin = static_cast<long>((in_size - out_size) / 2);
  const SplitMap& sm = scene.split;

  std::vector<Patch> patches;
  for (std::size_t r = 0; r + out_size <= H; r += stride) {
    for (std::size_t c = 0; c + out_size <= W; c += stride) {
      bool inside = true;
      for (std::size_t gr = sm.cell_row(r); gr <= sm.cell_row(r + out_size - 1) && inside; ++gr)
        for (std::size_t gc = sm.cell_col(c); gc <= sm.cell_col(c + out_size - 1); ++gc)
          if (sm.cells[gr * sm.cols + gc] != split) {
            inside = false;
            break;
          }
      if (!inside) continue;
      Patch p;
      p.row = r;
      p.col = c;
      p.y.resize(out_size * out_size);
      bool any = false;
      for (std::size_t i = 0; i < out_size; ++i)
        for (std::size_t j = 0; j < out_size; ++j) {
          p.y[i * out_size + j] = scene.y[(r + i) * W + c + j];
          any = any || p.y[i * out_size + j] != kIgnore;
        }
      if (!any) continue;
      p.x = Tensor<float>({T, C, in_size, in_size});
      std::vector<std::size_t> rows(in_size), cols(in_size);
      for (std::size_t i = 0; i < in_size; ++i) {
        rows[i] = mirror(static_cast<long>(r + i) - margin, static_cast<long>(H));
        cols[i] = mirror(static_cast<long>(c + i) - margin, static_cast<long>(W));
      }
      float* dst = p.x.data();
      for (std::size_t tc = 0; tc < T * C; ++tc) {
        const float* plane = scene.x.data() + tc * H * W;
        for (std::size_t i = 0; i < in_size; ++i)
          for (std::size_t j = 0; j < in_size; ++j) *dst++ = plane[rows[i] * W + cols[j]];
      }
      patches.push_back(std::move(p));
    }
  }
  return patches;
}

}  // namespace statt
