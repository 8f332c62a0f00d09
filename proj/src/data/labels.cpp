#include <vector>

#include "statt/data.hpp"
#include "statt/errors.hpp"

namespace statt {

std::vector<std::uint8_t> clean_labels(std::span<const std::uint8_t> y, std::size_t height, std::size_t width,
                                       std::size_t min_size) {
  if (y.size() != height * width) throw DimensionError("clean_labels: label grid size does not match H*W");
  const auto H = static_cast<long>(height), W = static_cast<long>(width);
  auto at = [&](long r, long c) { return y[static_cast<std::size_t>(r * W + c)]; };

  // Erosion: a pixel survives iff its full 3x3 neighbourhood is inside the
  // grid and carries its class.
  std::vector<std::uint8_t> eroded(y.size(), kIgnore);
  for (long r = 1; r + 1 < H; ++r)
    for (long c = 1; c + 1 < W; ++c) {
      const std::uint8_t v = at(r, c);
      if (v == kIgnore) continue;
      bool keep = true;
      for (long dr = -1; dr <= 1 && keep; ++dr)
        for (long dc = -1; dc <= 1; ++dc)
          if (at(r + dr, c + dc) != v) {
            keep = false;
            break;
          }
      if (keep) eroded[static_cast<std::size_t>(r * W + c)] = v;
    }

  // 8-connected components of equal class; small ones are dropped.
  std::vector<std::uint8_t> out = eroded;
  std::vector<bool> seen(y.size(), false);
  std::vector<std::size_t> stack, component;
  for (std::size_t start = 0; start < y.size(); ++start) {
    if (seen[start] || eroded[start] == kIgnore) continue;
    const std::uint8_t v = eroded[start];
    component.clear();
    stack.assign(1, start);
    seen[start] = true;
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      component.push_back(p);
      const long r = static_cast<long>(p) / W, c = static_cast<long>(p) % W;
      for (long dr = -1; dr <= 1; ++dr)
        for (long dc = -1; dc <= 1; ++dc) {
          const long rr = r + dr, cc = c + dc;
          if (rr < 0 || cc < 0 || rr >= H || cc >= W) continue;
          const auto q = static_cast<std::size_t>(rr * W + cc);
          if (!seen[q] && eroded[q] == v) {
            seen[q] = true;
            stack.push_back(q);
          }
        }
    }
    if (component.size() < min_size)
      for (std::size_t p : component) out[p] = kIgnore;
  }
  return out;
}

}  // namespace statt
