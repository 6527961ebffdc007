#include "ctxbank/sampling.hpp"

#include <cstdint>

#include "ctxbank/errors.hpp"

namespace ctxbank {

std::vector<int> span_frame_indices(int start, int end, int max_frames) {
  if (start > end) {
    throw ConfigError("span_frame_indices: empty window [" +
                      std::to_string(start) + ", " + std::to_string(end) +
                      "]");
  }
  if (max_frames < 1) {
    throw ConfigError("span_frame_indices: max_frames must be >= 1, got " +
                      std::to_string(max_frames));
  }

  const std::int64_t len = static_cast<std::int64_t>(end) - start + 1;
  const std::int64_t k =
      len < static_cast<std::int64_t>(max_frames) ? len : max_frames;
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(k));
  if (k == 1) {
    out.push_back(start);
    return out;
  }
  const std::int64_t width = len - 1;
  for (std::int64_t i = 0; i < k; ++i) {
    // round-half-up(i * width / (k-1)) without floating point:
    // floor((2*i*width + (k-1)) / (2*(k-1))).
    const std::int64_t offset = (2 * i * width + (k - 1)) / (2 * (k - 1));
    const int idx = start + static_cast<int>(offset);
    if (out.empty() || out.back() != idx) out.push_back(idx);
  }
  return out;
}

std::vector<int> sample_frames(int total_frames, int max_frames) {
  if (total_frames < 1) {
    throw ConfigError("sample_frames: total_frames must be >= 1, got " +
                      std::to_string(total_frames));
  }
  if (max_frames < 1) {
    throw ConfigError("sample_frames: max_frames must be >= 1, got " +
                      std::to_string(max_frames));
  }
  return span_frame_indices(0, total_frames - 1, max_frames);
}

}  // namespace ctxbank
