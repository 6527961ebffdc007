#pragma once

#include <vector>

namespace ctxbank {

// Uniformly spaced frame indices over [0, total_frames-1], endpoints
// included, at most max_frames of them. Positions are computed with exact
// integer arithmetic as round-half-up(i * (total-1) / (k-1)), so results
// never drift with the platform's floating point rounding.
//
// Throws ConfigError unless total_frames >= 1 and max_frames >= 1.
std::vector<int> sample_frames(int total_frames, int max_frames);

// Same spacing rule over an inclusive index window [start, end] of a clip.
// Used when a span of behaviour evidence has to be rendered as a handful of
// stills. Throws ConfigError on an empty window (start > end) or
// max_frames < 1.
std::vector<int> span_frame_indices(int start, int end, int max_frames);

}  // namespace ctxbank
