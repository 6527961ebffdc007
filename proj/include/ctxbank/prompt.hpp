#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace ctxbank {

// One block of an interleaved multimodal prompt. A prompt is an ordered
// vector of these; text blocks carry instructions and bank text, media
// blocks reference a single frame of a stored clip by id rather than by
// pixels, so prompts stay cheap to hash, script and replay.
struct PromptSegment {
  enum class Kind { Text, Media };

  Kind kind = Kind::Text;
  std::string text;     // Kind::Text payload.
  std::string clip_id;  // Kind::Media: which clip.
  int frame_index = 0;  // Kind::Media: which frame of that clip.
  std::string caption;  // Kind::Media: label shown next to the frame
                        // (e.g. the entry id it grounds). Not part of the
                        // canonical prompt identity.

  static PromptSegment make_text(std::string body) {
    PromptSegment s;
    s.kind = Kind::Text;
    s.text = std::move(body);
    return s;
  }

  static PromptSegment make_media(std::string clip, int frame,
                                  std::string label = {}) {
    PromptSegment s;
    s.kind = Kind::Media;
    s.clip_id = std::move(clip);
    s.frame_index = frame;
    s.caption = std::move(label);
    return s;
  }

  bool operator==(const PromptSegment&) const = default;
};

using Prompt = std::vector<PromptSegment>;

inline std::size_t media_count(const Prompt& prompt) {
  std::size_t n = 0;
  for (const auto& seg : prompt) {
    if (seg.kind == PromptSegment::Kind::Media) ++n;
  }
  return n;
}

// Concatenation of the text blocks, in order, separated by single newlines.
// Used for keyword checks in tests and for logging.
std::string prompt_text(const Prompt& prompt);

}  // namespace ctxbank
