#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "ctxbank/bank.hpp"
#include "ctxbank/prompt.hpp"

namespace ctxbank {

// ---------------------------------------------------------------------------
// Canonical prompt identity
// ---------------------------------------------------------------------------

// Stable 64-bit key (16 lowercase hex chars) of a prompt's content: segment
// kinds, text bytes, clip ids and frame indices, length-prefixed so segment
// boundaries cannot alias. Captions are presentation and excluded. Equal
// prompts always map to equal keys on every platform, which is what lets a
// recorded transcript replay a whole run.
std::string canonical_prompt_key(const Prompt& prompt);

// ---------------------------------------------------------------------------
// Backends
// ---------------------------------------------------------------------------

class Backend {
 public:
  virtual ~Backend() = default;

  virtual std::string name() const = 0;

  // Most media segments a single prompt may carry.
  virtual std::size_t media_limit() const = 0;

  // Runs one completion. Throws BudgetExceeded when the prompt carries more
  // media than media_limit(), TransportError / NoScriptEntry on failure.
  virtual std::string complete(const Prompt& prompt) = 0;
};

// Keyed response store, one "<key> <base64(response)>" line per prompt.
// Lines starting with '#' and blank lines are ignored; when a key repeats
// the last occurrence wins.
class Transcript {
 public:
  Transcript() = default;

  static Transcript load(const std::string& path);  // IoError / malformed line
  void save(const std::string& path) const;

  void add(const std::string& key, const std::string& response);
  std::optional<std::string> find(const std::string& key) const;
  std::size_t size() const { return order_.size(); }

 private:
  std::vector<std::string> order_;  // first-seen key order, for stable saves
  std::unordered_map<std::string, std::string> responses_;
};

// Deterministic replay of a recorded transcript. The workhorse for tests and
// offline runs: no network, no pixels, byte-stable outputs.
class ScriptedBackend : public Backend {
 public:
  explicit ScriptedBackend(Transcript transcript,
                           std::size_t media_limit = 64);

  std::string name() const override { return "scripted"; }
  std::size_t media_limit() const override { return media_limit_; }
  std::string complete(const Prompt& prompt) override;

 private:
  Transcript transcript_;
  std::size_t media_limit_;
};

// Pass-through wrapper that records every (key, response) pair into a
// transcript, optionally flushing it to disk after each call so an
// interrupted run still leaves a usable script. Thread-safe.
class RecordingBackend : public Backend {
 public:
  RecordingBackend(Backend& inner, Transcript& out,
                   std::string autosave_path = {});

  std::string name() const override { return inner_.name(); }
  std::size_t media_limit() const override { return inner_.media_limit(); }
  std::string complete(const Prompt& prompt) override;

 private:
  Backend& inner_;
  Transcript& out_;
  std::string autosave_path_;
  std::mutex mu_;
};

// OpenAI-style chat endpoint over http(s).
struct RemoteConfig {
  std::string endpoint;  // "http://host:port" (https needs OpenSSL support)
  std::string path = "/v1/chat/completions";
  std::string model;
  std::string api_key_env = "CTXBANK_API_KEY";  // blank env -> no auth header
  double temperature = 0.0;                     // 0 = greedy decoding
  int max_tokens = 1024;
  std::size_t media_limit = 64;
  int max_attempts = 3;        // retries on connection errors and 5xx/429
  int initial_backoff_ms = 250;
  int timeout_seconds = 120;
};

class RemoteBackend : public Backend {
 public:
  // The encoder turns a frame reference into an uploadable uri (normally
  // frame_data_uri over a media store).
  using MediaEncoder = std::function<std::string(const std::string& clip_id,
                                                 int frame_index)>;

  RemoteBackend(RemoteConfig config, MediaEncoder encoder);

  std::string name() const override { return "remote:" + config_.model; }
  std::size_t media_limit() const override { return config_.media_limit; }
  std::string complete(const Prompt& prompt) override;

 private:
  RemoteConfig config_;
  MediaEncoder encoder_;
};

// ---------------------------------------------------------------------------
// Response parsing
// ---------------------------------------------------------------------------
//
// Model replies are semi-structured text. Each parser extracts its structure
// strictly enough to be replayable, tolerantly enough to survive model
// chatter: hard failures (required block or marker missing) throw
// ParseFailure so the caller can retry with a format reminder; soft
// violations (a malformed line among good ones) are skipped and reported in
// `warnings`.

// Returns the body of the first ```tag fenced block. Throws ParseFailure
// when the block is missing or unclosed.
std::string extract_fenced_block(const std::string& raw,
                                 const std::string& tag);

struct ParsedCandidates {
  std::vector<CandidateCue> cues;
  std::vector<std::string> warnings;
};

// Parses a ```cues block of `category | descriptor | anchor` lines.
// Accepted cues get sequential ids starting at first_seq; malformed lines
// (wrong field count, unknown category, bad or type-mismatched anchor,
// empty descriptor) become warnings.
ParsedCandidates parse_candidates(const std::string& raw, int first_seq = 1);

struct ParsedDecisions {
  std::vector<MergeDecision> decisions;  // one per candidate, listing order
  std::vector<std::string> warnings;
};

// Parses a ```decisions block and sanitizes it against the pre-merge bank:
// unknown or retracted targets, category mismatches and REVISE lines without
// a replacement descriptor demote to DROP with a warning; candidates the
// reply never mentions are silently dropped. The result always contains
// exactly one decision per candidate, so applying it in order cannot throw.
ParsedDecisions parse_merge_decisions(const std::string& raw,
                                      const std::vector<CandidateCue>& cues,
                                      const Bank& bank);

struct ParsedVerdicts {
  std::map<std::string, bool> confirmed;  // candidate id -> revision upheld
  std::vector<std::string> warnings;
};

// Parses a ```verdicts block of `c_NNN: CONFIRM|WITHDRAW` lines. Proposals
// the reply does not mention count as withdrawn (the caller decides the
// fallback).
ParsedVerdicts parse_revise_verdicts(const std::string& raw);

struct TriageOutcome {
  enum class Kind { Answer, Request };
  Kind kind = Kind::Answer;
  std::string answer_text;               // Kind::Answer: text after the marker
  std::vector<std::string> entry_ids;    // Kind::Request: deduped, reply order

  static TriageOutcome answer(std::string text);
  static TriageOutcome request(std::vector<std::string> ids);

  bool operator==(const TriageOutcome&) const = default;
};

// First `ANSWER:` or `REQUEST:` line wins. A REQUEST without a single valid
// entry id is a ParseFailure, as is a reply with neither marker.
TriageOutcome parse_triage(const std::string& raw);

// Renders the exact line parse_triage reads back. Used when scripting
// fixture replies.
std::string render_triage(const TriageOutcome& outcome);

// Entry ids named on the reply's last `DECISIVE:` line; empty when the line
// is absent. Best effort by contract — never throws.
std::vector<std::string> parse_decisive(const std::string& raw);

// --- answer normalizers ---

// Text after the first `ANSWER:` marker, or the whole reply when absent.
std::string answer_payload(const std::string& raw);

// "Yes"/"No" from the answer payload (first yes/no token, any case).
std::optional<std::string> normalize_binary(const std::string& raw);

// Option letter from the answer payload: first standalone letter token in
// [A, A+option_count).
std::optional<std::string> normalize_choice(const std::string& raw,
                                            int option_count);

struct BoundingBox {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }

  bool operator==(const BoundingBox&) const = default;
};

// First four numbers of the answer payload, interpreted in pixels — unless
// all four lie in [0,1], which reads as normalized coordinates scaled by the
// image size. Clamps to the image, reorders corners. Throws ParseFailure
// (fewer than four numbers) or DegenerateBox (zero area after clamping).
BoundingBox parse_bbox(const std::string& raw, double image_width,
                       double image_height);

}  // namespace ctxbank
