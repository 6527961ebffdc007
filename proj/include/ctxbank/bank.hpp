#pragma once

#include <array>
#include <string>
#include <vector>

#include "ctxbank/prompt.hpp"

namespace ctxbank {

// ---------------------------------------------------------------------------
// Memory categories and evidence anchors
// ---------------------------------------------------------------------------

enum class MemoryType { Appearance, OwnedObjects, Behavior };

constexpr std::array<MemoryType, 3> kMemoryTypes = {
    MemoryType::Appearance, MemoryType::OwnedObjects, MemoryType::Behavior};

std::string to_string(MemoryType type);
MemoryType memory_type_from_string(const std::string& name);

// Heading used for the category in rendered views ("Appearance:", ...).
std::string memory_type_heading(MemoryType type);

enum class EvidenceKind { Frame, Span };

// Pointer back into stored footage: a single frame for static cues
// (appearance, owned objects) or an inclusive frame span for behaviour.
struct Evidence {
  EvidenceKind kind = EvidenceKind::Frame;
  std::string clip_id;
  int start_frame = 0;
  int end_frame = 0;  // == start_frame when kind is Frame.

  static Evidence frame(std::string clip_id, int frame_index);
  static Evidence span(std::string clip_id, int start, int end);

  int length() const { return end_frame - start_frame + 1; }
  std::string to_string() const;  // "frame clip:idx" / "span clip:s-e"

  bool operator==(const Evidence&) const = default;
};

// Static categories anchor to frames, behaviour anchors to spans.
bool evidence_matches_type(MemoryType type, const Evidence& ev);

// ---------------------------------------------------------------------------
// Extraction candidates and merge decisions
// ---------------------------------------------------------------------------

// One cue proposed by the extraction step, before reconciliation.
struct CandidateCue {
  std::string candidate_id;  // "c_001", never reused within an owner's bank.
  MemoryType memory_type = MemoryType::Appearance;
  std::string descriptor;  // free-text, nonempty
  Evidence anchor;

  bool operator==(const CandidateCue&) const = default;
};

enum class DecisionKind { Add, Confirm, Revise, Retract, Drop };

std::string to_string(DecisionKind kind);
DecisionKind decision_kind_from_string(const std::string& name);

// Reconciliation verdict for one candidate against the current bank.
struct MergeDecision {
  DecisionKind kind = DecisionKind::Drop;
  std::string candidate_id;
  std::string target_entry_id;     // Confirm / Revise / Retract
  std::string revised_descriptor;  // Revise only

  static MergeDecision add(std::string candidate_id);
  static MergeDecision confirm(std::string candidate_id, std::string target);
  static MergeDecision revise(std::string candidate_id, std::string target,
                              std::string new_descriptor);
  static MergeDecision retract(std::string candidate_id, std::string target);
  static MergeDecision drop(std::string candidate_id);

  bool operator==(const MergeDecision&) const = default;
};

// ---------------------------------------------------------------------------
// Bank entries
// ---------------------------------------------------------------------------

// Applied, non-DROP operations are appended here so every entry carries its
// full provenance: which candidate founded it, which ones confirmed or
// rewrote it, and what the descriptor said before each rewrite.
struct HistoryRecord {
  DecisionKind op = DecisionKind::Add;
  std::string candidate_id;
  std::string prior_descriptor;  // Revise only: descriptor being replaced.

  bool operator==(const HistoryRecord&) const = default;
};

enum class EntryStatus { Active, Retracted };

struct BankEntry {
  std::string entry_id;  // "e_001", stable for the entry's lifetime.
  MemoryType memory_type = MemoryType::Appearance;
  std::string descriptor;
  std::vector<Evidence> evidence;  // chronological; never empty.
  int support_count = 1;           // 1 + number of confirmations.
  EntryStatus status = EntryStatus::Active;
  std::vector<HistoryRecord> history;

  bool operator==(const BankEntry&) const = default;
};

struct Bank {
  std::string owner_id;
  std::vector<BankEntry> entries;  // insertion order.
  // Mint counters. Monotone: ids are never reused, including ids of entries
  // that were later retracted and candidates that were dropped.
  int next_candidate_seq = 1;
  int next_entry_seq = 1;

  const BankEntry* find_entry(const std::string& entry_id) const;
  std::vector<const BankEntry*> active_entries() const;
  std::vector<const BankEntry*> active_entries(MemoryType type) const;

  bool operator==(const Bank&) const = default;
};

enum class IdKind { Candidate, Entry };

// "c_007" / "e_007"; width 3, wider when the sequence outgrows it.
std::string format_id(IdKind kind, int seq);

// Reserves `count` fresh ids of the given kind, bumping the bank's counter.
std::vector<std::string> mint_ids(Bank& bank, IdKind kind, int count);

// ---------------------------------------------------------------------------
// Merge
// ---------------------------------------------------------------------------

// Applies one reconciliation decision and returns the resulting bank; the
// input bank is never mutated, so callers can keep pre-merge snapshots.
//
// Throws MalformedDecision when the decision's shape is wrong (candidate id
// mismatch, missing or superfluous target, REVISE without a descriptor),
// UnknownTarget when the target entry is absent or already retracted, and
// TypeMismatch when a CONFIRM/REVISE crosses memory categories.
Bank apply_decision(const Bank& bank, const MergeDecision& decision,
                    const CandidateCue& candidate);

// ---------------------------------------------------------------------------
// Rendered views
// ---------------------------------------------------------------------------

// Query-agnostic text projection of the active entries:
//
//   Appearance:
//   [e_001] (support 2) wears a red climbing helmet
//   Owned objects:
//   (none)
//   Behavior:
//   [e_004] (support 1) stirs with the left hand
//
// Categories always appear, in the order above; entries keep bank order.
std::string render_text_view(const Bank& bank);

// Text view with the requested entries' anchor media inlined directly after
// their lines. Static entries contribute exactly one frame (their most
// recent anchor); behaviour entries contribute up to span_frames uniformly
// spaced frames of their most recent span. Media captions carry the entry
// id. With an empty request set the result is a single text segment equal
// to render_text_view(bank).
//
// Throws UnknownRequestedId if an id is not an active entry, ConfigError if
// span_frames < 2.
Prompt render_hybrid_view(const Bank& bank,
                          const std::vector<std::string>& requested_ids,
                          int span_frames);

}  // namespace ctxbank
