#include "ctxbank/bank.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "ctxbank/errors.hpp"
#include "ctxbank/sampling.hpp"

namespace ctxbank {

// --- enum round trips -------------------------------------------------------

std::string to_string(MemoryType type) {
  switch (type) {
    case MemoryType::Appearance:
      return "appearance";
    case MemoryType::OwnedObjects:
      return "owned_objects";
    case MemoryType::Behavior:
      return "behavior";
  }
  throw Error("to_string: bad MemoryType");
}

MemoryType memory_type_from_string(const std::string& name) {
  if (name == "appearance") return MemoryType::Appearance;
  if (name == "owned_objects") return MemoryType::OwnedObjects;
  if (name == "behavior") return MemoryType::Behavior;
  throw Error("unknown memory type: '" + name + "'");
}

std::string memory_type_heading(MemoryType type) {
  switch (type) {
    case MemoryType::Appearance:
      return "Appearance:";
    case MemoryType::OwnedObjects:
      return "Owned objects:";
    case MemoryType::Behavior:
      return "Behavior:";
  }
  throw Error("memory_type_heading: bad MemoryType");
}

std::string to_string(DecisionKind kind) {
  switch (kind) {
    case DecisionKind::Add:
      return "ADD";
    case DecisionKind::Confirm:
      return "CONFIRM";
    case DecisionKind::Revise:
      return "REVISE";
    case DecisionKind::Retract:
      return "RETRACT";
    case DecisionKind::Drop:
      return "DROP";
  }
  throw Error("to_string: bad DecisionKind");
}

DecisionKind decision_kind_from_string(const std::string& name) {
  if (name == "ADD") return DecisionKind::Add;
  if (name == "CONFIRM") return DecisionKind::Confirm;
  if (name == "REVISE") return DecisionKind::Revise;
  if (name == "RETRACT") return DecisionKind::Retract;
  if (name == "DROP") return DecisionKind::Drop;
  throw Error("unknown decision kind: '" + name + "'");
}

// --- evidence ----------------------------------------------------------------

Evidence Evidence::frame(std::string clip_id, int frame_index) {
  if (clip_id.empty()) throw Error("Evidence::frame: empty clip id");
  if (frame_index < 0) {
    throw Error("Evidence::frame: negative frame index " +
                std::to_string(frame_index));
  }
  Evidence ev;
  ev.kind = EvidenceKind::Frame;
  ev.clip_id = std::move(clip_id);
  ev.start_frame = frame_index;
  ev.end_frame = frame_index;
  return ev;
}

Evidence Evidence::span(std::string clip_id, int start, int end) {
  if (clip_id.empty()) throw Error("Evidence::span: empty clip id");
  if (start < 0 || end < start) {
    throw Error("Evidence::span: bad range " + std::to_string(start) + "-" +
                std::to_string(end));
  }
  Evidence ev;
  ev.kind = EvidenceKind::Span;
  ev.clip_id = std::move(clip_id);
  ev.start_frame = start;
  ev.end_frame = end;
  return ev;
}

std::string Evidence::to_string() const {
  std::ostringstream out;
  if (kind == EvidenceKind::Frame) {
    out << "frame " << clip_id << ":" << start_frame;
  } else {
    out << "span " << clip_id << ":" << start_frame << "-" << end_frame;
  }
  return out.str();
}

bool evidence_matches_type(MemoryType type, const Evidence& ev) {
  if (type == MemoryType::Behavior) return ev.kind == EvidenceKind::Span;
  return ev.kind == EvidenceKind::Frame;
}

// --- decisions -----------------------------------------------------------------

MergeDecision MergeDecision::add(std::string candidate_id) {
  MergeDecision d;
  d.kind = DecisionKind::Add;
  d.candidate_id = std::move(candidate_id);
  return d;
}

MergeDecision MergeDecision::confirm(std::string candidate_id,
                                     std::string target) {
  MergeDecision d;
  d.kind = DecisionKind::Confirm;
  d.candidate_id = std::move(candidate_id);
  d.target_entry_id = std::move(target);
  return d;
}

MergeDecision MergeDecision::revise(std::string candidate_id,
                                    std::string target,
                                    std::string new_descriptor) {
  MergeDecision d;
  d.kind = DecisionKind::Revise;
  d.candidate_id = std::move(candidate_id);
  d.target_entry_id = std::move(target);
  d.revised_descriptor = std::move(new_descriptor);
  return d;
}

MergeDecision MergeDecision::retract(std::string candidate_id,
                                     std::string target) {
  MergeDecision d;
  d.kind = DecisionKind::Retract;
  d.candidate_id = std::move(candidate_id);
  d.target_entry_id = std::move(target);
  return d;
}

MergeDecision MergeDecision::drop(std::string candidate_id) {
  MergeDecision d;
  d.kind = DecisionKind::Drop;
  d.candidate_id = std::move(candidate_id);
  return d;
}

// --- bank lookups ----------------------------------------------------------------

const BankEntry* Bank::find_entry(const std::string& entry_id) const {
  for (const auto& entry : entries) {
    if (entry.entry_id == entry_id) return &entry;
  }
  return nullptr;
}

std::vector<const BankEntry*> Bank::active_entries() const {
  std::vector<const BankEntry*> out;
  for (const auto& entry : entries) {
    if (entry.status == EntryStatus::Active) out.push_back(&entry);
  }
  return out;
}

std::vector<const BankEntry*> Bank::active_entries(MemoryType type) const {
  std::vector<const BankEntry*> out;
  for (const auto& entry : entries) {
    if (entry.status == EntryStatus::Active && entry.memory_type == type) {
      out.push_back(&entry);
    }
  }
  return out;
}

std::string format_id(IdKind kind, int seq) {
  std::ostringstream out;
  out << (kind == IdKind::Candidate ? "c_" : "e_");
  std::string digits = std::to_string(seq);
  for (std::size_t i = digits.size(); i < 3; ++i) out << '0';
  out << digits;
  return out.str();
}

std::vector<std::string> mint_ids(Bank& bank, IdKind kind, int count) {
  if (count < 1) {
    throw Error("mint_ids: count must be >= 1, got " + std::to_string(count));
  }
  int& seq =
      kind == IdKind::Candidate ? bank.next_candidate_seq : bank.next_entry_seq;
  std::vector<std::string> ids;
  ids.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) ids.push_back(format_id(kind, seq++));
  return ids;
}

// --- merge -----------------------------------------------------------------------

namespace {

BankEntry* find_mutable(Bank& bank, const std::string& entry_id) {
  for (auto& entry : bank.entries) {
    if (entry.entry_id == entry_id) return &entry;
  }
  return nullptr;
}

// Shared target validation for CONFIRM / REVISE / RETRACT.
BankEntry& resolve_target(Bank& bank, const MergeDecision& d) {
  if (d.target_entry_id.empty()) {
    throw MalformedDecision(to_string(d.kind) + " for " + d.candidate_id +
                            " names no target entry");
  }
  BankEntry* target = find_mutable(bank, d.target_entry_id);
  if (target == nullptr) {
    throw UnknownTarget(to_string(d.kind) + " for " + d.candidate_id +
                        " targets unknown entry " + d.target_entry_id);
  }
  if (target->status == EntryStatus::Retracted) {
    throw UnknownTarget(to_string(d.kind) + " for " + d.candidate_id +
                        " targets retracted entry " + d.target_entry_id);
  }
  return *target;
}

void require_same_type(const MergeDecision& d, const BankEntry& target,
                       const CandidateCue& c) {
  if (target.memory_type != c.memory_type) {
    throw TypeMismatch(to_string(d.kind) + " for " + d.candidate_id + " (" +
                       to_string(c.memory_type) + ") targets " +
                       target.entry_id + " of type " +
                       to_string(target.memory_type));
  }
}

}  // namespace

Bank apply_decision(const Bank& bank, const MergeDecision& decision,
                    const CandidateCue& candidate) {
  if (decision.candidate_id != candidate.candidate_id) {
    throw MalformedDecision("decision is for " + decision.candidate_id +
                            " but candidate is " + candidate.candidate_id);
  }

  if (decision.kind == DecisionKind::Drop) return bank;

  Bank next = bank;
  switch (decision.kind) {
    case DecisionKind::Add: {
      if (!decision.target_entry_id.empty()) {
        throw MalformedDecision("ADD for " + decision.candidate_id +
                                " must not name a target entry");
      }
      if (candidate.descriptor.empty()) {
        throw MalformedDecision("ADD for " + decision.candidate_id +
                                " has an empty descriptor");
      }
      if (!evidence_matches_type(candidate.memory_type, candidate.anchor)) {
        throw TypeMismatch("candidate " + candidate.candidate_id + " (" +
                           to_string(candidate.memory_type) +
                           ") carries a mismatched anchor: " +
                           candidate.anchor.to_string());
      }
      BankEntry entry;
      entry.entry_id = mint_ids(next, IdKind::Entry, 1).front();
      entry.memory_type = candidate.memory_type;
      entry.descriptor = candidate.descriptor;
      entry.evidence.push_back(candidate.anchor);
      entry.support_count = 1;
      entry.status = EntryStatus::Active;
      entry.history.push_back(
          {DecisionKind::Add, candidate.candidate_id, /*prior=*/""});
      next.entries.push_back(std::move(entry));
      break;
    }
    case DecisionKind::Confirm: {
      BankEntry& target = resolve_target(next, decision);
      require_same_type(decision, target, candidate);
      target.support_count += 1;
      target.evidence.push_back(candidate.anchor);
      target.history.push_back(
          {DecisionKind::Confirm, candidate.candidate_id, /*prior=*/""});
      break;
    }
    case DecisionKind::Revise: {
      if (decision.revised_descriptor.empty()) {
        throw MalformedDecision("REVISE for " + decision.candidate_id +
                                " carries no replacement descriptor");
      }
      BankEntry& target = resolve_target(next, decision);
      require_same_type(decision, target, candidate);
      target.history.push_back({DecisionKind::Revise, candidate.candidate_id,
                                /*prior=*/target.descriptor});
      target.descriptor = decision.revised_descriptor;
      target.evidence.push_back(candidate.anchor);
      break;
    }
    case DecisionKind::Retract: {
      BankEntry& target = resolve_target(next, decision);
      target.status = EntryStatus::Retracted;
      target.history.push_back(
          {DecisionKind::Retract, candidate.candidate_id, /*prior=*/""});
      break;
    }
    case DecisionKind::Drop:
      break;  // handled above
  }
  return next;
}

// --- views -----------------------------------------------------------------------

namespace {

std::string entry_line(const BankEntry& entry) {
  std::ostringstream out;
  out << "[" << entry.entry_id << "] (support " << entry.support_count << ") "
      << entry.descriptor;
  return out.str();
}

}  // namespace

std::string render_text_view(const Bank& bank) {
  std::ostringstream out;
  for (MemoryType type : kMemoryTypes) {
    out << memory_type_heading(type) << "\n";
    auto entries = bank.active_entries(type);
    if (entries.empty()) {
      out << "(none)\n";
      continue;
    }
    for (const BankEntry* entry : entries) out << entry_line(*entry) << "\n";
  }
  return out.str();
}

Prompt render_hybrid_view(const Bank& bank,
                          const std::vector<std::string>& requested_ids,
                          int span_frames) {
  if (span_frames < 2) {
    throw ConfigError("render_hybrid_view: span_frames must be >= 2, got " +
                      std::to_string(span_frames));
  }
  std::set<std::string> requested(requested_ids.begin(), requested_ids.end());
  for (const auto& id : requested) {
    const BankEntry* entry = bank.find_entry(id);
    if (entry == nullptr || entry->status != EntryStatus::Active) {
      throw UnknownRequestedId("requested entry " + id +
                               " is not active in the bank");
    }
  }

  Prompt segments;
  std::string pending;  // text accumulated since the last media block
  auto flush = [&] {
    if (!pending.empty()) {
      segments.push_back(PromptSegment::make_text(pending));
      pending.clear();
    }
  };

  for (MemoryType type : kMemoryTypes) {
    pending += memory_type_heading(type) + "\n";
    auto entries = bank.active_entries(type);
    if (entries.empty()) {
      pending += "(none)\n";
      continue;
    }
    for (const BankEntry* entry : entries) {
      pending += entry_line(*entry) + "\n";
      if (!requested.contains(entry->entry_id)) continue;
      flush();
      // Inline the anchor that grounds the current descriptor: the most
      // recent evidence. Static cues show that single frame; behaviour
      // spans are thinned to at most span_frames stills.
      const Evidence& ev = entry->evidence.back();
      if (ev.kind == EvidenceKind::Frame) {
        segments.push_back(PromptSegment::make_media(
            ev.clip_id, ev.start_frame, entry->entry_id));
      } else {
        for (int idx :
             span_frame_indices(ev.start_frame, ev.end_frame, span_frames)) {
          segments.push_back(
              PromptSegment::make_media(ev.clip_id, idx, entry->entry_id));
        }
      }
    }
  }
  flush();
  return segments;
}

std::string prompt_text(const Prompt& prompt) {
  std::string out;
  for (const auto& seg : prompt) {
    if (seg.kind != PromptSegment::Kind::Text) continue;
    if (!out.empty()) out += "\n";
    out += seg.text;
  }
  return out;
}

}  // namespace ctxbank
