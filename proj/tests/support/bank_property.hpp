#pragma once

// Random valid decision sequences and the structural invariants a bank must
// uphold after every step. Shared between the unit tests and the acceptance
// gate, which both hammer apply_decision with generated operation streams.

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ctxbank/bank.hpp"

namespace ctxbank::testing {

struct OpCounts {
  int adds = 0;
  int confirms = 0;
  int revises = 0;
  int retracts = 0;
  int drops = 0;

  int applied_non_drop() const { return adds + confirms + revises + retracts; }
};

inline Evidence random_anchor(std::mt19937& rng, MemoryType type) {
  const std::string clip =
      "clip_0" + std::to_string(std::uniform_int_distribution<int>(1, 5)(rng));
  const int start = std::uniform_int_distribution<int>(0, 80)(rng);
  if (type == MemoryType::Behavior) {
    const int end = start + std::uniform_int_distribution<int>(1, 40)(rng);
    return Evidence::span(clip, start, end);
  }
  return Evidence::frame(clip, start);
}

inline MemoryType random_type(std::mt19937& rng) {
  return kMemoryTypes[std::uniform_int_distribution<std::size_t>(0, 2)(rng)];
}

// One random valid operation: mints a candidate, picks a feasible decision
// (targets only active entries, categories always agree), applies it.
inline Bank random_step(Bank bank, std::mt19937& rng, OpCounts& counts) {
  const auto active = bank.active_entries();

  // ADD=0 CONFIRM=1 REVISE=2 RETRACT=3 DROP=4; ADD weighted up so banks grow.
  std::vector<int> feasible = {0, 0, 0, 4};
  if (!active.empty()) {
    feasible.push_back(1);
    feasible.push_back(1);
    feasible.push_back(2);
    feasible.push_back(3);
  }
  const int op = feasible[std::uniform_int_distribution<std::size_t>(
      0, feasible.size() - 1)(rng)];

  const std::string cid = mint_ids(bank, IdKind::Candidate, 1).front();
  CandidateCue cue;
  cue.candidate_id = cid;

  if (op == 0 || op == 4) {
    cue.memory_type = random_type(rng);
    cue.descriptor = "generated cue " + cid;
    cue.anchor = random_anchor(rng, cue.memory_type);
    if (op == 0) {
      ++counts.adds;
      return apply_decision(bank, MergeDecision::add(cid), cue);
    }
    ++counts.drops;
    return apply_decision(bank, MergeDecision::drop(cid), cue);
  }

  const BankEntry* target = active[std::uniform_int_distribution<std::size_t>(
      0, active.size() - 1)(rng)];
  cue.memory_type = target->memory_type;
  cue.descriptor = "re-observation " + cid;
  cue.anchor = random_anchor(rng, cue.memory_type);

  if (op == 1) {
    ++counts.confirms;
    return apply_decision(
        bank, MergeDecision::confirm(cid, target->entry_id), cue);
  }
  if (op == 2) {
    ++counts.revises;
    return apply_decision(
        bank,
        MergeDecision::revise(cid, target->entry_id, "revised via " + cid),
        cue);
  }
  ++counts.retracts;
  return apply_decision(bank, MergeDecision::retract(cid, target->entry_id),
                        cue);
}

// Structural invariants; returns the first violation's description.
inline std::optional<std::string> check_bank_invariants(const Bank& bank) {
  int prev_seq = 0;
  for (const BankEntry& entry : bank.entries) {
    const auto fail = [&](const std::string& what) {
      return entry.entry_id + ": " + what;
    };

    if (entry.entry_id.size() < 5 || entry.entry_id.rfind("e_", 0) != 0) {
      return fail("bad id format");
    }
    const int seq = std::stoi(entry.entry_id.substr(2));
    if (seq <= prev_seq) return fail("ids not strictly increasing");
    prev_seq = seq;
    if (seq >= bank.next_entry_seq) return fail("id at or past the counter");

    if (entry.descriptor.empty()) return fail("empty descriptor");
    if (entry.evidence.empty()) return fail("no evidence");
    if (entry.history.empty() || entry.history.front().op != DecisionKind::Add) {
      return fail("history must begin with the founding ADD");
    }

    int confirms = 0, revises = 0;
    for (std::size_t i = 0; i < entry.history.size(); ++i) {
      const HistoryRecord& rec = entry.history[i];
      if (rec.op == DecisionKind::Drop) return fail("DROP recorded in history");
      if (rec.op == DecisionKind::Add && i != 0) return fail("late ADD");
      if (rec.op == DecisionKind::Confirm) ++confirms;
      if (rec.op == DecisionKind::Revise) {
        ++revises;
        if (rec.prior_descriptor.empty()) {
          return fail("REVISE without its prior descriptor");
        }
      }
      if (rec.candidate_id.empty()) return fail("history op without candidate");
    }
    if (entry.support_count != 1 + confirms) {
      return fail("support_count != 1 + confirmations");
    }
    // RETRACT keeps the terminal evidence list intact and adds nothing.
    const int expected_evidence = 1 + confirms + revises;
    if (static_cast<int>(entry.evidence.size()) != expected_evidence) {
      return fail("evidence length != 1 + confirms + revises");
    }
    for (const Evidence& ev : entry.evidence) {
      if (!evidence_matches_type(entry.memory_type, ev)) {
        return fail("evidence kind does not match the category");
      }
    }
  }
  if (bank.next_entry_seq < 1 || bank.next_candidate_seq < 1) {
    return std::string("mint counters must stay >= 1");
  }
  return std::nullopt;
}

// Cross-check of aggregate counts against the operations that were applied.
inline std::optional<std::string> check_op_accounting(const Bank& bank,
                                                      const OpCounts& counts) {
  if (static_cast<int>(bank.entries.size()) != counts.adds) {
    return std::string("entry count != applied ADDs");
  }
  const int active = static_cast<int>(bank.active_entries().size());
  if (active != counts.adds - counts.retracts) {
    return std::string("active count != ADDs - RETRACTs");
  }
  int confirms = 0, revises = 0;
  for (const BankEntry& entry : bank.entries) {
    for (const HistoryRecord& rec : entry.history) {
      if (rec.op == DecisionKind::Confirm) ++confirms;
      if (rec.op == DecisionKind::Revise) ++revises;
    }
  }
  if (confirms != counts.confirms) return std::string("CONFIRM count drifted");
  if (revises != counts.revises) return std::string("REVISE count drifted");
  return std::nullopt;
}

// A bank grown through `ops` random valid operations.
inline Bank random_valid_bank(std::mt19937& rng, int ops,
                              OpCounts* counts_out = nullptr) {
  Bank bank;
  bank.owner_id = "owner";
  OpCounts counts;
  for (int i = 0; i < ops; ++i) bank = random_step(std::move(bank), rng, counts);
  if (counts_out != nullptr) *counts_out = counts;
  return bank;
}

}  // namespace ctxbank::testing
