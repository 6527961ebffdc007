#include "ctxbank/pipeline.hpp"

#include <algorithm>
#include <sstream>

#include "ctxbank/errors.hpp"
#include "ctxbank/sampling.hpp"
#include "json_util.hpp"

namespace ctxbank {

using jsonu::Json;

// ---------------------------------------------------------------------------
// Vocabulary round trips
// ---------------------------------------------------------------------------

std::string to_string(Task task) {
  switch (task) {
    case Task::PersonId: return "perid";
    case Task::PersonRel: return "perrel";
    case Task::ObjectId: return "objid";
    case Task::ObjectDetect: return "objdet";
    case Task::BehaviorErr: return "beherr";
    case Task::BehaviorQa: return "behqa";
    case Task::EgoId: return "egoid";
  }
  throw Error("to_string: bad Task");
}

Task task_from_string(const std::string& name) {
  for (Task task : kTasks) {
    if (to_string(task) == name) return task;
  }
  throw ConfigError("unknown task: '" + name + "'");
}

std::string task_label(Task task) {
  switch (task) {
    case Task::PersonId: return "PerID";
    case Task::PersonRel: return "PerRel";
    case Task::ObjectId: return "ObjID";
    case Task::ObjectDetect: return "ObjDet";
    case Task::BehaviorErr: return "BehErr";
    case Task::BehaviorQa: return "BehQA";
    case Task::EgoId: return "EgoID";
  }
  throw Error("task_label: bad Task");
}

AnswerKind task_answer_kind(Task task) {
  switch (task) {
    case Task::PersonRel:
    case Task::BehaviorQa:
      return AnswerKind::Choice;
    case Task::ObjectDetect:
      return AnswerKind::Box;
    default:
      return AnswerKind::Binary;
  }
}

TaskAxis task_axis(Task task) {
  switch (task) {
    case Task::PersonId:
    case Task::PersonRel:
      return TaskAxis::Persons;
    case Task::ObjectId:
    case Task::ObjectDetect:
      return TaskAxis::Objects;
    case Task::BehaviorErr:
    case Task::BehaviorQa:
      return TaskAxis::Behavior;
    case Task::EgoId:
      return TaskAxis::Wearer;
  }
  throw Error("task_axis: bad Task");
}

std::string to_string(Modality m) {
  return m == Modality::Image ? "image" : "video";
}

Modality modality_from_string(const std::string& name) {
  if (name == "image") return Modality::Image;
  if (name == "video") return Modality::Video;
  throw ConfigError("unknown modality: '" + name + "'");
}

std::string to_string(BankMode mode) {
  switch (mode) {
    case BankMode::DescriptorsOnly: return "descriptors-only";
    case BankMode::AllEvidence: return "all-evidence";
    case BankMode::Adaptive: return "adaptive";
  }
  throw Error("to_string: bad BankMode");
}

BankMode bank_mode_from_string(const std::string& name) {
  if (name == "descriptors-only") return BankMode::DescriptorsOnly;
  if (name == "all-evidence") return BankMode::AllEvidence;
  if (name == "adaptive") return BankMode::Adaptive;
  throw ConfigError("unknown bank mode: '" + name + "'");
}

std::string to_string(ReviseFallback f) {
  switch (f) {
    case ReviseFallback::Add: return "add";
    case ReviseFallback::Confirm: return "confirm";
    case ReviseFallback::Drop: return "drop";
  }
  throw Error("to_string: bad ReviseFallback");
}

ReviseFallback revise_fallback_from_string(const std::string& name) {
  if (name == "add") return ReviseFallback::Add;
  if (name == "confirm") return ReviseFallback::Confirm;
  if (name == "drop") return ReviseFallback::Drop;
  throw ConfigError("unknown revise fallback: '" + name + "'");
}

Regime Regime::parse(const std::string& name) {
  Regime r;
  if (name == "no-context") {
    r.kind = Kind::NoContext;
    return r;
  }
  auto tail_of = [&](const std::string& prefix) -> std::optional<std::string> {
    if (name.rfind(prefix, 0) != 0) return std::nullopt;
    return name.substr(prefix.size());
  };
  if (auto k = tail_of("language-ctx:")) {
    r.kind = Kind::LanguageCtx;
    if (*k == "1") {
      r.all_items = false;
    } else if (*k == "max") {
      r.all_items = true;
    } else {
      throw ConfigError("regime '" + name + "': expected ':1' or ':max'");
    }
    return r;
  }
  if (auto k = tail_of("visual-ctx:")) {
    r.kind = Kind::VisualCtx;
    if (*k == "1") {
      r.all_items = false;
    } else if (*k == "max") {
      r.all_items = true;
    } else {
      throw ConfigError("regime '" + name + "': expected ':1' or ':max'");
    }
    return r;
  }
  if (auto m = tail_of("bank:")) {
    r.kind = Kind::Bank;
    r.mode = bank_mode_from_string(*m);
    return r;
  }
  throw ConfigError("unknown regime: '" + name + "'");
}

std::string Regime::str() const {
  switch (kind) {
    case Kind::NoContext: return "no-context";
    case Kind::LanguageCtx:
      return std::string("language-ctx:") + (all_items ? "max" : "1");
    case Kind::VisualCtx:
      return std::string("visual-ctx:") + (all_items ? "max" : "1");
    case Kind::Bank: return "bank:" + to_string(mode);
  }
  throw Error("Regime::str: bad kind");
}

std::vector<Regime> parse_regime_list(const std::string& comma_separated) {
  std::vector<Regime> out;
  std::string current;
  auto take = [&] {
    std::size_t b = 0, e = current.size();
    while (b < e && current[b] == ' ') ++b;
    while (e > b && current[e - 1] == ' ') --e;
    const std::string name = current.substr(b, e - b);
    current.clear();
    if (!name.empty()) out.push_back(Regime::parse(name));
  };
  for (char c : comma_separated) {
    if (c == ',') {
      take();
    } else {
      current += c;
    }
  }
  take();
  if (out.empty()) throw ConfigError("empty regime list");
  return out;
}

// ---------------------------------------------------------------------------
// Log / trace serialization
// ---------------------------------------------------------------------------

namespace {

constexpr int kLogSchemaVersion = 1;

Json segment_to_json(const PromptSegment& seg) {
  Json j;
  if (seg.kind == PromptSegment::Kind::Text) {
    j["kind"] = "text";
    j["text"] = seg.text;
  } else {
    j["kind"] = "media";
    j["clip_id"] = seg.clip_id;
    j["frame"] = seg.frame_index;
    j["caption"] = seg.caption;
  }
  return j;
}

PromptSegment segment_from_json(const Json& j, const std::string& path) {
  const std::string kind = jsonu::require_string(j, "kind", path);
  if (kind == "text") {
    return PromptSegment::make_text(jsonu::require_string(j, "text", path));
  }
  if (kind == "media") {
    return PromptSegment::make_media(
        jsonu::require_string(j, "clip_id", path),
        static_cast<int>(jsonu::require_int(j, "frame", path)),
        jsonu::optional_string(j, "caption", path));
  }
  throw SchemaError(path + ".kind: expected 'text' or 'media'");
}

Json entry_refs_to_json(const std::vector<EntryRef>& refs) {
  Json arr = Json::array();
  for (const auto& ref : refs) {
    Json j;
    j["entry_id"] = ref.entry_id;
    j["type"] = to_string(ref.type);
    arr.push_back(std::move(j));
  }
  return arr;
}

std::vector<EntryRef> entry_refs_from_json(const Json& arr,
                                           const std::string& path) {
  std::vector<EntryRef> refs;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string p = path + "[" + std::to_string(i) + "]";
    EntryRef ref;
    ref.entry_id = jsonu::require_string(arr.at(i), "entry_id", p);
    ref.type = memory_type_from_string(
        jsonu::require_string(arr.at(i), "type", p));
    refs.push_back(std::move(ref));
  }
  return refs;
}

Json strings_to_json(const std::vector<std::string>& v) {
  Json arr = Json::array();
  for (const auto& s : v) arr.push_back(s);
  return arr;
}

std::vector<std::string> strings_from_json(const Json& arr,
                                           const std::string& path) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    if (!arr.at(i).is_string()) {
      throw SchemaError(path + "[" + std::to_string(i) +
                        "]: expected a string");
    }
    out.push_back(arr.at(i).get<std::string>());
  }
  return out;
}

}  // namespace

std::string construction_log_to_json_text(const ConstructionLog& log) {
  Json j;
  j["schema_version"] = kLogSchemaVersion;
  j["bank_id"] = log.bank_id;
  j["model"] = log.model;
  j["items"] = Json::array();
  for (const auto& item : log.items) {
    Json ij;
    ij["item_id"] = item.item_id;
    ij["clip_id"] = item.clip_id;
    ij["candidate_count"] = item.candidate_count;
    ij["decisions"] = Json::array();
    for (const auto& d : item.decisions) {
      Json dj;
      dj["candidate_id"] = d.candidate_id;
      dj["applied"] = to_string(d.applied);
      dj["target_entry_id"] = d.target_entry_id;
      dj["cue_type"] = to_string(d.cue_type);
      dj["revise_withdrawn"] = d.revise_withdrawn;
      ij["decisions"].push_back(std::move(dj));
    }
    ij["warnings"] = strings_to_json(item.warnings);
    j["items"].push_back(std::move(ij));
  }
  return j.dump(2) + "\n";
}

ConstructionLog construction_log_from_json_text(const std::string& text) {
  const Json j = jsonu::parse_text(text, "construction log");
  if (jsonu::require_int(j, "schema_version", "log") != kLogSchemaVersion) {
    throw SchemaVersionMismatch("construction log schema_version unsupported");
  }
  ConstructionLog log;
  log.bank_id = jsonu::require_string(j, "bank_id", "log");
  log.model = jsonu::require_string(j, "model", "log");
  const Json& items = jsonu::require_array(j, "items", "log");
  for (std::size_t i = 0; i < items.size(); ++i) {
    const std::string path = "log.items[" + std::to_string(i) + "]";
    const Json& ij = items.at(i);
    ItemLog item;
    item.item_id = jsonu::require_string(ij, "item_id", path);
    item.clip_id = jsonu::require_string(ij, "clip_id", path);
    item.candidate_count =
        static_cast<int>(jsonu::require_int(ij, "candidate_count", path));
    const Json& decisions = jsonu::require_array(ij, "decisions", path);
    for (std::size_t k = 0; k < decisions.size(); ++k) {
      const std::string dp = path + ".decisions[" + std::to_string(k) + "]";
      const Json& dj = decisions.at(k);
      DecisionRecord d;
      d.candidate_id = jsonu::require_string(dj, "candidate_id", dp);
      d.applied =
          decision_kind_from_string(jsonu::require_string(dj, "applied", dp));
      d.target_entry_id = jsonu::require_string(dj, "target_entry_id", dp);
      d.cue_type =
          memory_type_from_string(jsonu::require_string(dj, "cue_type", dp));
      d.revise_withdrawn = jsonu::require_bool(dj, "revise_withdrawn", dp);
      item.decisions.push_back(std::move(d));
    }
    item.warnings =
        strings_from_json(jsonu::require_array(ij, "warnings", path), path);
    log.items.push_back(std::move(item));
  }
  return log;
}

std::string query_trace_to_json_text(const QueryTrace& trace) {
  Json j;
  j["schema_version"] = kLogSchemaVersion;
  j["instance_id"] = trace.instance_id;
  j["task"] = to_string(trace.task);
  j["regime"] = trace.regime;
  j["model"] = trace.model;
  j["template_set"] = trace.template_set;
  j["query_clip_id"] = trace.query_clip_id;
  j["calls"] = Json::array();
  for (const auto& call : trace.calls) {
    Json cj;
    cj["purpose"] = call.purpose;
    cj["prompt"] = Json::array();
    for (const auto& seg : call.prompt) {
      cj["prompt"].push_back(segment_to_json(seg));
    }
    cj["response"] = call.response;
    j["calls"].push_back(std::move(cj));
  }
  j["requested"] = entry_refs_to_json(trace.requested);
  j["decisive"] = entry_refs_to_json(trace.decisive);
  j["context_media_segments"] = trace.context_media_segments;
  j["query_media_segments"] = trace.query_media_segments;
  j["warnings"] = strings_to_json(trace.warnings);
  return j.dump(2) + "\n";
}

QueryTrace query_trace_from_json_text(const std::string& text) {
  const Json j = jsonu::parse_text(text, "query trace");
  if (jsonu::require_int(j, "schema_version", "trace") != kLogSchemaVersion) {
    throw SchemaVersionMismatch("query trace schema_version unsupported");
  }
  QueryTrace trace;
  trace.instance_id = jsonu::require_string(j, "instance_id", "trace");
  trace.task = task_from_string(jsonu::require_string(j, "task", "trace"));
  trace.regime = jsonu::require_string(j, "regime", "trace");
  trace.model = jsonu::require_string(j, "model", "trace");
  trace.template_set = jsonu::require_string(j, "template_set", "trace");
  trace.query_clip_id = jsonu::optional_string(j, "query_clip_id", "trace");
  const Json& calls = jsonu::require_array(j, "calls", "trace");
  for (std::size_t i = 0; i < calls.size(); ++i) {
    const std::string path = "trace.calls[" + std::to_string(i) + "]";
    const Json& cj = calls.at(i);
    CallRecord call;
    call.purpose = jsonu::require_string(cj, "purpose", path);
    const Json& prompt = jsonu::require_array(cj, "prompt", path);
    for (std::size_t k = 0; k < prompt.size(); ++k) {
      call.prompt.push_back(segment_from_json(
          prompt.at(k), path + ".prompt[" + std::to_string(k) + "]"));
    }
    call.response = jsonu::require_string(cj, "response", path);
    trace.calls.push_back(std::move(call));
  }
  trace.requested = entry_refs_from_json(
      jsonu::require_array(j, "requested", "trace"), "trace.requested");
  trace.decisive = entry_refs_from_json(
      jsonu::require_array(j, "decisive", "trace"), "trace.decisive");
  trace.context_media_segments = static_cast<int>(
      jsonu::require_int(j, "context_media_segments", "trace"));
  trace.query_media_segments =
      static_cast<int>(jsonu::require_int(j, "query_media_segments", "trace"));
  trace.warnings = strings_from_json(
      jsonu::require_array(j, "warnings", "trace"), "trace.warnings");
  return trace;
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

namespace {

std::string expand_text(const std::string& tmpl,
                        const std::map<std::string, std::string>& values) {
  return prompt_text(assemble_prompt(tmpl, values));
}

// Collapses a free-text model reply into one tidy line.
std::string collapse_whitespace(const std::string& s) {
  std::string out;
  bool in_space = true;  // also trims leading whitespace
  for (char c : s) {
    const bool space = c == ' ' || c == '\n' || c == '\r' || c == '\t';
    if (space) {
      if (!in_space) out += ' ';
      in_space = true;
    } else {
      out += c;
      in_space = false;
    }
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

std::string candidate_listing(const std::vector<CandidateCue>& cues) {
  std::string out;
  for (const auto& cue : cues) {
    out += cue.candidate_id + " | " + to_string(cue.memory_type) + " | " +
           cue.descriptor + " | " + cue.anchor.to_string() + "\n";
  }
  return out;
}

// Media cost of inlining an entry's most recent anchor.
std::size_t inline_cost(const BankEntry& entry, int span_frames) {
  const Evidence& ev = entry.evidence.back();
  if (ev.kind == EvidenceKind::Frame) return 1;
  return static_cast<std::size_t>(
      std::min(span_frames, ev.end_frame - ev.start_frame + 1));
}

// Longest prefix of `ids` whose inlined media fits the budget.
std::vector<std::string> fit_to_budget(const Bank& bank,
                                       const std::vector<std::string>& ids,
                                       int span_frames, std::size_t budget,
                                       std::vector<std::string>& warnings) {
  std::vector<std::string> kept;
  std::size_t used = 0;
  for (const auto& id : ids) {
    const BankEntry* entry = bank.find_entry(id);
    if (entry == nullptr) continue;
    const std::size_t cost = inline_cost(*entry, span_frames);
    if (used + cost > budget) {
      warnings.push_back("media budget: evidence of " + id +
                         " and later requests not inlined");
      break;
    }
    used += cost;
    kept.push_back(id);
  }
  return kept;
}

const char* axis_describe_template(TaskAxis axis) {
  switch (axis) {
    case TaskAxis::Persons: return "describe_person";
    case TaskAxis::Objects: return "describe_object";
    case TaskAxis::Behavior: return "describe_action";
    case TaskAxis::Wearer: return "describe_wearer";
  }
  throw Error("axis_describe_template: bad axis");
}

}  // namespace

Pipeline::Pipeline(Backend& backend, const MediaStore& media,
                   TemplateSet templates, PipelineOptions options)
    : backend_(backend),
      media_(media),
      templates_(std::move(templates)),
      options_(std::move(options)) {
  if (options_.video_sample_frames < 1) {
    throw ConfigError("video_sample_frames must be >= 1");
  }
  if (options_.span_frames < 2) {
    throw ConfigError("span_frames must be >= 2");
  }
}

// --- media assembly ---

Prompt Pipeline::item_media(const ContextItem& item,
                            std::size_t budget) const {
  const int want = item.modality == Modality::Image
                       ? 1
                       : options_.video_sample_frames;
  const int take =
      std::max(1, std::min<int>(want, static_cast<int>(budget)));
  Prompt out;
  for (int idx : media_.clip_sample(item.clip_id, take)) {
    out.push_back(PromptSegment::make_media(
        item.clip_id, idx, item.clip_id + ":" + std::to_string(idx)));
  }
  return out;
}

Prompt Pipeline::query_media(const QueryInstance& query,
                             std::size_t budget) const {
  ContextItem as_item;
  as_item.clip_id = query.query_clip_id;
  as_item.modality = query.query_modality;
  return item_media(as_item, budget);
}

std::string Pipeline::format_clause(const QueryInstance& query) const {
  switch (task_answer_kind(query.task)) {
    case AnswerKind::Binary:
      return templates_.text("format_binary");
    case AnswerKind::Choice:
      return expand_text(templates_.text("format_choice"),
                         {{"options", render_options(query.options)}});
    case AnswerKind::Box:
      return expand_text(
          templates_.text("format_box"),
          {{"width", std::to_string(query.image_width)},
           {"height", std::to_string(query.image_height)}});
  }
  throw Error("format_clause: bad answer kind");
}

std::string Pipeline::preamble(TaskAxis axis) const {
  switch (axis) {
    case TaskAxis::Wearer: return templates_.text("preamble_wearer");
    case TaskAxis::Behavior: return templates_.text("preamble_behavior");
    default: return templates_.text("preamble_entity");
  }
}

std::string Pipeline::call_model(const std::string& purpose,
                                 const Prompt& prompt, QueryTrace* trace) {
  const std::string response = backend_.complete(prompt);
  if (trace != nullptr) {
    trace->calls.push_back({purpose, prompt, response});
    for (const auto& seg : prompt) {
      if (seg.kind != PromptSegment::Kind::Media) continue;
      // A segment showing the query clip is query media; everything else
      // (reference items, bank evidence) is context media.
      if (!trace->query_clip_id.empty() &&
          seg.clip_id == trace->query_clip_id) {
        ++trace->query_media_segments;
      } else {
        ++trace->context_media_segments;
      }
    }
  }
  return response;
}

// --- stage I ---

std::vector<CandidateCue> Pipeline::extract_cues(
    Bank& bank, const ContextItem& item, ItemLog& log,
    const std::string& template_name) {
  log.item_id = item.item_id;
  log.clip_id = item.clip_id;

  const Prompt clip = item_media(item, backend_.media_limit());
  Prompt prompt =
      assemble_prompt(templates_.text(template_name), {}, {{"clip", clip}});

  std::string raw = call_model("extract", prompt, nullptr);
  ParsedCandidates parsed;
  try {
    parsed = parse_candidates(raw, bank.next_candidate_seq);
  } catch (const ParseFailure& first) {
    if (!options_.format_retry) {
      log.warnings.push_back(std::string("extraction reply unusable: ") +
                             first.what());
      return {};
    }
    Prompt retry = prompt;
    retry.push_back(
        PromptSegment::make_text(templates_.text("format_reminder")));
    raw = call_model("extract", retry, nullptr);
    try {
      parsed = parse_candidates(raw, bank.next_candidate_seq);
    } catch (const ParseFailure& second) {
      log.warnings.push_back(std::string("extraction reply unusable after "
                                         "retry: ") +
                             second.what());
      return {};
    }
  }

  for (auto& w : parsed.warnings) log.warnings.push_back("extract: " + w);
  log.candidate_count = static_cast<int>(parsed.cues.size());
  if (!parsed.cues.empty()) {
    // Reserve the ids the parser handed out.
    mint_ids(bank, IdKind::Candidate, static_cast<int>(parsed.cues.size()));
  }
  return parsed.cues;
}

Bank Pipeline::merge_cues(Bank bank, const std::vector<CandidateCue>& cues,
                          ItemLog& log) {
  if (cues.empty()) return bank;

  const std::map<std::string, std::string> values = {
      {"bank", render_text_view(bank)}, {"candidates", candidate_listing(cues)}};
  Prompt prompt = assemble_prompt(templates_.text("merge_cues"), values);

  std::string raw = call_model("merge", prompt, nullptr);
  ParsedDecisions parsed;
  bool usable = true;
  try {
    parsed = parse_merge_decisions(raw, cues, bank);
  } catch (const ParseFailure& first) {
    usable = false;
    if (options_.format_retry) {
      Prompt retry = prompt;
      retry.push_back(
          PromptSegment::make_text(templates_.text("format_reminder")));
      raw = call_model("merge", retry, nullptr);
      try {
        parsed = parse_merge_decisions(raw, cues, bank);
        usable = true;
      } catch (const ParseFailure&) {
      }
    }
    if (!usable) {
      log.warnings.push_back(std::string("merge reply unusable: ") +
                             first.what() + "; dropping the whole batch");
      for (const auto& cue : cues) {
        log.decisions.push_back({cue.candidate_id, DecisionKind::Drop, "",
                                 cue.memory_type, false});
      }
      return bank;
    }
  }
  for (auto& w : parsed.warnings) log.warnings.push_back("merge: " + w);

  std::vector<MergeDecision> decisions = parsed.decisions;

  // Proposed rewrites get one dedicated double-check against their evidence
  // before anything is applied; withdrawn ones fall back per configuration.
  std::vector<std::size_t> revise_slots;
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    if (decisions[i].kind == DecisionKind::Revise) revise_slots.push_back(i);
  }
  std::map<std::string, bool> upheld;
  if (!revise_slots.empty()) {
    Prompt proposals;
    for (std::size_t slot : revise_slots) {
      const MergeDecision& d = decisions[slot];
      const CandidateCue& cue = cues[slot];
      const BankEntry* target = bank.find_entry(d.target_entry_id);
      std::string head = "Proposal " + d.candidate_id + " - revise " +
                         d.target_entry_id + " (" +
                         to_string(cue.memory_type) + ")\n";
      head += "Current descriptor: " +
              (target != nullptr ? target->descriptor : "?") + "\n";
      head += "Proposed descriptor: " + d.revised_descriptor + "\n";
      head += "New evidence:\n";
      proposals.push_back(PromptSegment::make_text(head));
      const Evidence& ev = cue.anchor;
      if (ev.kind == EvidenceKind::Frame) {
        proposals.push_back(PromptSegment::make_media(
            ev.clip_id, ev.start_frame,
            ev.clip_id + ":" + std::to_string(ev.start_frame)));
      } else {
        for (int idx : span_frame_indices(ev.start_frame, ev.end_frame,
                                          options_.span_frames)) {
          proposals.push_back(PromptSegment::make_media(
              ev.clip_id, idx, ev.clip_id + ":" + std::to_string(idx)));
        }
      }
    }
    Prompt vprompt = assemble_prompt(templates_.text("verify_revisions"), {},
                                     {{"proposals", proposals}});
    std::string vraw = call_model("verify_revisions", vprompt, nullptr);
    try {
      ParsedVerdicts verdicts = parse_revise_verdicts(vraw);
      for (auto& w : verdicts.warnings) {
        log.warnings.push_back("verify_revisions: " + w);
      }
      upheld = verdicts.confirmed;
    } catch (const ParseFailure& e) {
      bool recovered = false;
      if (options_.format_retry) {
        Prompt retry = vprompt;
        retry.push_back(
            PromptSegment::make_text(templates_.text("format_reminder")));
        vraw = call_model("verify_revisions", retry, nullptr);
        try {
          ParsedVerdicts verdicts = parse_revise_verdicts(vraw);
          for (auto& w : verdicts.warnings) {
            log.warnings.push_back("verify_revisions: " + w);
          }
          upheld = verdicts.confirmed;
          recovered = true;
        } catch (const ParseFailure&) {
        }
      }
      if (!recovered) {
        log.warnings.push_back(
            std::string("revision verification unusable: ") + e.what() +
            "; treating all proposals as withdrawn");
      }
    }
  }

  std::vector<bool> withdrawn(decisions.size(), false);
  for (std::size_t slot : revise_slots) {
    MergeDecision& d = decisions[slot];
    auto it = upheld.find(d.candidate_id);
    if (it != upheld.end() && it->second) continue;  // revision upheld
    withdrawn[slot] = true;
    switch (options_.revise_fallback) {
      case ReviseFallback::Add:
        d = MergeDecision::add(d.candidate_id);
        break;
      case ReviseFallback::Confirm:
        d = MergeDecision::confirm(d.candidate_id, d.target_entry_id);
        break;
      case ReviseFallback::Drop:
        d = MergeDecision::drop(d.candidate_id);
        break;
    }
  }

  for (std::size_t i = 0; i < decisions.size(); ++i) {
    const MergeDecision& d = decisions[i];
    const CandidateCue& cue = cues[i];
    DecisionRecord record;
    record.candidate_id = cue.candidate_id;
    record.cue_type = cue.memory_type;
    record.revise_withdrawn = withdrawn[i];
    try {
      bank = apply_decision(bank, d, cue);
      record.applied = d.kind;
      record.target_entry_id = d.kind == DecisionKind::Add
                                   ? bank.entries.back().entry_id
                               : d.kind == DecisionKind::Drop
                                   ? ""
                                   : d.target_entry_id;
    } catch (const Error& e) {
      // A decision invalidated by an earlier one in the same batch (e.g.
      // CONFIRM after RETRACT of the same entry) degrades to a drop.
      log.warnings.push_back("apply " + cue.candidate_id + ": " + e.what() +
                             "; dropped");
      record.applied = DecisionKind::Drop;
      record.target_entry_id.clear();
    }
    log.decisions.push_back(std::move(record));
  }
  return bank;
}

std::string Pipeline::describe_item(const ContextItem& item, TaskAxis axis,
                                    QueryTrace* trace) {
  const std::string tmpl = axis_describe_template(axis);
  const std::string cache_key = item.item_id + "|" + tmpl;
  {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = description_cache_.find(cache_key);
    if (it != description_cache_.end()) return it->second;
  }
  Prompt prompt = assemble_prompt(
      templates_.text(tmpl), {{"declaration", item.declaration}},
      {{"reference", item_media(item, backend_.media_limit())}});
  const std::string description =
      collapse_whitespace(call_model("describe", prompt, trace));
  std::lock_guard<std::mutex> lock(mu_);
  description_cache_.emplace(cache_key, description);
  return description;
}

Bank Pipeline::build_bank(const std::string& bank_id, TaskAxis axis,
                          const std::vector<ContextItem>& context,
                          ConstructionLog& log) {
  log.bank_id = bank_id;
  log.model = options_.model_name;

  Bank bank;
  bank.owner_id = bank_id;

  if (axis == TaskAxis::Wearer || axis == TaskAxis::Behavior) {
    const std::string tmpl =
        axis == TaskAxis::Wearer ? "extract_cues" : "extract_phases";
    for (const auto& item : context) {
      ItemLog item_log;
      const auto cues = extract_cues(bank, item, item_log, tmpl);
      bank = merge_cues(std::move(bank), cues, item_log);
      log.items.push_back(std::move(item_log));
    }
    return bank;
  }

  // Person/object axes: one grounded description entry per reference item.
  const MemoryType type = axis == TaskAxis::Persons
                              ? MemoryType::Appearance
                              : MemoryType::OwnedObjects;
  for (const auto& item : context) {
    ItemLog item_log;
    item_log.item_id = item.item_id;
    item_log.clip_id = item.clip_id;
    item_log.candidate_count = 1;

    CandidateCue cue;
    cue.candidate_id = mint_ids(bank, IdKind::Candidate, 1).front();
    cue.memory_type = type;
    cue.descriptor =
        item.declaration + ": " + describe_item(item, axis, nullptr);
    cue.anchor = Evidence::frame(item.clip_id, 0);

    bank = apply_decision(bank, MergeDecision::add(cue.candidate_id), cue);
    item_log.decisions.push_back({cue.candidate_id, DecisionKind::Add,
                                  bank.entries.back().entry_id, type, false});
    log.items.push_back(std::move(item_log));
  }
  return bank;
}

// --- stage II ---

AnswerResult Pipeline::finish_answer(const QueryInstance& query,
                                     QueryTrace trace, const std::string& raw,
                                     bool parse_ok) {
  AnswerResult result;
  result.raw = raw;
  result.invalid = !parse_ok;
  if (parse_ok) {
    switch (task_answer_kind(query.task)) {
      case AnswerKind::Binary: {
        auto v = normalize_binary(raw);
        if (v) {
          result.answer = *v;
        } else {
          result.invalid = true;
        }
        break;
      }
      case AnswerKind::Choice: {
        auto v = normalize_choice(raw, static_cast<int>(query.options.size()));
        if (v) {
          result.answer = *v;
        } else {
          result.invalid = true;
        }
        break;
      }
      case AnswerKind::Box: {
        try {
          result.box = parse_bbox(raw, query.image_width, query.image_height);
        } catch (const Error& e) {
          trace.warnings.push_back(std::string("box: ") + e.what());
          result.invalid = true;
        }
        break;
      }
    }
  }
  result.trace = std::move(trace);
  return result;
}

namespace {

// Answer parseability check used to decide whether the single format retry
// is worth spending.
bool answer_parses(const QueryInstance& query, const std::string& raw) {
  switch (task_answer_kind(query.task)) {
    case AnswerKind::Binary:
      return normalize_binary(raw).has_value();
    case AnswerKind::Choice:
      return normalize_choice(raw, static_cast<int>(query.options.size()))
          .has_value();
    case AnswerKind::Box:
      try {
        parse_bbox(raw, query.image_width, query.image_height);
        return true;
      } catch (const Error&) {
        return false;
      }
  }
  return false;
}

}  // namespace

AnswerResult Pipeline::answer_query(const Bank& bank,
                                    const QueryInstance& query,
                                    BankMode mode) {
  QueryTrace trace;
  trace.instance_id = query.instance_id;
  trace.task = query.task;
  trace.regime = "bank:" + to_string(mode);
  trace.model = options_.model_name;
  trace.template_set = templates_.id;
  trace.query_clip_id = query.query_clip_id;

  const TaskAxis axis = task_axis(query.task);
  const std::size_t limit = backend_.media_limit();
  const Prompt q_media = query_media(query, limit);
  const std::size_t context_budget =
      limit > q_media.size() ? limit - q_media.size() : 0;

  const std::map<std::string, std::string> base_values = {
      {"preamble", preamble(axis)},
      {"question", query.question},
      {"format", format_clause(query)}};

  // Single-call modes: the bank is shown up front, text-only or with every
  // entry's evidence inlined, and the reply must be a direct answer.
  if (mode == BankMode::DescriptorsOnly || mode == BankMode::AllEvidence) {
    std::map<std::string, std::string> values = base_values;
    std::map<std::string, Prompt> media = {{"query", q_media}};
    if (mode == BankMode::DescriptorsOnly) {
      values["bank"] = render_text_view(bank);
    } else {
      std::vector<std::string> all_ids;
      for (const BankEntry* e : bank.active_entries()) {
        all_ids.push_back(e->entry_id);
      }
      const auto included = fit_to_budget(bank, all_ids, options_.span_frames,
                                          context_budget, trace.warnings);
      media["bank"] =
          render_hybrid_view(bank, included, options_.span_frames);
    }
    Prompt prompt = assemble_prompt(templates_.text("direct"), values, media);

    std::string raw = call_model("direct", prompt, &trace);
    if (!answer_parses(query, raw) && options_.format_retry) {
      Prompt retry = prompt;
      retry.push_back(
          PromptSegment::make_text(templates_.text("format_reminder")));
      raw = call_model("direct", retry, &trace);
    }
    return finish_answer(query, std::move(trace), raw,
                         answer_parses(query, raw));
  }

  // Adaptive: call 1 sees the text view and the query, and either answers
  // or names the entries whose evidence it needs.
  Prompt triage_prompt;
  {
    std::map<std::string, std::string> values = base_values;
    values["bank"] = render_text_view(bank);
    triage_prompt = assemble_prompt(templates_.text("triage"), values,
                                    {{"query", q_media}});
  }

  std::optional<TriageOutcome> outcome;
  std::string raw;
  for (int attempt = 0; attempt < 2; ++attempt) {
    Prompt prompt = triage_prompt;
    if (attempt > 0) {
      if (!options_.format_retry) break;
      prompt.push_back(
          PromptSegment::make_text(templates_.text("format_reminder")));
    }
    raw = call_model("triage", prompt, &trace);
    try {
      TriageOutcome parsed = parse_triage(raw);
      if (parsed.kind == TriageOutcome::Kind::Answer &&
          !answer_parses(query, raw)) {
        // Marker present but the payload is not a usable answer.
        throw ParseFailure("ANSWER line is not in the required format");
      }
      // A request must name at least one entry that is active in this bank.
      if (parsed.kind == TriageOutcome::Kind::Request) {
        std::vector<std::string> known;
        for (const auto& id : parsed.entry_ids) {
          const BankEntry* entry = bank.find_entry(id);
          if (entry != nullptr && entry->status == EntryStatus::Active) {
            known.push_back(id);
          } else {
            trace.warnings.push_back("request names unknown entry " + id);
          }
        }
        if (known.empty()) {
          throw ParseFailure("REQUEST names no entries present in the bank");
        }
        parsed.entry_ids = std::move(known);
      }
      outcome = std::move(parsed);
      break;
    } catch (const ParseFailure& e) {
      trace.warnings.push_back(std::string("triage attempt ") +
                               std::to_string(attempt + 1) + ": " + e.what());
    }
  }
  if (!outcome) {
    return finish_answer(query, std::move(trace), raw, /*parse_ok=*/false);
  }
  if (outcome->kind == TriageOutcome::Kind::Answer) {
    return finish_answer(query, std::move(trace), raw, /*parse_ok=*/true);
  }

  for (const auto& id : outcome->entry_ids) {
    trace.requested.push_back({id, bank.find_entry(id)->memory_type});
  }

  // Call 2: same question, but the requested entries now carry their anchor
  // media inline.
  const auto inlined =
      fit_to_budget(bank, outcome->entry_ids, options_.span_frames,
                    context_budget, trace.warnings);
  Prompt evidence = render_hybrid_view(bank, inlined, options_.span_frames);
  Prompt verify_prompt =
      assemble_prompt(templates_.text("verify"), base_values,
                      {{"evidence", evidence}, {"query", q_media}});

  raw = call_model("verify", verify_prompt, &trace);
  if (!answer_parses(query, raw) && options_.format_retry) {
    Prompt retry = verify_prompt;
    retry.push_back(
        PromptSegment::make_text(templates_.text("format_reminder")));
    raw = call_model("verify", retry, &trace);
  }

  // Attribution is best effort: accept only ids that were actually shown.
  for (const auto& id : parse_decisive(raw)) {
    const bool was_requested =
        std::any_of(trace.requested.begin(), trace.requested.end(),
                    [&](const EntryRef& r) { return r.entry_id == id; });
    if (was_requested) {
      trace.decisive.push_back({id, bank.find_entry(id)->memory_type});
    } else {
      trace.warnings.push_back("decisive names unrequested entry " + id);
    }
  }

  return finish_answer(query, std::move(trace), raw,
                       answer_parses(query, raw));
}

// --- regimes ---

const Pipeline::BankCacheEntry& Pipeline::bank_for(const QueryInstance& query) {
  const std::string key =
      query.bank_id.empty() ? query.instance_id : query.bank_id;
  std::lock_guard<std::mutex> lock(mu_);
  auto it = bank_cache_.find(key);
  if (it != bank_cache_.end()) return it->second;

  // Built under the cache lock: concurrent instances sharing a reference
  // set serialize here instead of building the same bank twice.
  BankCacheEntry entry;
  entry.bank = build_bank(key, task_axis(query.task), query.context, entry.log);
  return bank_cache_.emplace(key, std::move(entry)).first->second;
}

void Pipeline::seed_bank(Bank bank, ConstructionLog log) {
  std::lock_guard<std::mutex> lock(mu_);
  const std::string key = bank.owner_id;
  BankCacheEntry entry;
  entry.bank = std::move(bank);
  entry.log = std::move(log);
  if (entry.log.bank_id.empty()) entry.log.bank_id = key;
  bank_cache_.insert_or_assign(key, std::move(entry));
}

AnswerResult Pipeline::run_instance(const QueryInstance& query,
                                    const Regime& regime) {
  if (regime.kind == Regime::Kind::Bank) {
    const Bank bank = bank_for(query).bank;
    AnswerResult result = answer_query(bank, query, regime.mode);
    result.trace.regime = regime.str();
    return result;
  }

  QueryTrace trace;
  trace.instance_id = query.instance_id;
  trace.task = query.task;
  trace.regime = regime.str();
  trace.model = options_.model_name;
  trace.template_set = templates_.id;
  trace.query_clip_id = query.query_clip_id;

  const TaskAxis axis = task_axis(query.task);
  const std::size_t limit = backend_.media_limit();
  const Prompt q_media = query_media(query, limit);
  const std::size_t context_budget =
      limit > q_media.size() ? limit - q_media.size() : 0;

  std::vector<ContextItem> items = query.context;
  if (!regime.all_items && regime.kind != Regime::Kind::NoContext &&
      items.size() > 1) {
    items.resize(1);  // the ":1" regimes use the first declared item
  }

  const std::map<std::string, std::string> base_values = {
      {"question", query.question}, {"format", format_clause(query)}};

  Prompt prompt;
  switch (regime.kind) {
    case Regime::Kind::NoContext: {
      prompt = assemble_prompt(templates_.text("no_context"), base_values,
                               {{"query", q_media}});
      break;
    }
    case Regime::Kind::LanguageCtx: {
      std::string descriptions;
      for (const auto& item : items) {
        descriptions += "- " + item.declaration + ": " +
                        describe_item(item, axis, &trace) + "\n";
      }
      auto values = base_values;
      values["descriptions"] = descriptions;
      prompt = assemble_prompt(templates_.text("language_context"), values,
                               {{"query", q_media}});
      break;
    }
    case Regime::Kind::VisualCtx: {
      // Split the remaining media budget across the reference items:
      // stills cost one frame each, videos share what is left evenly.
      std::size_t video_items = 0;
      std::size_t image_items = 0;
      for (const auto& item : items) {
        (item.modality == Modality::Video ? video_items : image_items)++;
      }
      const std::size_t video_budget =
          context_budget > image_items ? context_budget - image_items : 0;
      const std::size_t per_video =
          video_items == 0
              ? 0
              : std::max<std::size_t>(1, video_budget / video_items);
      Prompt references;
      std::size_t used = 0;
      for (const auto& item : items) {
        const std::size_t allowance =
            item.modality == Modality::Image ? 1 : per_video;
        const Prompt media = item_media(item, allowance);
        if (used + media.size() > context_budget) {
          trace.warnings.push_back("media budget: reference item " +
                                   item.item_id + " not shown");
          continue;
        }
        used += media.size();
        references.push_back(
            PromptSegment::make_text("Reference (" + item.declaration + "):"));
        references.insert(references.end(), media.begin(), media.end());
      }
      prompt = assemble_prompt(templates_.text("visual_context"), base_values,
                               {{"references", references}, {"query", q_media}});
      break;
    }
    case Regime::Kind::Bank:
      break;  // handled above
  }

  std::string raw = call_model("baseline", prompt, &trace);
  if (!answer_parses(query, raw) && options_.format_retry) {
    Prompt retry = prompt;
    retry.push_back(
        PromptSegment::make_text(templates_.text("format_reminder")));
    raw = call_model("baseline", retry, &trace);
  }
  return finish_answer(query, std::move(trace), raw,
                       answer_parses(query, raw));
}

std::map<std::string, Bank> Pipeline::built_banks() const {
  std::lock_guard<std::mutex> lock(mu_);
  std::map<std::string, Bank> out;
  for (const auto& [key, entry] : bank_cache_) out.emplace(key, entry.bank);
  return out;
}

std::map<std::string, ConstructionLog> Pipeline::construction_logs() const {
  std::lock_guard<std::mutex> lock(mu_);
  std::map<std::string, ConstructionLog> out;
  for (const auto& [key, entry] : bank_cache_) out.emplace(key, entry.log);
  return out;
}

}  // namespace ctxbank
