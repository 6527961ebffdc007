#pragma once

#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "ctxbank/bank.hpp"
#include "ctxbank/gateway.hpp"
#include "ctxbank/media.hpp"
#include "ctxbank/templates.hpp"

namespace ctxbank {

// ---------------------------------------------------------------------------
// Benchmark vocabulary
// ---------------------------------------------------------------------------

enum class Task {
  PersonId,       // is this person in the query image? (yes/no)
  PersonRel,      // multiple choice about relations between known persons
  ObjectId,       // is this object in the query image? (yes/no)
  ObjectDetect,   // localize the known object (bounding box)
  BehaviorErr,    // does the query execution deviate from the reference? (yes/no)
  BehaviorQa,     // multiple choice about the reference procedure
  EgoId,          // is the query clip worn by the known wearer? (yes/no)
};

constexpr std::array<Task, 7> kTasks = {
    Task::PersonId,    Task::PersonRel,   Task::ObjectId, Task::ObjectDetect,
    Task::BehaviorErr, Task::BehaviorQa,  Task::EgoId};

std::string to_string(Task task);                 // "perid", "perrel", ...
Task task_from_string(const std::string& name);   // ConfigError
std::string task_label(Task task);                // "PerID", "PerRel", ...

enum class AnswerKind { Binary, Choice, Box };
AnswerKind task_answer_kind(Task task);

// Which reference axis a task's context describes, which in turn selects the
// bank recipe and prompt preamble.
enum class TaskAxis { Persons, Objects, Behavior, Wearer };
TaskAxis task_axis(Task task);

enum class Modality { Image, Video };
std::string to_string(Modality m);
Modality modality_from_string(const std::string& name);

// One reference item: a declared subject with its stored footage.
struct ContextItem {
  std::string item_id;
  std::string declaration;  // subject fragment: "Alice", "the red mug",
                            // "whisking the batter"
  std::string clip_id;
  Modality modality = Modality::Image;

  bool operator==(const ContextItem&) const = default;
};

struct QueryInstance {
  std::string instance_id;
  Task task = Task::EgoId;
  std::string bank_id;  // instances sharing a reference set share this
  std::string question;
  std::string query_clip_id;
  Modality query_modality = Modality::Image;
  std::vector<ContextItem> context;

  std::string gold;                    // "Yes"/"No" or an option letter
  std::vector<std::string> options;    // choice tasks
  std::optional<BoundingBox> gold_box; // detection task
  int image_width = 0;                 // detection task: query image size
  int image_height = 0;
  std::string subset_tag;              // pooled identity task: "general" or
                                       // "behavior-centric"

  bool operator==(const QueryInstance&) const = default;
};

// ---------------------------------------------------------------------------
// Context regimes
// ---------------------------------------------------------------------------

enum class BankMode { DescriptorsOnly, AllEvidence, Adaptive };
std::string to_string(BankMode mode);
BankMode bank_mode_from_string(const std::string& name);

// How much context the model gets per query:
//   no-context            question + query only
//   language-ctx:1|max    flat text descriptions of 1 / all reference items
//   visual-ctx:1|max      raw reference media for 1 / all reference items
//   bank:<mode>           the structured bank, in one of three modes
struct Regime {
  enum class Kind { NoContext, LanguageCtx, VisualCtx, Bank };

  Kind kind = Kind::NoContext;
  bool all_items = false;              // LanguageCtx / VisualCtx: 1 vs max
  BankMode mode = BankMode::Adaptive;  // Bank

  static Regime parse(const std::string& name);  // ConfigError
  std::string str() const;

  bool operator==(const Regime&) const = default;
};

std::vector<Regime> parse_regime_list(const std::string& comma_separated);

// Disposition of a REVISE whose verification was withdrawn.
enum class ReviseFallback { Add, Confirm, Drop };
std::string to_string(ReviseFallback f);
ReviseFallback revise_fallback_from_string(const std::string& name);

// ---------------------------------------------------------------------------
// Logs and traces
// ---------------------------------------------------------------------------

// Final disposition of one extraction candidate.
struct DecisionRecord {
  std::string candidate_id;
  DecisionKind applied = DecisionKind::Drop;
  std::string target_entry_id;  // ADD: the minted entry; others: the target
  MemoryType cue_type = MemoryType::Appearance;
  bool revise_withdrawn = false;  // `applied` is the fallback of a withdrawn
                                  // revision

  bool operator==(const DecisionRecord&) const = default;
};

struct ItemLog {
  std::string item_id;
  std::string clip_id;
  int candidate_count = 0;
  std::vector<DecisionRecord> decisions;  // one per candidate
  std::vector<std::string> warnings;

  bool operator==(const ItemLog&) const = default;
};

struct ConstructionLog {
  std::string bank_id;
  std::string model;
  std::vector<ItemLog> items;

  bool operator==(const ConstructionLog&) const = default;
};

std::string construction_log_to_json_text(const ConstructionLog& log);
ConstructionLog construction_log_from_json_text(const std::string& text);

struct CallRecord {
  std::string purpose;  // "extract", "merge", "verify_revisions",
                        // "describe", "triage", "verify", "direct",
                        // "baseline"
  Prompt prompt;
  std::string response;

  bool operator==(const CallRecord&) const = default;
};

struct EntryRef {
  std::string entry_id;
  MemoryType type = MemoryType::Appearance;

  bool operator==(const EntryRef&) const = default;
};

struct QueryTrace {
  std::string instance_id;
  Task task = Task::EgoId;
  std::string regime;
  std::string model;
  std::string template_set;
  std::string query_clip_id;  // lets media counters split query vs context
  std::vector<CallRecord> calls;
  std::vector<EntryRef> requested;  // bank:adaptive call 1
  std::vector<EntryRef> decisive;   // bank:adaptive call 2, best effort
  int context_media_segments = 0;   // reference-side media in the prompts
  int query_media_segments = 0;
  std::vector<std::string> warnings;

  bool operator==(const QueryTrace&) const = default;
};

std::string query_trace_to_json_text(const QueryTrace& trace);
QueryTrace query_trace_from_json_text(const std::string& text);

struct AnswerResult {
  std::string raw;     // final model reply, verbatim
  std::string answer;  // normalized "Yes"/"No"/letter; empty for box/invalid
  std::optional<BoundingBox> box;
  bool invalid = false;  // unusable reply even after the format retry
  QueryTrace trace;
};

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

struct PipelineOptions {
  int video_sample_frames = 16;  // stills taken from a video clip
  int span_frames = 4;           // stills when inlining one evidence span
  ReviseFallback revise_fallback = ReviseFallback::Add;
  std::string model_name = "model";
  bool format_retry = true;  // retry once with a format reminder
};

class Pipeline {
 public:
  // The backend and store must outlive the pipeline.
  Pipeline(Backend& backend, const MediaStore& media, TemplateSet templates,
           PipelineOptions options);

  const PipelineOptions& options() const { return options_; }
  const TemplateSet& templates() const { return templates_; }

  // --- stage I: query-agnostic construction ---

  // One extraction call over `item`. Candidate ids are minted from the
  // bank's counter (the bank is updated, its entries are not touched).
  // Parser warnings land in the log. The behavior axis swaps in its
  // phase-extraction template.
  std::vector<CandidateCue> extract_cues(
      Bank& bank, const ContextItem& item, ItemLog& log,
      const std::string& template_name = "extract_cues");

  // One merge call (plus one verification call when revisions were
  // proposed); returns the reconciled bank and logs every decision.
  Bank merge_cues(Bank bank, const std::vector<CandidateCue>& cues,
                  ItemLog& log);

  // Builds a complete bank for a reference set: extract+merge per clip for
  // the wearer and behavior axes, one description entry per item for the
  // person/object axes.
  Bank build_bank(const std::string& bank_id, TaskAxis axis,
                  const std::vector<ContextItem>& context,
                  ConstructionLog& log);

  // --- stage II: query-adaptive answering ---

  // Answers one query against a bank. Adaptive mode runs the two-call
  // protocol (text triage, then evidence verification if requested); the
  // other modes answer in one call over the text-only or fully-inlined
  // view.
  AnswerResult answer_query(const Bank& bank, const QueryInstance& query,
                            BankMode mode);

  // --- any regime ---

  // Runs one instance under a regime. Bank regimes build (and cache) the
  // instance's reference bank first.
  AnswerResult run_instance(const QueryInstance& query, const Regime& regime);

  // Pre-seeds the bank cache (keyed by the bank's owner id) so bank regimes
  // reuse a bank loaded from disk instead of rebuilding it.
  void seed_bank(Bank bank, ConstructionLog log = {});

  // Banks and construction logs produced by run_instance so far, keyed by
  // bank id. Snapshot copies; safe to call between runs.
  std::map<std::string, Bank> built_banks() const;
  std::map<std::string, ConstructionLog> construction_logs() const;

 private:
  struct BankCacheEntry {
    Bank bank;
    ConstructionLog log;
  };

  Prompt query_media(const QueryInstance& query, std::size_t budget) const;
  Prompt item_media(const ContextItem& item, std::size_t budget) const;
  std::string format_clause(const QueryInstance& query) const;
  std::string preamble(TaskAxis axis) const;
  std::string describe_item(const ContextItem& item, TaskAxis axis,
                            QueryTrace* trace);
  AnswerResult finish_answer(const QueryInstance& query, QueryTrace trace,
                             const std::string& raw, bool parse_ok);
  std::string call_model(const std::string& purpose, const Prompt& prompt,
                         QueryTrace* trace);
  const BankCacheEntry& bank_for(const QueryInstance& query);

  Backend& backend_;
  const MediaStore& media_;
  TemplateSet templates_;
  PipelineOptions options_;

  mutable std::mutex mu_;
  std::map<std::string, BankCacheEntry> bank_cache_;
  std::map<std::string, std::string> description_cache_;  // item|template -> text
};

}  // namespace ctxbank
