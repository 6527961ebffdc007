#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ctxbank/pipeline.hpp"

namespace ctxbank {

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------
// All scores live on a 0..100 scale and stay unrounded until rendering;
// format_score does the final two-decimal rounding (half up).

struct LabeledBinary {
  std::string gold;  // "Yes" or "No"
  std::string pred;  // anything; invalid or non-gold counts as wrong
  bool invalid = false;
};

// Mean of the per-class (Yes, No) accuracies, x100. Throws MissingClass when
// either gold class is absent, SchemaError on a gold outside {Yes, No}.
double macro_accuracy(const std::vector<LabeledBinary>& records);

struct LabeledChoice {
  std::string gold;  // option letter
  std::string pred;
  bool invalid = false;
};

// Plain accuracy x100; invalid predictions count as incorrect. Throws
// EmptySet on no records.
double choice_accuracy(const std::vector<LabeledChoice>& records);

// Intersection-over-union of two corner-ordered boxes; 0 when disjoint.
double iou(const BoundingBox& a, const BoundingBox& b);

struct LabeledBox {
  BoundingBox gold;
  std::optional<BoundingBox> pred;  // nullopt: no usable box predicted
  bool invalid = false;
};

// Share of records whose predicted box reaches the IoU threshold, x100.
double box_accuracy(const std::vector<LabeledBox>& records,
                    double min_iou = 0.5);

struct TaggedBinary {
  std::string gold;
  std::string pred;
  bool invalid = false;
  std::string subset_tag = "general";  // or "behavior-centric"
};

// Identity score over the pooled general + behavior-centric subsets: the
// two subsets are concatenated and macro accuracy is taken over the pool,
// so both answer classes and both subsets weigh in through one number.
// Throws SchemaError on an unknown tag, MissingClass / EmptySet as above.
double pooled_identity_score(const std::vector<TaggedBinary>& records);

// "61.60" — fixed two decimals, exact half-up rounding.
std::string format_score(double value);

// ---------------------------------------------------------------------------
// Benchmark manifest
// ---------------------------------------------------------------------------

// Parses and validates a benchmark manifest (see docs in README). Every
// violation names the instance id and field. Duplicate instance ids are
// rejected.
std::vector<QueryInstance> load_manifest(const std::string& path);

// ---------------------------------------------------------------------------
// Prediction records
// ---------------------------------------------------------------------------

struct PredictionRecord {
  std::string instance_id;
  Task task = Task::EgoId;
  std::string model;
  std::string regime;
  std::string gold;
  std::string pred;
  std::optional<BoundingBox> gold_box;
  std::optional<BoundingBox> pred_box;
  bool invalid = false;
  std::string subset_tag;
  int calls = 0;
  std::vector<std::string> requested;
  std::vector<std::string> decisive;

  bool operator==(const PredictionRecord&) const = default;
};

PredictionRecord make_prediction_record(const QueryInstance& query,
                                        const AnswerResult& result);

std::string predictions_to_json_text(const std::vector<PredictionRecord>&);
std::vector<PredictionRecord> predictions_from_json_text(
    const std::string& text);

// Score of one task's records under one (model, regime) cell.
struct TaskScore {
  double value = 0.0;
  int support = 0;  // records scored
};

// Dispatches to the task's metric. Throws EmptySet on no records.
TaskScore score_task(Task task, const std::vector<PredictionRecord>& records);

// ---------------------------------------------------------------------------
// Diagnostic statistics
// ---------------------------------------------------------------------------

struct BankStats {
  int banks = 0;
  int clips = 0;
  int candidates = 0;
  double cues_per_clip = 0.0;
  double entries_per_bank = 0.0;       // active entries
  double appearance_share = 0.0;       // of active entries, 0..1
  double owned_objects_share = 0.0;
  double behavior_share = 0.0;
  double compression = 0.0;            // active entries / candidates
  double revision_op_share = 0.0;      // confirm+revise+retract / non-drop
  double updated_entry_share = 0.0;    // active entries ever confirmed/revised
};

// Aggregates construction logs and their finished banks. Throws EmptyLog
// when there is nothing to aggregate.
BankStats bank_stats(const std::vector<ConstructionLog>& logs,
                     const std::vector<Bank>& banks);

struct QueryStats {
  int queries = 0;                  // adaptive-mode query traces
  int with_request = 0;
  double visual_request_rate = 0.0; // with_request / queries, 0..1
  double requested_mean = 0.0;      // over request-bearing queries
  double decisive_mean = 0.0;
  double requested_appearance_share = 0.0;  // of requested entries
  double requested_owned_objects_share = 0.0;
  double requested_behavior_share = 0.0;
};

// Aggregates adaptive-mode query traces. Throws EmptyLog when none.
QueryStats query_stats(const std::vector<QueryTrace>& traces);

// ---------------------------------------------------------------------------
// Rendering (report.cpp)
// ---------------------------------------------------------------------------

// One report row: scores per task for a (model, regime) pair.
struct ReportRow {
  std::string model;
  std::string regime;
  std::map<Task, TaskScore> scores;
};

// Markdown table, one row per (model, regime), one column per task, "-" for
// tasks without records.
std::string render_report_markdown(const std::vector<ReportRow>& rows);

// Flat per-instance csv across all prediction files.
std::string render_records_csv(const std::vector<PredictionRecord>& records);

// Markdown rendering of the diagnostic stats.
std::string render_stats_markdown(const BankStats& bank,
                                  const std::optional<QueryStats>& query);

}  // namespace ctxbank
