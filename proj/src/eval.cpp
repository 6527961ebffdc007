#include "ctxbank/eval.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "ctxbank/errors.hpp"
#include "ctxbank/media.hpp"
#include "json_util.hpp"

namespace ctxbank {

using jsonu::Json;

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

double macro_accuracy(const std::vector<LabeledBinary>& records) {
  if (records.empty()) throw EmptySet("macro_accuracy: no records");
  int n_yes = 0, n_no = 0, c_yes = 0, c_no = 0;
  for (const auto& r : records) {
    if (r.gold == "Yes") {
      ++n_yes;
      if (!r.invalid && r.pred == "Yes") ++c_yes;
    } else if (r.gold == "No") {
      ++n_no;
      if (!r.invalid && r.pred == "No") ++c_no;
    } else {
      throw SchemaError("macro_accuracy: gold label '" + r.gold +
                        "' is not Yes/No");
    }
  }
  if (n_yes == 0 || n_no == 0) {
    throw MissingClass("macro_accuracy: both answer classes must appear "
                       "(got " +
                       std::to_string(n_yes) + " Yes, " + std::to_string(n_no) +
                       " No)");
  }
  const double acc_yes = static_cast<double>(c_yes) / n_yes;
  const double acc_no = static_cast<double>(c_no) / n_no;
  return (acc_yes + acc_no) / 2.0 * 100.0;
}

double choice_accuracy(const std::vector<LabeledChoice>& records) {
  if (records.empty()) throw EmptySet("choice_accuracy: no records");
  int correct = 0;
  for (const auto& r : records) {
    if (!r.invalid && !r.gold.empty() && r.pred == r.gold) ++correct;
  }
  return static_cast<double>(correct) / records.size() * 100.0;
}

double iou(const BoundingBox& a, const BoundingBox& b) {
  const double ix = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double iy = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

double box_accuracy(const std::vector<LabeledBox>& records, double min_iou) {
  if (records.empty()) throw EmptySet("box_accuracy: no records");
  int hits = 0;
  for (const auto& r : records) {
    if (r.invalid || !r.pred) continue;
    if (iou(r.gold, *r.pred) >= min_iou) ++hits;
  }
  return static_cast<double>(hits) / records.size() * 100.0;
}

double pooled_identity_score(const std::vector<TaggedBinary>& records) {
  if (records.empty()) throw EmptySet("pooled_identity_score: no records");
  std::vector<LabeledBinary> pooled;
  pooled.reserve(records.size());
  for (const auto& r : records) {
    if (r.subset_tag != "general" && r.subset_tag != "behavior-centric") {
      throw SchemaError("pooled_identity_score: unknown subset tag '" +
                        r.subset_tag + "'");
    }
    pooled.push_back({r.gold, r.pred, r.invalid});
  }
  return macro_accuracy(pooled);
}

std::string format_score(double value) {
  // Exact half-up at two decimals, done in integers so representable ties
  // (0.125 -> "0.13") round up regardless of how the platform's printf
  // would break them.
  const bool negative = value < 0;
  const long long cents = static_cast<long long>(
      std::floor(static_cast<long double>(std::abs(value)) * 100.0L + 0.5L));
  std::string out = negative && cents != 0 ? "-" : "";
  out += std::to_string(cents / 100);
  const long long frac = cents % 100;
  out += ".";
  out += static_cast<char>('0' + frac / 10);
  out += static_cast<char>('0' + frac % 10);
  return out;
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

namespace {

constexpr int kManifestVersion = 1;

BoundingBox box_from_json(const Json& arr, const std::string& path) {
  if (!arr.is_array() || arr.size() != 4) {
    throw SchemaError(path + ": expected [x1, y1, x2, y2]");
  }
  for (const auto& v : arr) {
    if (!v.is_number()) throw SchemaError(path + ": expected numbers");
  }
  BoundingBox box{arr.at(0).get<double>(), arr.at(1).get<double>(),
                  arr.at(2).get<double>(), arr.at(3).get<double>()};
  if (box.x2 <= box.x1 || box.y2 <= box.y1) {
    throw SchemaError(path + ": box corners must satisfy x1<x2, y1<y2");
  }
  return box;
}

Json box_to_json(const BoundingBox& box) {
  return Json::array({box.x1, box.y1, box.x2, box.y2});
}

}  // namespace

std::vector<QueryInstance> load_manifest(const std::string& path) {
  const Json j = jsonu::parse_text(read_text_file(path), "manifest");
  if (jsonu::require_int(j, "schema_version", "manifest") !=
      kManifestVersion) {
    throw SchemaVersionMismatch("manifest schema_version unsupported");
  }
  const Json& instances = jsonu::require_array(j, "instances", "manifest");

  std::vector<QueryInstance> out;
  std::set<std::string> seen_ids;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const Json& ij = instances.at(i);
    std::string where = "manifest.instances[" + std::to_string(i) + "]";
    QueryInstance q;
    q.instance_id = jsonu::require_string(ij, "instance_id", where);
    where = "instance '" + q.instance_id + "'";
    if (!seen_ids.insert(q.instance_id).second) {
      throw SchemaError(where + ": duplicate instance_id");
    }

    try {
      q.task = task_from_string(jsonu::require_string(ij, "task", where));
    } catch (const ConfigError& e) {
      throw SchemaError(where + ": " + e.what());
    }
    q.bank_id = jsonu::optional_string(ij, "bank_id", where, q.instance_id);
    q.question = jsonu::require_string(ij, "question", where);
    if (q.question.empty()) throw SchemaError(where + ": empty question");

    const Json& query = jsonu::require_object(ij, "query", where);
    q.query_clip_id = jsonu::require_string(query, "clip_id", where + ".query");
    try {
      q.query_modality = modality_from_string(
          jsonu::require_string(query, "modality", where + ".query"));
    } catch (const ConfigError& e) {
      throw SchemaError(where + ".query: " + e.what());
    }

    const Json& context = jsonu::require_array(ij, "context", where);
    for (std::size_t k = 0; k < context.size(); ++k) {
      const std::string cw = where + ".context[" + std::to_string(k) + "]";
      const Json& cj = context.at(k);
      ContextItem item;
      item.item_id = jsonu::require_string(cj, "item_id", cw);
      item.declaration = jsonu::require_string(cj, "declaration", cw);
      item.clip_id = jsonu::require_string(cj, "clip_id", cw);
      try {
        item.modality =
            modality_from_string(jsonu::require_string(cj, "modality", cw));
      } catch (const ConfigError& e) {
        throw SchemaError(cw + ": " + e.what());
      }
      q.context.push_back(std::move(item));
    }
    if (q.context.empty()) {
      throw SchemaError(where + ": context must not be empty");
    }

    switch (task_answer_kind(q.task)) {
      case AnswerKind::Binary: {
        q.gold = jsonu::require_string(ij, "gold", where);
        if (q.gold != "Yes" && q.gold != "No") {
          throw SchemaError(where + ".gold: expected 'Yes' or 'No'");
        }
        break;
      }
      case AnswerKind::Choice: {
        q.gold = jsonu::require_string(ij, "gold", where);
        const Json& options = jsonu::require_array(ij, "options", where);
        if (options.size() < 2 || options.size() > 26) {
          throw SchemaError(where + ".options: expected 2..26 options");
        }
        for (std::size_t k = 0; k < options.size(); ++k) {
          if (!options.at(k).is_string()) {
            throw SchemaError(where + ".options[" + std::to_string(k) +
                              "]: expected a string");
          }
          q.options.push_back(options.at(k).get<std::string>());
        }
        if (q.gold.size() != 1 || q.gold[0] < 'A' ||
            q.gold[0] >= static_cast<char>('A' + q.options.size())) {
          throw SchemaError(where + ".gold: expected a letter within the "
                            "option range");
        }
        break;
      }
      case AnswerKind::Box: {
        q.gold_box = box_from_json(jsonu::require(ij, "gold_box", where),
                                   where + ".gold_box");
        const Json& size = jsonu::require_array(ij, "image_size", where);
        if (size.size() != 2 || !size.at(0).is_number_integer() ||
            !size.at(1).is_number_integer()) {
          throw SchemaError(where + ".image_size: expected [width, height]");
        }
        q.image_width = size.at(0).get<int>();
        q.image_height = size.at(1).get<int>();
        if (q.image_width < 1 || q.image_height < 1) {
          throw SchemaError(where + ".image_size: must be positive");
        }
        break;
      }
    }

    if (q.task == Task::EgoId) {
      q.subset_tag = jsonu::optional_string(ij, "subset", where, "general");
      if (q.subset_tag != "general" && q.subset_tag != "behavior-centric") {
        throw SchemaError(where + ".subset: expected 'general' or "
                          "'behavior-centric'");
      }
    }

    out.push_back(std::move(q));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Prediction records
// ---------------------------------------------------------------------------

PredictionRecord make_prediction_record(const QueryInstance& query,
                                        const AnswerResult& result) {
  PredictionRecord rec;
  rec.instance_id = query.instance_id;
  rec.task = query.task;
  rec.model = result.trace.model;
  rec.regime = result.trace.regime;
  rec.gold = query.gold;
  rec.pred = result.answer;
  rec.gold_box = query.gold_box;
  rec.pred_box = result.box;
  rec.invalid = result.invalid;
  rec.subset_tag = query.subset_tag;
  rec.calls = static_cast<int>(result.trace.calls.size());
  for (const auto& r : result.trace.requested) {
    rec.requested.push_back(r.entry_id);
  }
  for (const auto& r : result.trace.decisive) {
    rec.decisive.push_back(r.entry_id);
  }
  return rec;
}

std::string predictions_to_json_text(
    const std::vector<PredictionRecord>& records) {
  Json j;
  j["schema_version"] = 1;
  j["records"] = Json::array();
  for (const auto& rec : records) {
    Json rj;
    rj["instance_id"] = rec.instance_id;
    rj["task"] = to_string(rec.task);
    rj["model"] = rec.model;
    rj["regime"] = rec.regime;
    rj["gold"] = rec.gold;
    rj["pred"] = rec.pred;
    if (rec.gold_box) rj["gold_box"] = box_to_json(*rec.gold_box);
    if (rec.pred_box) rj["pred_box"] = box_to_json(*rec.pred_box);
    rj["invalid"] = rec.invalid;
    rj["subset"] = rec.subset_tag;
    rj["calls"] = rec.calls;
    rj["requested"] = rec.requested;
    rj["decisive"] = rec.decisive;
    j["records"].push_back(std::move(rj));
  }
  return j.dump(2) + "\n";
}

std::vector<PredictionRecord> predictions_from_json_text(
    const std::string& text) {
  const Json j = jsonu::parse_text(text, "predictions");
  if (jsonu::require_int(j, "schema_version", "predictions") != 1) {
    throw SchemaVersionMismatch("predictions schema_version unsupported");
  }
  std::vector<PredictionRecord> out;
  const Json& records = jsonu::require_array(j, "records", "predictions");
  for (std::size_t i = 0; i < records.size(); ++i) {
    const std::string path = "predictions[" + std::to_string(i) + "]";
    const Json& rj = records.at(i);
    PredictionRecord rec;
    rec.instance_id = jsonu::require_string(rj, "instance_id", path);
    rec.task = task_from_string(jsonu::require_string(rj, "task", path));
    rec.model = jsonu::require_string(rj, "model", path);
    rec.regime = jsonu::require_string(rj, "regime", path);
    rec.gold = jsonu::require_string(rj, "gold", path);
    rec.pred = jsonu::require_string(rj, "pred", path);
    if (rj.contains("gold_box")) {
      rec.gold_box = box_from_json(rj.at("gold_box"), path + ".gold_box");
    }
    if (rj.contains("pred_box")) {
      rec.pred_box = box_from_json(rj.at("pred_box"), path + ".pred_box");
    }
    rec.invalid = jsonu::require_bool(rj, "invalid", path);
    rec.subset_tag = jsonu::optional_string(rj, "subset", path);
    rec.calls = static_cast<int>(jsonu::require_int(rj, "calls", path));
    rec.requested = [&] {
      std::vector<std::string> v;
      for (const auto& s : jsonu::require_array(rj, "requested", path)) {
        v.push_back(s.get<std::string>());
      }
      return v;
    }();
    rec.decisive = [&] {
      std::vector<std::string> v;
      for (const auto& s : jsonu::require_array(rj, "decisive", path)) {
        v.push_back(s.get<std::string>());
      }
      return v;
    }();
    out.push_back(std::move(rec));
  }
  return out;
}

TaskScore score_task(Task task, const std::vector<PredictionRecord>& records) {
  if (records.empty()) throw EmptySet("score_task: no records");
  TaskScore score;
  score.support = static_cast<int>(records.size());
  switch (task_answer_kind(task)) {
    case AnswerKind::Binary: {
      if (task == Task::EgoId) {
        std::vector<TaggedBinary> tagged;
        for (const auto& r : records) {
          tagged.push_back({r.gold, r.pred, r.invalid,
                            r.subset_tag.empty() ? "general" : r.subset_tag});
        }
        score.value = pooled_identity_score(tagged);
      } else {
        std::vector<LabeledBinary> flat;
        for (const auto& r : records) {
          flat.push_back({r.gold, r.pred, r.invalid});
        }
        score.value = macro_accuracy(flat);
      }
      break;
    }
    case AnswerKind::Choice: {
      std::vector<LabeledChoice> flat;
      for (const auto& r : records) flat.push_back({r.gold, r.pred, r.invalid});
      score.value = choice_accuracy(flat);
      break;
    }
    case AnswerKind::Box: {
      std::vector<LabeledBox> flat;
      for (const auto& r : records) {
        if (!r.gold_box) {
          throw SchemaError("score_task: record " + r.instance_id +
                            " lacks gold_box");
        }
        flat.push_back({*r.gold_box, r.pred_box, r.invalid});
      }
      score.value = box_accuracy(flat);
      break;
    }
  }
  return score;
}

// ---------------------------------------------------------------------------
// Diagnostic statistics
// ---------------------------------------------------------------------------

BankStats bank_stats(const std::vector<ConstructionLog>& logs,
                     const std::vector<Bank>& banks) {
  BankStats s;
  s.banks = static_cast<int>(banks.size());
  int applied_non_drop = 0;
  int applied_updates = 0;  // confirm + revise + retract
  for (const auto& log : logs) {
    for (const auto& item : log.items) {
      ++s.clips;
      s.candidates += item.candidate_count;
      for (const auto& d : item.decisions) {
        if (d.applied == DecisionKind::Drop) continue;
        ++applied_non_drop;
        if (d.applied != DecisionKind::Add) ++applied_updates;
      }
    }
  }
  if (s.clips == 0 || s.candidates == 0 || banks.empty()) {
    throw EmptyLog("bank_stats: nothing to aggregate");
  }

  int active_total = 0;
  int by_type[3] = {0, 0, 0};
  int updated = 0;
  for (const auto& bank : banks) {
    for (const BankEntry* entry : bank.active_entries()) {
      ++active_total;
      ++by_type[static_cast<int>(entry->memory_type)];
      const bool touched = std::any_of(
          entry->history.begin(), entry->history.end(),
          [](const HistoryRecord& h) {
            return h.op == DecisionKind::Confirm ||
                   h.op == DecisionKind::Revise;
          });
      if (touched) ++updated;
    }
  }

  s.cues_per_clip = static_cast<double>(s.candidates) / s.clips;
  s.entries_per_bank = static_cast<double>(active_total) / s.banks;
  if (active_total > 0) {
    s.appearance_share = static_cast<double>(by_type[0]) / active_total;
    s.owned_objects_share = static_cast<double>(by_type[1]) / active_total;
    s.behavior_share = static_cast<double>(by_type[2]) / active_total;
    s.updated_entry_share = static_cast<double>(updated) / active_total;
  }
  s.compression = static_cast<double>(active_total) / s.candidates;
  if (applied_non_drop > 0) {
    s.revision_op_share =
        static_cast<double>(applied_updates) / applied_non_drop;
  }
  return s;
}

QueryStats query_stats(const std::vector<QueryTrace>& traces) {
  QueryStats s;
  int requested_total = 0;
  int decisive_total = 0;
  int req_by_type[3] = {0, 0, 0};
  for (const auto& trace : traces) {
    if (trace.regime != "bank:adaptive") continue;
    ++s.queries;
    if (trace.requested.empty()) continue;
    ++s.with_request;
    requested_total += static_cast<int>(trace.requested.size());
    decisive_total += static_cast<int>(trace.decisive.size());
    for (const auto& ref : trace.requested) {
      ++req_by_type[static_cast<int>(ref.type)];
    }
  }
  if (s.queries == 0) {
    throw EmptyLog("query_stats: no adaptive-mode traces");
  }
  s.visual_request_rate = static_cast<double>(s.with_request) / s.queries;
  if (s.with_request > 0) {
    s.requested_mean = static_cast<double>(requested_total) / s.with_request;
    s.decisive_mean = static_cast<double>(decisive_total) / s.with_request;
  }
  if (requested_total > 0) {
    s.requested_appearance_share =
        static_cast<double>(req_by_type[0]) / requested_total;
    s.requested_owned_objects_share =
        static_cast<double>(req_by_type[1]) / requested_total;
    s.requested_behavior_share =
        static_cast<double>(req_by_type[2]) / requested_total;
  }
  return s;
}

}  // namespace ctxbank
