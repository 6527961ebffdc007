#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctxbank/errors.hpp"
#include "ctxbank/eval.hpp"
#include "ctxbank/media.hpp"
#include "support/test_support.hpp"

using namespace ctxbank;
namespace ct = ctxbank::testing;

namespace {

doctest::Approx near(double v) { return doctest::Approx(v).epsilon(1e-12); }

CandidateCue cue(std::string id, MemoryType type, std::string descriptor,
                 Evidence anchor) {
  CandidateCue c;
  c.candidate_id = std::move(id);
  c.memory_type = type;
  c.descriptor = std::move(descriptor);
  c.anchor = std::move(anchor);
  return c;
}

}  // namespace

// ---------------------------------------------------------------------------
// Binary macro accuracy
// ---------------------------------------------------------------------------

TEST_CASE("macro accuracy averages the per-class accuracies") {
  // acc(Yes) = 2/3, acc(No) = 1/1 -> (2/3 + 1) / 2 * 100.
  const std::vector<LabeledBinary> records = {
      {"Yes", "Yes"}, {"Yes", "No"}, {"Yes", "Yes"}, {"No", "No"}};
  CHECK(macro_accuracy(records) == near(250.0 / 3.0));
}

TEST_CASE("invalid predictions never score, even when the text matches") {
  const std::vector<LabeledBinary> records = {
      {"Yes", "Yes", true}, {"Yes", "No"}, {"Yes", "Yes"}, {"No", "No"}};
  // acc(Yes) drops to 1/3.
  CHECK(macro_accuracy(records) == near(200.0 / 3.0));
}

TEST_CASE("non-answer predictions count as wrong, bad gold is rejected") {
  const std::vector<LabeledBinary> ok = {
      {"Yes", "definitely"}, {"No", "No"}};
  CHECK(macro_accuracy(ok) == near(50.0));

  CHECK_THROWS_AS(
      macro_accuracy({{"Maybe", "Yes"}, {"No", "No"}}), SchemaError);
  CHECK_THROWS_AS(
      macro_accuracy({{"Yes", "Yes"}, {"Yes", "No"}}), MissingClass);
  CHECK_THROWS_AS(macro_accuracy({}), EmptySet);
}

TEST_CASE("macro accuracy matches a brute-force single loop on random sets") {
  std::mt19937 rng(20260816);
  for (int round = 0; round < 60; ++round) {
    std::vector<LabeledBinary> records;
    const int n = 2 + static_cast<int>(rng() % 40);
    records.push_back({"Yes", rng() % 2 ? "Yes" : "No"});
    records.push_back({"No", rng() % 2 ? "Yes" : "No"});
    for (int i = 2; i < n; ++i) {
      LabeledBinary r;
      r.gold = rng() % 2 ? "Yes" : "No";
      const int roll = static_cast<int>(rng() % 4);
      r.pred = roll == 0 ? "Yes" : roll == 1 ? "No" : roll == 2 ? "" : "B";
      r.invalid = rng() % 5 == 0;
      records.push_back(r);
    }

    double seen[2] = {0, 0}, hit[2] = {0, 0};
    for (const auto& r : records) {
      const int cls = r.gold == "Yes" ? 0 : 1;
      seen[cls] += 1;
      if (!r.invalid && r.pred == r.gold) hit[cls] += 1;
    }
    const double expected = (hit[0] / seen[0] + hit[1] / seen[1]) * 50.0;
    CHECK(std::abs(macro_accuracy(records) - expected) <= 1e-9);
  }
}

// ---------------------------------------------------------------------------
// Choice accuracy
// ---------------------------------------------------------------------------

TEST_CASE("choice accuracy is plain accuracy with invalids wrong") {
  const std::vector<LabeledChoice> records = {
      {"A", "A"}, {"B", "A"}, {"C", "C", true}};
  CHECK(choice_accuracy(records) == near(100.0 / 3.0));
  CHECK(choice_accuracy({{"A", "A"}}) == near(100.0));
  CHECK_THROWS_AS(choice_accuracy({}), EmptySet);
}

// ---------------------------------------------------------------------------
// Boxes
// ---------------------------------------------------------------------------

TEST_CASE("iou handles overlap, containment, touching and disjoint boxes") {
  CHECK(iou({0, 0, 2, 2}, {1, 1, 3, 3}) == near(1.0 / 7.0));
  CHECK(iou({0, 0, 10, 10}, {5, 0, 15, 10}) == near(1.0 / 3.0));
  CHECK(iou({0, 0, 4, 4}, {0, 0, 4, 4}) == near(1.0));
  CHECK(iou({0, 0, 4, 4}, {1, 1, 2, 2}) == near(1.0 / 16.0));
  CHECK(iou({0, 0, 1, 1}, {1, 0, 2, 1}) == 0.0);  // edge contact only
  CHECK(iou({0, 0, 1, 1}, {5, 5, 6, 6}) == 0.0);
}

TEST_CASE("box accuracy thresholds at the iou cut, inclusively") {
  const BoundingBox gold{0, 0, 10, 10};
  const std::vector<LabeledBox> records = {
      {gold, BoundingBox{0, 0, 10, 10}},        // iou 1.0: hit
      {gold, std::nullopt},                     // no box: miss
      {gold, BoundingBox{5, 0, 15, 10}},        // iou 1/3: miss
      {gold, BoundingBox{0, 0, 10, 10}, true},  // invalid: miss
  };
  CHECK(box_accuracy(records) == near(25.0));

  // iou exactly 0.5 counts as a hit.
  const std::vector<LabeledBox> boundary = {{gold, BoundingBox{0, 0, 10, 5}}};
  CHECK(iou(gold, *boundary[0].pred) == near(0.5));
  CHECK(box_accuracy(boundary) == near(100.0));
  CHECK(box_accuracy(boundary, 0.51) == near(0.0));
  CHECK_THROWS_AS(box_accuracy({}), EmptySet);
}

TEST_CASE("box accuracy matches a brute-force loop on random sets") {
  std::mt19937 rng(7);
  auto coord = [&] { return static_cast<double>(rng() % 100); };
  for (int round = 0; round < 40; ++round) {
    std::vector<LabeledBox> records;
    const int n = 1 + static_cast<int>(rng() % 30);
    for (int i = 0; i < n; ++i) {
      LabeledBox r;
      double x1 = coord(), y1 = coord();
      r.gold = {x1, y1, x1 + 1 + coord(), y1 + 1 + coord()};
      if (rng() % 6 != 0) {
        double px = coord(), py = coord();
        r.pred = BoundingBox{px, py, px + 1 + coord(), py + 1 + coord()};
      }
      r.invalid = rng() % 7 == 0;
      records.push_back(r);
    }

    int hits = 0;
    for (const auto& r : records) {
      if (r.invalid || !r.pred) continue;
      const double ox = std::min(r.gold.x2, r.pred->x2) -
                        std::max(r.gold.x1, r.pred->x1);
      const double oy = std::min(r.gold.y2, r.pred->y2) -
                        std::max(r.gold.y1, r.pred->y1);
      const double inter = (ox > 0 && oy > 0) ? ox * oy : 0.0;
      const double uni = r.gold.area() + r.pred->area() - inter;
      if (uni > 0 && inter / uni >= 0.5) ++hits;
    }
    const double expected = 100.0 * hits / records.size();
    CHECK(std::abs(box_accuracy(records) - expected) <= 1e-9);
  }
}

// ---------------------------------------------------------------------------
// Pooled identity score
// ---------------------------------------------------------------------------

TEST_CASE("pooled identity score is macro accuracy over both subsets") {
  const std::vector<TaggedBinary> records = {
      {"Yes", "Yes", false, "general"},
      {"No", "Yes", false, "general"},
      {"Yes", "Yes", false, "behavior-centric"},
      {"No", "No", false, "behavior-centric"},
  };
  // Pool: acc(Yes) = 2/2, acc(No) = 1/2 -> 75.
  CHECK(pooled_identity_score(records) == near(75.0));

  CHECK_THROWS_AS(pooled_identity_score(
                      {{"Yes", "Yes", false, "weird"},
                       {"No", "No", false, "general"}}),
                  SchemaError);
  CHECK_THROWS_AS(pooled_identity_score({}), EmptySet);
}

TEST_CASE("a 250-record pooled split lands exactly on 61.60") {
  // 125 Yes-gold (60 general + 65 behavior-centric) with 96 correct,
  // 125 No-gold (65 general + 60 behavior-centric) with 58 correct:
  // (96/125 + 58/125) / 2 * 100 = 61.6.
  std::vector<TaggedBinary> records;
  for (int i = 0; i < 125; ++i) {
    TaggedBinary r;
    r.gold = "Yes";
    r.pred = i < 96 ? "Yes" : "No";
    r.subset_tag = i < 60 ? "general" : "behavior-centric";
    records.push_back(r);
  }
  for (int i = 0; i < 125; ++i) {
    TaggedBinary r;
    r.gold = "No";
    r.pred = i < 58 ? "No" : "Yes";
    r.subset_tag = i < 65 ? "general" : "behavior-centric";
    records.push_back(r);
  }
  const double score = pooled_identity_score(records);
  CHECK(score == near(61.6));
  CHECK(format_score(score) == "61.60");
}

// ---------------------------------------------------------------------------
// Score formatting
// ---------------------------------------------------------------------------

TEST_CASE("scores render with two decimals and exact half-up ties") {
  CHECK(format_score(0.0) == "0.00");
  CHECK(format_score(0.5) == "0.50");
  CHECK(format_score(100.0) == "100.00");
  CHECK(format_score(100.0 / 3.0) == "33.33");
  CHECK(format_score(200.0 / 3.0) == "66.67");
  CHECK(format_score(0.125) == "0.13");  // exact tie rounds up
  CHECK(format_score(2.625) == "2.63");  // so does this one
  // 61.595 itself is not representable: the nearest double sits just below
  // the tie, so the exact rounding of the value actually passed is down.
  CHECK(format_score(61.595) == "61.59");
  CHECK(format_score(61.6) == "61.60");
  CHECK(format_score(99.999) == "100.00");
  CHECK(format_score(-1.5) == "-1.50");
  CHECK(format_score(-0.001) == "0.00");  // never "-0.00"
}

// ---------------------------------------------------------------------------
// Benchmark manifest
// ---------------------------------------------------------------------------

namespace {

nlohmann::ordered_json context_item(const std::string& id) {
  return {{"item_id", id},
          {"declaration", "Alice"},
          {"clip_id", "clip_01"},
          {"modality", "image"}};
}

nlohmann::ordered_json valid_manifest() {
  nlohmann::ordered_json binary = {
      {"instance_id", "q_binary"},
      {"task", "perid"},
      {"question", "Is Alice in the query image?"},
      {"query", {{"clip_id", "clip_09"}, {"modality", "image"}}},
      {"context", nlohmann::ordered_json::array({context_item("ref_1")})},
      {"gold", "Yes"},
  };
  nlohmann::ordered_json choice = {
      {"instance_id", "q_choice"},
      {"task", "perrel"},
      {"bank_id", "shared_bank"},
      {"question", "How do Alice and Bob know each other?"},
      {"query", {{"clip_id", "clip_09"}, {"modality", "image"}}},
      {"context", nlohmann::ordered_json::array(
                      {context_item("ref_1"), context_item("ref_2")})},
      {"gold", "B"},
      {"options", {"colleagues", "siblings", "strangers"}},
  };
  nlohmann::ordered_json box = {
      {"instance_id", "q_box"},
      {"task", "objdet"},
      {"question", "Locate the red mug."},
      {"query", {{"clip_id", "clip_09"}, {"modality", "image"}}},
      {"context", nlohmann::ordered_json::array({context_item("ref_1")})},
      {"gold_box", {10, 20, 110, 220}},
      {"image_size", {640, 480}},
  };
  nlohmann::ordered_json ego = {
      {"instance_id", "q_ego"},
      {"task", "egoid"},
      {"question", "Is this clip worn by the known wearer?"},
      {"query", {{"clip_id", "clip_09"}, {"modality", "video"}}},
      {"context", nlohmann::ordered_json::array({context_item("ref_1")})},
      {"gold", "No"},
      {"subset", "behavior-centric"},
  };
  nlohmann::ordered_json m;
  m["schema_version"] = 1;
  m["instances"] = nlohmann::ordered_json::array({binary, choice, box, ego});
  return m;
}

std::string write_manifest(const ct::TempDir& dir,
                           const nlohmann::ordered_json& m,
                           const std::string& name = "manifest.json") {
  const std::string path = (dir / name).string();
  write_text_file(path, m.dump(2) + "\n");
  return path;
}

}  // namespace

TEST_CASE("a well-formed manifest loads every answer kind") {
  ct::TempDir dir;
  const auto instances = load_manifest(write_manifest(dir, valid_manifest()));
  REQUIRE(instances.size() == 4);

  const QueryInstance& binary = instances[0];
  CHECK(binary.instance_id == "q_binary");
  CHECK(binary.task == Task::PersonId);
  CHECK(binary.bank_id == "q_binary");  // defaults to the instance id
  CHECK(binary.gold == "Yes");
  CHECK(binary.query_clip_id == "clip_09");
  CHECK(binary.query_modality == Modality::Image);
  REQUIRE(binary.context.size() == 1);
  CHECK(binary.context[0].item_id == "ref_1");
  CHECK(binary.context[0].declaration == "Alice");

  const QueryInstance& choice = instances[1];
  CHECK(choice.task == Task::PersonRel);
  CHECK(choice.bank_id == "shared_bank");
  CHECK(choice.options ==
        std::vector<std::string>{"colleagues", "siblings", "strangers"});

  const QueryInstance& box = instances[2];
  CHECK(box.task == Task::ObjectDetect);
  REQUIRE(box.gold_box.has_value());
  CHECK(*box.gold_box == BoundingBox{10, 20, 110, 220});
  CHECK(box.image_width == 640);
  CHECK(box.image_height == 480);

  const QueryInstance& ego = instances[3];
  CHECK(ego.task == Task::EgoId);
  CHECK(ego.subset_tag == "behavior-centric");
  CHECK(ego.query_modality == Modality::Video);
}

TEST_CASE("manifest violations are named and typed") {
  ct::TempDir dir;

  auto damaged = [&](auto mutate, const std::string& name) {
    auto m = valid_manifest();
    mutate(m);
    return write_manifest(dir, m, name);
  };

  CHECK_THROWS_AS(
      load_manifest(damaged([](auto& m) { m["schema_version"] = 2; }, "v.json")),
      SchemaVersionMismatch);
  CHECK_THROWS_AS(
      load_manifest(damaged(
          [](auto& m) { m["instances"][1]["instance_id"] = "q_binary"; },
          "dup.json")),
      SchemaError);
  CHECK_THROWS_AS(
      load_manifest(damaged(
          [](auto& m) { m["instances"][0]["task"] = "toaster"; }, "task.json")),
      SchemaError);
  CHECK_THROWS_AS(
      load_manifest(damaged(
          [](auto& m) { m["instances"][0]["question"] = ""; }, "q.json")),
      SchemaError);
  CHECK_THROWS_AS(
      load_manifest(damaged(
          [](auto& m) {
            m["instances"][0]["context"] = nlohmann::ordered_json::array();
          },
          "ctx.json")),
      SchemaError);
  CHECK_THROWS_AS(
      load_manifest(damaged(
          [](auto& m) {
            m["instances"][0]["query"]["modality"] = "hologram";
          },
          "mod.json")),
      SchemaError);
  CHECK_THROWS_AS(
      load_manifest(damaged(
          [](auto& m) { m["instances"][0]["gold"] = "Maybe"; }, "gold.json")),
      SchemaError);
  CHECK_THROWS_AS(
      load_manifest(damaged(
          [](auto& m) { m["instances"][1]["options"] = {"only one"}; },
          "opt1.json")),
      SchemaError);
  CHECK_THROWS_AS(
      load_manifest(damaged(
          [](auto& m) { m["instances"][1]["gold"] = "E"; }, "optr.json")),
      SchemaError);
  CHECK_THROWS_AS(
      load_manifest(damaged(
          [](auto& m) { m["instances"][1]["options"][0] = 7; }, "opts.json")),
      SchemaError);
  CHECK_THROWS_AS(
      load_manifest(damaged(
          [](auto& m) { m["instances"][2]["gold_box"] = {10, 20, 110}; },
          "box3.json")),
      SchemaError);
  CHECK_THROWS_AS(
      load_manifest(damaged(
          [](auto& m) { m["instances"][2]["gold_box"] = {110, 20, 10, 220}; },
          "boxr.json")),
      SchemaError);
  CHECK_THROWS_AS(
      load_manifest(damaged(
          [](auto& m) { m["instances"][2]["image_size"] = {0, 480}; },
          "size0.json")),
      SchemaError);
  CHECK_THROWS_AS(
      load_manifest(damaged(
          [](auto& m) { m["instances"][2]["image_size"] = {640.5, 480}; },
          "sizef.json")),
      SchemaError);
  CHECK_THROWS_AS(
      load_manifest(damaged(
          [](auto& m) { m["instances"][3]["subset"] = "oddball"; },
          "subset.json")),
      SchemaError);

  // Field errors carry the instance id so a 500-line manifest is debuggable.
  try {
    load_manifest(damaged(
        [](auto& m) { m["instances"][2]["gold_box"] = {110, 20, 10, 220}; },
        "boxmsg.json"));
    FAIL("expected SchemaError");
  } catch (const SchemaError& e) {
    CHECK(std::string(e.what()).find("q_box") != std::string::npos);
  }

  CHECK_THROWS_AS(load_manifest((dir / "missing.json").string()), IoError);
}

// ---------------------------------------------------------------------------
// Prediction records
// ---------------------------------------------------------------------------

namespace {

std::vector<PredictionRecord> sample_records() {
  PredictionRecord binary;
  binary.instance_id = "q_binary";
  binary.task = Task::PersonId;
  binary.model = "model";
  binary.regime = "bank:adaptive";
  binary.gold = "Yes";
  binary.pred = "Yes";
  binary.calls = 2;
  binary.requested = {"e_001", "e_004"};
  binary.decisive = {"e_001"};

  PredictionRecord box;
  box.instance_id = "q_box";
  box.task = Task::ObjectDetect;
  box.model = "model";
  box.regime = "visual-ctx:1";
  box.gold_box = BoundingBox{10, 20, 110, 220};
  box.pred_box = BoundingBox{12, 25, 105, 210};
  box.calls = 1;

  PredictionRecord bad;
  bad.instance_id = "q_ego";
  bad.task = Task::EgoId;
  bad.model = "model";
  bad.regime = "no-context";
  bad.gold = "No";
  bad.pred = "";
  bad.invalid = true;
  bad.subset_tag = "behavior-centric";
  bad.calls = 1;

  return {binary, box, bad};
}

}  // namespace

TEST_CASE("prediction records round trip through json") {
  const auto records = sample_records();
  const std::string text = predictions_to_json_text(records);
  CHECK(predictions_from_json_text(text) == records);
  // Serialization is deterministic: same records, same bytes.
  CHECK(predictions_to_json_text(records) == text);
}

TEST_CASE("prediction json is validated on the way in") {
  const auto records = sample_records();
  auto j = nlohmann::ordered_json::parse(predictions_to_json_text(records));

  auto damaged = [&](auto mutate) {
    auto copy = j;
    mutate(copy);
    return copy.dump();
  };

  CHECK_THROWS_AS(predictions_from_json_text(
                      damaged([](auto& x) { x["schema_version"] = 9; })),
                  SchemaVersionMismatch);
  CHECK_THROWS_AS(predictions_from_json_text(
                      damaged([](auto& x) { x["records"][0].erase("gold"); })),
                  SchemaError);
  CHECK_THROWS_AS(predictions_from_json_text(damaged([](auto& x) {
                    x["records"][1]["pred_box"] = {1, 2, 3};
                  })),
                  SchemaError);
  CHECK_THROWS_AS(predictions_from_json_text(
                      damaged([](auto& x) { x["records"][0]["task"] = "nah"; })),
                  ConfigError);
  CHECK_THROWS_AS(predictions_from_json_text("not json"), SchemaError);
}

TEST_CASE("task scoring dispatches to the right metric") {
  std::vector<PredictionRecord> binary;
  for (int i = 0; i < 4; ++i) {
    PredictionRecord r;
    r.task = Task::PersonId;
    r.gold = i < 3 ? "Yes" : "No";
    r.pred = i == 1 ? "No" : r.gold;
    binary.push_back(r);
  }
  const TaskScore macro = score_task(Task::PersonId, binary);
  CHECK(macro.value == near(250.0 / 3.0));
  CHECK(macro.support == 4);

  std::vector<PredictionRecord> pooled = binary;
  for (auto& r : pooled) {
    r.task = Task::EgoId;
    r.subset_tag = "behavior-centric";
  }
  pooled[0].subset_tag = "";  // blank tag is scored as "general"
  CHECK(score_task(Task::EgoId, pooled).value == near(250.0 / 3.0));

  std::vector<PredictionRecord> choice(3);
  choice[0].gold = "A"; choice[0].pred = "A";
  choice[1].gold = "B"; choice[1].pred = "A";
  choice[2].gold = "C"; choice[2].pred = "C"; choice[2].invalid = true;
  CHECK(score_task(Task::PersonRel, choice).value == near(100.0 / 3.0));
  CHECK(score_task(Task::BehaviorQa, choice).value == near(100.0 / 3.0));

  std::vector<PredictionRecord> boxes(2);
  boxes[0].gold_box = BoundingBox{0, 0, 10, 10};
  boxes[0].pred_box = BoundingBox{0, 0, 10, 10};
  boxes[1].gold_box = BoundingBox{0, 0, 10, 10};
  boxes[1].pred_box = BoundingBox{5, 0, 15, 10};  // iou 1/3: miss
  CHECK(score_task(Task::ObjectDetect, boxes).value == near(50.0));

  std::vector<PredictionRecord> no_gold(1);
  no_gold[0].instance_id = "q_x";
  CHECK_THROWS_AS(score_task(Task::ObjectDetect, no_gold), SchemaError);
  CHECK_THROWS_AS(score_task(Task::PersonId, {}), EmptySet);
}

// ---------------------------------------------------------------------------
// Bank construction statistics
// ---------------------------------------------------------------------------

namespace {

// Hand-countable fixture: one bank built from 5 clips x 3 candidates.
// Ops: 10 ADD, 3 CONFIRM, 1 REVISE, 1 DROP.
//   candidates           15
//   active entries       10   -> compression 10/15
//   applied non-drop     14   -> revision-op share 4/14
//   updated entries       4   -> updated share 4/10 (e_001..e_004)
//   categories           4 appearance, 3 owned objects, 3 behavior
struct StatsFixture {
  Bank bank;
  ConstructionLog log;
};

StatsFixture build_stats_fixture() {
  StatsFixture fx;
  fx.bank.owner_id = "wearer_x";
  fx.log.bank_id = "wearer_x";
  fx.log.model = "model";

  struct Op {
    DecisionKind kind;
    MemoryType type;
    std::string target;  // CONFIRM/REVISE
  };
  const std::vector<std::vector<Op>> per_clip = {
      {{DecisionKind::Add, MemoryType::Appearance, ""},
       {DecisionKind::Add, MemoryType::OwnedObjects, ""},
       {DecisionKind::Add, MemoryType::Behavior, ""}},
      {{DecisionKind::Add, MemoryType::Appearance, ""},
       {DecisionKind::Add, MemoryType::OwnedObjects, ""},
       {DecisionKind::Add, MemoryType::Behavior, ""}},
      {{DecisionKind::Add, MemoryType::Appearance, ""},
       {DecisionKind::Add, MemoryType::OwnedObjects, ""},
       {DecisionKind::Add, MemoryType::Behavior, ""}},
      {{DecisionKind::Add, MemoryType::Appearance, ""},
       {DecisionKind::Confirm, MemoryType::Appearance, "e_001"},
       {DecisionKind::Confirm, MemoryType::OwnedObjects, "e_002"}},
      {{DecisionKind::Confirm, MemoryType::Behavior, "e_003"},
       {DecisionKind::Revise, MemoryType::Appearance, "e_004"},
       {DecisionKind::Drop, MemoryType::Appearance, ""}},
  };

  for (std::size_t c = 0; c < per_clip.size(); ++c) {
    const std::string clip = "clip_0" + std::to_string(c + 1);
    ItemLog item;
    item.item_id = "item_" + std::to_string(c + 1);
    item.clip_id = clip;
    item.candidate_count = static_cast<int>(per_clip[c].size());

    const auto ids =
        mint_ids(fx.bank, IdKind::Candidate, per_clip[c].size());
    for (std::size_t i = 0; i < per_clip[c].size(); ++i) {
      const Op& op = per_clip[c][i];
      const Evidence anchor =
          op.type == MemoryType::Behavior
              ? Evidence::span(clip, 2 + static_cast<int>(i), 20)
              : Evidence::frame(clip, static_cast<int>(i));
      const CandidateCue c_cue =
          cue(ids[i], op.type, "descriptor " + ids[i], anchor);

      MergeDecision decision = MergeDecision::drop(ids[i]);
      switch (op.kind) {
        case DecisionKind::Add:
          decision = MergeDecision::add(ids[i]);
          break;
        case DecisionKind::Confirm:
          decision = MergeDecision::confirm(ids[i], op.target);
          break;
        case DecisionKind::Revise:
          decision = MergeDecision::revise(ids[i], op.target,
                                           "revised " + ids[i]);
          break;
        default:
          break;
      }
      const int entries_before = static_cast<int>(fx.bank.entries.size());
      fx.bank = apply_decision(fx.bank, decision, c_cue);

      DecisionRecord rec;
      rec.candidate_id = ids[i];
      rec.applied = op.kind;
      rec.cue_type = op.type;
      rec.target_entry_id =
          op.kind == DecisionKind::Add
              ? fx.bank.entries[static_cast<std::size_t>(entries_before)]
                    .entry_id
              : op.target;
      item.decisions.push_back(rec);
    }
    fx.log.items.push_back(std::move(item));
  }
  return fx;
}

}  // namespace

TEST_CASE("bank statistics reproduce the hand-counted fixture exactly") {
  const StatsFixture fx = build_stats_fixture();
  REQUIRE(fx.bank.active_entries().size() == 10);

  const BankStats s = bank_stats({fx.log}, {fx.bank});
  CHECK(s.banks == 1);
  CHECK(s.clips == 5);
  CHECK(s.candidates == 15);
  CHECK(s.cues_per_clip == near(3.0));
  CHECK(s.entries_per_bank == near(10.0));
  CHECK(s.compression == near(10.0 / 15.0));
  CHECK(s.revision_op_share == near(4.0 / 14.0));
  CHECK(s.updated_entry_share == near(4.0 / 10.0));
  CHECK(s.appearance_share == near(0.4));
  CHECK(s.owned_objects_share == near(0.3));
  CHECK(s.behavior_share == near(0.3));
}

TEST_CASE("construction logs round trip through json") {
  const StatsFixture fx = build_stats_fixture();
  const std::string text = construction_log_to_json_text(fx.log);
  CHECK(construction_log_from_json_text(text) == fx.log);
}

TEST_CASE("bank statistics refuse empty aggregates") {
  const StatsFixture fx = build_stats_fixture();
  CHECK_THROWS_AS(bank_stats({}, {fx.bank}), EmptyLog);
  CHECK_THROWS_AS(bank_stats({fx.log}, {}), EmptyLog);

  ConstructionLog hollow;
  hollow.bank_id = "empty";
  CHECK_THROWS_AS(bank_stats({hollow}, {fx.bank}), EmptyLog);
}

// ---------------------------------------------------------------------------
// Adaptive query statistics
// ---------------------------------------------------------------------------

namespace {

QueryTrace trace(const std::string& regime, std::vector<EntryRef> requested,
                 std::vector<EntryRef> decisive) {
  QueryTrace t;
  t.instance_id = "q";
  t.regime = regime;
  t.requested = std::move(requested);
  t.decisive = std::move(decisive);
  return t;
}

}  // namespace

TEST_CASE("query statistics summarize adaptive traces only") {
  const std::vector<QueryTrace> traces = {
      trace("bank:adaptive",
            {{"e_001", MemoryType::Appearance}, {"e_002", MemoryType::Behavior}},
            {{"e_001", MemoryType::Appearance}}),
      trace("bank:adaptive", {}, {}),
      trace("bank:adaptive", {{"e_003", MemoryType::OwnedObjects}}, {}),
      trace("bank:all-evidence", {{"e_009", MemoryType::Appearance}}, {}),
  };
  const QueryStats s = query_stats(traces);
  CHECK(s.queries == 3);
  CHECK(s.with_request == 2);
  CHECK(s.visual_request_rate == near(2.0 / 3.0));
  CHECK(s.requested_mean == near(1.5));
  CHECK(s.decisive_mean == near(0.5));
  CHECK(s.requested_appearance_share == near(1.0 / 3.0));
  CHECK(s.requested_owned_objects_share == near(1.0 / 3.0));
  CHECK(s.requested_behavior_share == near(1.0 / 3.0));
}

TEST_CASE("query statistics need at least one adaptive trace") {
  CHECK_THROWS_AS(query_stats({}), EmptyLog);
  CHECK_THROWS_AS(
      query_stats({trace("bank:descriptors-only", {}, {})}), EmptyLog);
}
