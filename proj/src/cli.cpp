#include <algorithm>
#include <atomic>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "ctxbank/cli.hpp"
#include "ctxbank/eval.hpp"
#include "json_util.hpp"

namespace fs = std::filesystem;

namespace ctxbank {

namespace {

using jsonu::Json;

// ---------------------------------------------------------------------------
// Run configuration: defaults < --config file < explicit flags.
// ---------------------------------------------------------------------------

struct RunConfig {
  std::string config_path;
  std::string backend = "scripted";  // "scripted" | "remote"
  std::string transcript;            // scripted: replay source (required)
                                     // remote: capture target (optional)
  std::string model = "model";
  std::string templates = "default-v1";
  int span_frames = 4;
  std::string revise_fallback = "add";
  std::string media_root;
  std::string out = "out";
  int jobs = 1;
  RemoteConfig remote;  // endpoint etc.; credentials stay in the env var

  // Subcommand inputs.
  std::string manifest;
  std::string items;
  std::string instance;
  std::string mode = "adaptive";
  std::string regimes;
  std::string records_dir;
  std::string logs_dir;
};

void apply_config_file(RunConfig& rc, const std::string& path) {
  const Json root = jsonu::parse_text(read_text_file(path), "config");
  if (!root.is_object()) throw ConfigError("config: expected a json object");
  for (const auto& element : root.items()) {
    const std::string& key = element.key();
    if (key == "backend") {
      rc.backend = jsonu::require_string(root, "backend", "config");
    } else if (key == "transcript") {
      rc.transcript = jsonu::require_string(root, "transcript", "config");
    } else if (key == "model") {
      rc.model = jsonu::require_string(root, "model", "config");
    } else if (key == "templates") {
      rc.templates = jsonu::require_string(root, "templates", "config");
    } else if (key == "span_frames") {
      rc.span_frames = static_cast<int>(jsonu::require_int(root, "span_frames", "config"));
    } else if (key == "revise_fallback") {
      rc.revise_fallback = jsonu::require_string(root, "revise_fallback", "config");
    } else if (key == "media_root") {
      rc.media_root = jsonu::require_string(root, "media_root", "config");
    } else if (key == "out") {
      rc.out = jsonu::require_string(root, "out", "config");
    } else if (key == "jobs") {
      rc.jobs = static_cast<int>(jsonu::require_int(root, "jobs", "config"));
    } else if (key == "remote") {
      const Json& r = jsonu::require_object(root, "remote", "config");
      for (const auto& relement : r.items()) {
        const std::string& rkey = relement.key();
        if (rkey == "endpoint") {
          rc.remote.endpoint = jsonu::require_string(r, "endpoint", "config.remote");
        } else if (rkey == "path") {
          rc.remote.path = jsonu::require_string(r, "path", "config.remote");
        } else if (rkey == "model") {
          rc.remote.model = jsonu::require_string(r, "model", "config.remote");
        } else if (rkey == "api_key_env") {
          rc.remote.api_key_env = jsonu::require_string(r, "api_key_env", "config.remote");
        } else if (rkey == "temperature") {
          rc.remote.temperature = jsonu::require_number(r, "temperature", "config.remote");
        } else if (rkey == "max_tokens") {
          rc.remote.max_tokens = static_cast<int>(jsonu::require_int(r, "max_tokens", "config.remote"));
        } else if (rkey == "media_limit") {
          rc.remote.media_limit =
              static_cast<std::size_t>(jsonu::require_int(r, "media_limit", "config.remote"));
        } else if (rkey == "max_attempts") {
          rc.remote.max_attempts = static_cast<int>(jsonu::require_int(r, "max_attempts", "config.remote"));
        } else if (rkey == "initial_backoff_ms") {
          rc.remote.initial_backoff_ms = static_cast<int>(
              jsonu::require_int(r, "initial_backoff_ms", "config.remote"));
        } else if (rkey == "timeout_seconds") {
          rc.remote.timeout_seconds = static_cast<int>(
              jsonu::require_int(r, "timeout_seconds", "config.remote"));
        } else {
          throw ConfigError("config: unknown remote key '" + rkey + "'");
        }
      }
    } else {
      throw ConfigError("config: unknown key '" + key + "'");
    }
  }
}

// --config must take effect before the flag pass, so it is fished out of the
// raw argument list up front (the registered option then re-consumes it).
std::optional<std::string> peek_config_flag(
    const std::vector<std::string>& args) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw ConfigError("--config needs a path");
      return args[i + 1];
    }
    if (args[i].rfind("--config=", 0) == 0) {
      return args[i].substr(std::string("--config=").size());
    }
  }
  return std::nullopt;
}

void validate_common(const RunConfig& rc) {
  if (rc.backend != "scripted" && rc.backend != "remote") {
    throw ConfigError("--backend must be scripted or remote, got '" +
                      rc.backend + "'");
  }
  if (rc.backend == "scripted" && rc.transcript.empty()) {
    throw ConfigError("the scripted backend needs --transcript <file>");
  }
  if (rc.backend == "remote" && rc.remote.endpoint.empty()) {
    throw ConfigError(
        "the remote backend needs remote.endpoint in the --config file");
  }
  if (rc.span_frames < 2) throw ConfigError("--span-frames must be >= 2");
  if (rc.jobs < 1) throw ConfigError("--jobs must be >= 1");
  revise_fallback_from_string(rc.revise_fallback);  // value check
}

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

struct BackendBundle {
  std::unique_ptr<Backend> base;
  std::unique_ptr<Transcript> capture;     // remote + --transcript
  std::unique_ptr<RecordingBackend> tape;  // wraps base when capturing

  Backend& use() { return tape ? static_cast<Backend&>(*tape) : *base; }
};

BackendBundle make_backend(const RunConfig& rc, const MediaStore& store) {
  BackendBundle bundle;
  if (rc.backend == "scripted") {
    bundle.base = std::make_unique<ScriptedBackend>(
        Transcript::load(rc.transcript), rc.remote.media_limit);
    return bundle;
  }
  RemoteConfig cfg = rc.remote;
  if (cfg.model.empty()) cfg.model = rc.model;
  bundle.base = std::make_unique<RemoteBackend>(
      cfg, [&store](const std::string& clip_id, int frame_index) {
        return frame_data_uri(store, clip_id, frame_index);
      });
  if (!rc.transcript.empty()) {
    // Live runs can tape themselves so the whole session replays later.
    bundle.capture = std::make_unique<Transcript>();
    bundle.tape = std::make_unique<RecordingBackend>(
        *bundle.base, *bundle.capture, rc.transcript);
  }
  return bundle;
}

PipelineOptions pipeline_options(const RunConfig& rc) {
  PipelineOptions opts;
  opts.span_frames = rc.span_frames;
  opts.revise_fallback = revise_fallback_from_string(rc.revise_fallback);
  opts.model_name = rc.model;
  return opts;
}

MediaStore open_store(const RunConfig& rc) {
  if (rc.media_root.empty()) {
    throw ConfigError("this command needs --media-root <dir>");
  }
  return MediaStore::open(rc.media_root);
}

// File-name fragment for a model or regime ("bank:adaptive" -> "bank-adaptive").
std::string sanitize(const std::string& raw) {
  std::string out;
  for (char c : raw) {
    const bool keep = std::isalnum(static_cast<unsigned char>(c)) ||
                      c == '.' || c == '_' || c == '-';
    out += keep ? c : '-';
  }
  return out;
}

// Canonical report row order: baselines first, bank modes last, anything
// exotic after that alphabetically.
int regime_rank(const std::string& regime) {
  static const std::vector<std::string> order = {
      "no-context",       "language-ctx:1",        "language-ctx:max",
      "visual-ctx:1",     "visual-ctx:max",        "bank:descriptors-only",
      "bank:all-evidence", "bank:adaptive"};
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (regime == order[i]) return static_cast<int>(i);
  }
  return static_cast<int>(order.size());
}

// Sorted .json files in `dir` whose names start with `prefix`.
std::vector<fs::path> matching_files(const fs::path& dir,
                                     const std::string& prefix) {
  if (!fs::is_directory(dir)) {
    throw IoError("not a directory: " + dir.string());
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (name.rfind(prefix, 0) == 0 && entry.path().extension() == ".json") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  return files;
}

// ---------------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------------

int cmd_ingest(const RunConfig& rc) {
  if (rc.media_root.empty()) throw ConfigError("ingest needs --media-root");
  MediaStore store = MediaStore::create(rc.media_root);

  const fs::path clips_dir = fs::path(rc.media_root) / "clips";
  std::map<std::string, int> found;
  if (fs::is_directory(clips_dir)) {
    static const std::regex frame_pat(R"(frame_(\d{5})\.jpg)");
    for (const auto& entry : fs::directory_iterator(clips_dir)) {
      if (!entry.is_directory()) continue;
      const std::string clip_id = entry.path().filename().string();
      std::set<int> indices;
      for (const auto& file : fs::directory_iterator(entry.path())) {
        std::smatch m;
        const std::string name = file.path().filename().string();
        if (std::regex_match(name, m, frame_pat)) {
          indices.insert(std::stoi(m[1].str()));
        }
      }
      if (indices.empty()) continue;
      int expected = 0;
      for (int index : indices) {
        if (index != expected) {
          throw IoError("clip " + clip_id + ": frame files must be " +
                        "contiguous from frame_00000.jpg; missing index " +
                        std::to_string(expected));
        }
        ++expected;
      }
      found[clip_id] = static_cast<int>(indices.size());
    }
  }

  for (const auto& [clip_id, count] : found) {
    store.register_clip(clip_id, count);
  }
  store.save_manifest();

  for (const auto& [clip_id, count] : store.clips()) {
    std::cout << "clip " << clip_id << ": " << count << " frames\n";
  }
  std::cout << "manifest: " << (fs::path(rc.media_root) / "manifest.json").string()
            << " (" << store.clips().size() << " clips)\n";
  return 0;
}

// ---------------------------------------------------------------------------
// build-bank
// ---------------------------------------------------------------------------

TaskAxis axis_from_string(const std::string& name) {
  if (name == "persons") return TaskAxis::Persons;
  if (name == "objects") return TaskAxis::Objects;
  if (name == "behavior") return TaskAxis::Behavior;
  if (name == "wearer") return TaskAxis::Wearer;
  throw ConfigError("unknown axis '" + name +
                    "' (expected persons, objects, behavior, or wearer)");
}

struct ItemsManifest {
  std::string owner_id;
  TaskAxis axis = TaskAxis::Wearer;
  std::vector<ContextItem> items;
};

ItemsManifest load_items_manifest(const std::string& path) {
  const Json root = jsonu::parse_text(read_text_file(path), "items manifest");
  if (jsonu::require_int(root, "schema_version", "items manifest") != 1) {
    throw SchemaVersionMismatch("items manifest: unsupported schema_version");
  }
  ItemsManifest out;
  out.owner_id = jsonu::require_string(root, "owner_id", "items manifest");
  if (out.owner_id.empty()) {
    throw SchemaError("items manifest: owner_id is empty");
  }
  out.axis = axis_from_string(jsonu::require_string(root, "axis", "items manifest"));
  const Json& items = jsonu::require_array(root, "items", "items manifest");
  if (items.empty()) throw SchemaError("items manifest: items is empty");
  std::set<std::string> seen;
  for (const Json& item : items) {
    ContextItem ci;
    ci.item_id = jsonu::require_string(item, "item_id", "items manifest item");
    ci.declaration = jsonu::require_string(item, "declaration", "items manifest item");
    ci.clip_id = jsonu::require_string(item, "clip_id", "items manifest item");
    ci.modality = modality_from_string(jsonu::require_string(item, "modality", "items manifest item"));
    if (ci.item_id.empty() || ci.declaration.empty() || ci.clip_id.empty()) {
      throw SchemaError("items manifest: item fields must be nonempty");
    }
    if (!seen.insert(ci.item_id).second) {
      throw SchemaError("items manifest: duplicate item_id " + ci.item_id);
    }
    out.items.push_back(std::move(ci));
  }
  return out;
}

int cmd_build_bank(const RunConfig& rc) {
  if (rc.items.empty()) throw ConfigError("build-bank needs --items <file>");
  const ItemsManifest manifest = load_items_manifest(rc.items);

  MediaStore store = open_store(rc);
  BackendBundle backend = make_backend(rc, store);
  Pipeline pipeline(backend.use(), store, TemplateSet::load(rc.templates),
                    pipeline_options(rc));

  ConstructionLog log;
  const Bank bank = pipeline.build_bank(manifest.owner_id, manifest.axis,
                                        manifest.items, log);

  store.save_bank(bank);
  const fs::path bank_file =
      fs::path(rc.out) / ("bank_" + sanitize(manifest.owner_id) + ".json");
  write_text_file(bank_file, bank_to_json_text(bank));
  const fs::path log_file =
      fs::path(rc.out) /
      ("construction_" + sanitize(manifest.owner_id) + ".json");
  write_text_file(log_file, construction_log_to_json_text(log));

  int warnings = 0;
  for (const auto& item : log.items) {
    warnings += static_cast<int>(item.warnings.size());
  }
  std::cout << "bank " << manifest.owner_id << ": "
            << bank.active_entries().size() << " active entries from "
            << bank.next_candidate_seq - 1 << " candidates ("
            << warnings << " warnings)\n";
  std::cout << "wrote " << bank_file.string() << "\n";
  std::cout << "wrote " << log_file.string() << "\n";
  std::cout << "\n" << render_text_view(bank);
  return 0;
}

// ---------------------------------------------------------------------------
// query
// ---------------------------------------------------------------------------

std::string answer_line(const AnswerResult& result) {
  if (result.invalid) return "answer: invalid";
  if (result.box) {
    std::ostringstream out;
    out << "box: " << result.box->x1 << " " << result.box->y1 << " "
        << result.box->x2 << " " << result.box->y2;
    return out.str();
  }
  return "answer: " + result.answer;
}

std::string id_list(const std::vector<EntryRef>& refs) {
  if (refs.empty()) return "-";
  std::string out;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    if (i > 0) out += ",";
    out += refs[i].entry_id;
  }
  return out;
}

int cmd_query(const RunConfig& rc) {
  if (rc.manifest.empty()) throw ConfigError("query needs --manifest <file>");
  if (rc.instance.empty()) throw ConfigError("query needs --instance <id>");
  const std::vector<QueryInstance> instances = load_manifest(rc.manifest);
  const auto it = std::find_if(
      instances.begin(), instances.end(),
      [&](const QueryInstance& q) { return q.instance_id == rc.instance; });
  if (it == instances.end()) {
    throw ConfigError("manifest has no instance '" + rc.instance + "'");
  }

  MediaStore store = open_store(rc);
  BackendBundle backend = make_backend(rc, store);
  Pipeline pipeline(backend.use(), store, TemplateSet::load(rc.templates),
                    pipeline_options(rc));

  // A bank persisted by an earlier build-bank/evaluate run is reused.
  if (store.has_bank(it->bank_id)) {
    pipeline.seed_bank(store.load_bank(it->bank_id));
  }

  Regime regime;
  regime.kind = Regime::Kind::Bank;
  regime.mode = bank_mode_from_string(rc.mode);
  const AnswerResult result = pipeline.run_instance(*it, regime);

  const fs::path trace_file =
      fs::path(rc.out) / ("trace_" + sanitize(it->instance_id) + "_" +
                          sanitize(regime.str()) + ".json");
  write_text_file(trace_file, query_trace_to_json_text(result.trace));

  std::cout << "instance " << it->instance_id << " [" << regime.str()
            << "]\n";
  std::cout << answer_line(result) << "\n";
  std::cout << "calls: " << result.trace.calls.size()
            << "  requested: " << id_list(result.trace.requested)
            << "  decisive: " << id_list(result.trace.decisive) << "\n";
  std::cout << "wrote " << trace_file.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

// A hard failure still yields a row so downstream files stay aligned with
// the manifest; the exit code reports it.
PredictionRecord failure_record(const QueryInstance& query,
                                const Regime& regime, const RunConfig& rc) {
  PredictionRecord rec;
  rec.instance_id = query.instance_id;
  rec.task = query.task;
  rec.model = rc.model;
  rec.regime = regime.str();
  rec.gold = query.gold;
  rec.gold_box = query.gold_box;
  rec.invalid = true;
  rec.subset_tag = query.subset_tag;
  return rec;
}

QueryTrace failure_trace(const QueryInstance& query, const Regime& regime,
                         const RunConfig& rc, const std::string& message) {
  QueryTrace trace;
  trace.instance_id = query.instance_id;
  trace.task = query.task;
  trace.regime = regime.str();
  trace.model = rc.model;
  trace.template_set = rc.templates;
  trace.query_clip_id = query.query_clip_id;
  trace.warnings.push_back("hard failure: " + message);
  return trace;
}

int cmd_evaluate(const RunConfig& rc) {
  if (rc.manifest.empty()) {
    throw ConfigError("evaluate needs --manifest <file>");
  }
  if (rc.regimes.empty()) {
    throw ConfigError("evaluate needs --regimes <list>");
  }
  const std::vector<QueryInstance> instances = load_manifest(rc.manifest);
  const std::vector<Regime> regimes = parse_regime_list(rc.regimes);

  MediaStore store = open_store(rc);
  BackendBundle backend = make_backend(rc, store);
  Pipeline pipeline(backend.use(), store, TemplateSet::load(rc.templates),
                    pipeline_options(rc));

  int hard_failures = 0;
  for (const Regime& regime : regimes) {
    std::vector<PredictionRecord> records(instances.size());
    std::vector<QueryTrace> traces(instances.size());
    std::vector<std::string> errors(instances.size());

    std::atomic<std::size_t> cursor{0};
    auto worker = [&]() {
      while (true) {
        const std::size_t i = cursor.fetch_add(1);
        if (i >= instances.size()) return;
        const QueryInstance& query = instances[i];
        try {
          const AnswerResult result = pipeline.run_instance(query, regime);
          records[i] = make_prediction_record(query, result);
          traces[i] = result.trace;
        } catch (const std::exception& error) {
          errors[i] = error.what();
          records[i] = failure_record(query, regime, rc);
          traces[i] = failure_trace(query, regime, rc, error.what());
        }
      }
    };

    const std::size_t width = std::min<std::size_t>(
        static_cast<std::size_t>(rc.jobs), instances.size());
    if (width <= 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      for (std::size_t t = 0; t < width; ++t) pool.emplace_back(worker);
      for (auto& thread : pool) thread.join();
    }

    int invalid = 0;
    int failed = 0;
    for (std::size_t i = 0; i < instances.size(); ++i) {
      if (records[i].invalid) ++invalid;
      if (!errors[i].empty()) {
        ++failed;
        std::cerr << "error: " << regime.str() << " "
                  << instances[i].instance_id << ": " << errors[i] << "\n";
      }
    }
    hard_failures += failed;

    const std::string stem = sanitize(rc.model) + "_" + sanitize(regime.str());
    const fs::path pred_file =
        fs::path(rc.out) / ("predictions_" + stem + ".json");
    write_text_file(pred_file, predictions_to_json_text(records));

    Json trace_array = Json::array();
    for (const QueryTrace& trace : traces) {
      trace_array.push_back(
          jsonu::parse_text(query_trace_to_json_text(trace), "trace"));
    }
    const fs::path trace_file = fs::path(rc.out) / ("traces_" + stem + ".json");
    write_text_file(trace_file, trace_array.dump(2) + "\n");

    std::cout << regime.str() << ": " << instances.size() << " instances, "
              << invalid << " invalid, " << failed << " hard failures\n";
    std::cout << "wrote " << pred_file.string() << "\n";
    std::cout << "wrote " << trace_file.string() << "\n";
  }

  // Banks and construction logs accumulated across all regimes.
  const std::map<std::string, Bank> banks = pipeline.built_banks();
  for (const auto& [bank_id, bank] : banks) {
    store.save_bank(bank);
  }
  Json log_array = Json::array();
  for (const auto& [bank_id, log] : pipeline.construction_logs()) {
    log_array.push_back(
        jsonu::parse_text(construction_log_to_json_text(log), "log"));
  }
  const fs::path logs_file = fs::path(rc.out) / "construction_logs.json";
  write_text_file(logs_file, log_array.dump(2) + "\n");
  std::cout << "banks: " << banks.size() << " saved under "
            << (fs::path(rc.media_root) / "banks").string() << "\n";
  std::cout << "wrote " << logs_file.string() << "\n";

  return hard_failures == 0 ? 0 : 1;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

int cmd_report(const RunConfig& rc) {
  const fs::path dir = rc.records_dir.empty() ? fs::path(rc.out)
                                              : fs::path(rc.records_dir);
  const std::vector<fs::path> files = matching_files(dir, "predictions_");
  if (files.empty()) {
    throw IoError("no predictions_*.json files in " + dir.string());
  }

  std::map<std::pair<std::string, std::string>, std::vector<PredictionRecord>>
      groups;
  std::vector<std::pair<std::string, std::string>> group_order;
  for (const fs::path& file : files) {
    for (PredictionRecord& rec :
         predictions_from_json_text(read_text_file(file))) {
      const auto key = std::make_pair(rec.model, rec.regime);
      if (!groups.count(key)) group_order.push_back(key);
      groups[key].push_back(std::move(rec));
    }
  }
  std::stable_sort(group_order.begin(), group_order.end(),
                   [](const auto& a, const auto& b) {
                     if (a.first != b.first) return a.first < b.first;
                     const int ra = regime_rank(a.second);
                     const int rb = regime_rank(b.second);
                     if (ra != rb) return ra < rb;
                     return a.second < b.second;
                   });

  std::vector<ReportRow> rows;
  std::vector<PredictionRecord> flat;
  for (const auto& key : group_order) {
    const std::vector<PredictionRecord>& records = groups.at(key);
    ReportRow row;
    row.model = key.first;
    row.regime = key.second;
    std::map<Task, std::vector<PredictionRecord>> by_task;
    for (const PredictionRecord& rec : records) by_task[rec.task].push_back(rec);
    for (const auto& [task, task_records] : by_task) {
      try {
        row.scores[task] = score_task(task, task_records);
      } catch (const Error& error) {
        std::cerr << "warning: skipping " << to_string(task) << " for ("
                  << key.first << ", " << key.second << "): " << error.what()
                  << "\n";
      }
    }
    rows.push_back(std::move(row));
    flat.insert(flat.end(), records.begin(), records.end());
  }

  const std::string report = render_report_markdown(rows);
  const fs::path report_file = fs::path(rc.out) / "report.md";
  write_text_file(report_file, report);
  const fs::path csv_file = fs::path(rc.out) / "records.csv";
  write_text_file(csv_file, render_records_csv(flat));

  std::cout << report;
  std::cout << "wrote " << report_file.string() << "\n";
  std::cout << "wrote " << csv_file.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// stats
// ---------------------------------------------------------------------------

int cmd_stats(const RunConfig& rc) {
  const fs::path dir =
      rc.logs_dir.empty() ? fs::path(rc.out) : fs::path(rc.logs_dir);

  std::vector<ConstructionLog> logs;
  for (const fs::path& file : matching_files(dir, "construction")) {
    const Json parsed = jsonu::parse_text(read_text_file(file), "log file");
    if (parsed.is_array()) {
      for (const Json& element : parsed) {
        logs.push_back(construction_log_from_json_text(element.dump()));
      }
    } else {
      logs.push_back(construction_log_from_json_text(parsed.dump()));
    }
  }
  if (logs.empty()) {
    throw IoError("no construction logs under " + dir.string());
  }

  MediaStore store = open_store(rc);
  std::vector<Bank> banks;
  for (const ConstructionLog& log : logs) {
    banks.push_back(store.load_bank(log.bank_id));
  }

  std::vector<QueryTrace> traces;
  for (const fs::path& file : matching_files(dir, "trace")) {
    const Json parsed = jsonu::parse_text(read_text_file(file), "trace file");
    if (parsed.is_array()) {
      for (const Json& element : parsed) {
        traces.push_back(query_trace_from_json_text(element.dump()));
      }
    } else {
      traces.push_back(query_trace_from_json_text(parsed.dump()));
    }
  }

  const BankStats bank = bank_stats(logs, banks);
  std::optional<QueryStats> query;
  try {
    query = query_stats(traces);
  } catch (const EmptyLog&) {
    query = std::nullopt;
  }

  const std::string rendered = render_stats_markdown(bank, query);
  const fs::path stats_file = fs::path(rc.out) / "stats.md";
  write_text_file(stats_file, rendered);
  std::cout << rendered;
  std::cout << "wrote " << stats_file.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// wiring
// ---------------------------------------------------------------------------

void add_common_flags(CLI::App* sub, RunConfig& rc) {
  sub->add_option("--config", rc.config_path,
                  "json config file; explicit flags override it");
  sub->add_option("--backend", rc.backend, "scripted | remote");
  sub->add_option("--transcript", rc.transcript,
                  "scripted: replay source; remote: capture target");
  sub->add_option("--model", rc.model, "model label for records and prompts");
  sub->add_option("--templates", rc.templates,
                  "template set: default-v1 or a directory of *.txt");
  sub->add_option("--span-frames", rc.span_frames,
                  "stills per inlined evidence span (>= 2)");
  sub->add_option("--revise-fallback", rc.revise_fallback,
                  "withdrawn revision fallback: add | confirm | drop");
  sub->add_option("--media-root", rc.media_root, "media store directory");
  sub->add_option("--out", rc.out, "output directory (default: out)");
  sub->add_option("--jobs", rc.jobs, "parallel instances (default: 1)");
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  RunConfig rc;

  CLI::App app{"evidence-linked visual memory bank toolkit"};
  app.require_subcommand(1);

  CLI::App* ingest = app.add_subcommand(
      "ingest", "register clip frame directories into a media store");
  add_common_flags(ingest, rc);

  CLI::App* build = app.add_subcommand(
      "build-bank", "construct one memory bank from an items manifest");
  add_common_flags(build, rc);
  build->add_option("--items", rc.items, "items manifest (json)");

  CLI::App* query = app.add_subcommand(
      "query", "answer one benchmark instance against its bank");
  add_common_flags(query, rc);
  query->add_option("--manifest", rc.manifest, "benchmark manifest (json)");
  query->add_option("--instance", rc.instance, "instance id to answer");
  query->add_option("--mode", rc.mode,
                    "descriptors-only | all-evidence | adaptive");

  CLI::App* evaluate = app.add_subcommand(
      "evaluate", "run a benchmark manifest under one or more regimes");
  add_common_flags(evaluate, rc);
  evaluate->add_option("--manifest", rc.manifest, "benchmark manifest (json)");
  evaluate->add_option(
      "--regimes", rc.regimes,
      "comma list: no-context, language-ctx:1|max, visual-ctx:1|max, "
      "bank:descriptors-only|all-evidence|adaptive");

  CLI::App* report = app.add_subcommand(
      "report", "aggregate prediction files into report.md and records.csv");
  add_common_flags(report, rc);
  report->add_option("--records", rc.records_dir,
                     "directory of predictions_*.json (default: --out)");

  CLI::App* stats = app.add_subcommand(
      "stats", "aggregate construction logs and traces into stats.md");
  add_common_flags(stats, rc);
  stats->add_option("--logs", rc.logs_dir,
                    "directory of construction/trace files (default: --out)");

  try {
    if (const auto config = peek_config_flag(args)) {
      apply_config_file(rc, *config);
    }

    // CLI11 parses back-to-front.
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);

    // Aggregation commands never talk to a backend.
    if (ingest->parsed()) return cmd_ingest(rc);
    if (report->parsed()) return cmd_report(rc);
    if (stats->parsed()) return cmd_stats(rc);

    validate_common(rc);
    if (build->parsed()) return cmd_build_bank(rc);
    if (query->parsed()) return cmd_query(rc);
    if (evaluate->parsed()) return cmd_evaluate(rc);
    return 1;  // unreachable: require_subcommand guards this
  } catch (const CLI::ParseError& error) {
    return app.exit(error);
  } catch (const std::exception& error) {
    std::cerr << "error: " << error.what() << "\n";
    return 1;
  }
}

}  // namespace ctxbank
