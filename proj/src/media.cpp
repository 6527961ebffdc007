#include "ctxbank/media.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "ctxbank/encode.hpp"
#include "ctxbank/errors.hpp"
#include "ctxbank/sampling.hpp"
#include "json_util.hpp"

namespace ctxbank {

namespace fs = std::filesystem;
using jsonu::Json;

// --- file helpers ------------------------------------------------------------

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("read failed for " + path.string());
  return buf.str();
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path(), ec);
    if (ec) {
      throw IoError("cannot create directory " + path.parent_path().string() +
                    ": " + ec.message());
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

// --- bank json -----------------------------------------------------------------

namespace {

constexpr int kBankSchemaVersion = 1;

Json evidence_to_json(const Evidence& ev) {
  Json j;
  if (ev.kind == EvidenceKind::Frame) {
    j["kind"] = "frame";
    j["clip_id"] = ev.clip_id;
    j["frame"] = ev.start_frame;
  } else {
    j["kind"] = "span";
    j["clip_id"] = ev.clip_id;
    j["start"] = ev.start_frame;
    j["end"] = ev.end_frame;
  }
  return j;
}

Evidence evidence_from_json(const Json& j, const std::string& path) {
  const std::string kind = jsonu::require_string(j, "kind", path);
  const std::string clip = jsonu::require_string(j, "clip_id", path);
  if (kind == "frame") {
    const int frame = static_cast<int>(jsonu::require_int(j, "frame", path));
    if (frame < 0) throw SchemaError(path + ".frame: negative");
    return Evidence::frame(clip, frame);
  }
  if (kind == "span") {
    const int start = static_cast<int>(jsonu::require_int(j, "start", path));
    const int end = static_cast<int>(jsonu::require_int(j, "end", path));
    if (start < 0 || end < start) {
      throw SchemaError(path + ": bad span " + std::to_string(start) + "-" +
                        std::to_string(end));
    }
    return Evidence::span(clip, start, end);
  }
  throw SchemaError(path + ".kind: expected 'frame' or 'span', got '" + kind +
                    "'");
}

}  // namespace

std::string bank_to_json_text(const Bank& bank) {
  Json j;
  j["schema_version"] = kBankSchemaVersion;
  j["owner_id"] = bank.owner_id;
  j["next_candidate_seq"] = bank.next_candidate_seq;
  j["next_entry_seq"] = bank.next_entry_seq;
  j["entries"] = Json::array();
  for (const auto& entry : bank.entries) {
    Json e;
    e["entry_id"] = entry.entry_id;
    e["memory_type"] = to_string(entry.memory_type);
    e["descriptor"] = entry.descriptor;
    e["status"] =
        entry.status == EntryStatus::Active ? "active" : "retracted";
    e["support_count"] = entry.support_count;
    e["evidence"] = Json::array();
    for (const auto& ev : entry.evidence) {
      e["evidence"].push_back(evidence_to_json(ev));
    }
    e["history"] = Json::array();
    for (const auto& rec : entry.history) {
      Json h;
      h["op"] = to_string(rec.op);
      h["candidate_id"] = rec.candidate_id;
      if (rec.op == DecisionKind::Revise) {
        h["prior_descriptor"] = rec.prior_descriptor;
      }
      e["history"].push_back(std::move(h));
    }
    j["entries"].push_back(std::move(e));
  }
  return j.dump(2) + "\n";
}

Bank bank_from_json_text(const std::string& text) {
  const Json j = jsonu::parse_text(text, "bank");
  const long long version = jsonu::require_int(j, "schema_version", "bank");
  if (version != kBankSchemaVersion) {
    throw SchemaVersionMismatch("bank schema_version " +
                                std::to_string(version) +
                                " is not readable by this build (expected " +
                                std::to_string(kBankSchemaVersion) + ")");
  }

  Bank bank;
  bank.owner_id = jsonu::require_string(j, "owner_id", "bank");
  bank.next_candidate_seq =
      static_cast<int>(jsonu::require_int(j, "next_candidate_seq", "bank"));
  bank.next_entry_seq =
      static_cast<int>(jsonu::require_int(j, "next_entry_seq", "bank"));
  if (bank.next_candidate_seq < 1 || bank.next_entry_seq < 1) {
    throw SchemaError("bank: mint counters must be >= 1");
  }

  const Json& entries = jsonu::require_array(j, "entries", "bank");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const std::string path = "bank.entries[" + std::to_string(i) + "]";
    const Json& e = entries.at(i);
    BankEntry entry;
    entry.entry_id = jsonu::require_string(e, "entry_id", path);
    try {
      entry.memory_type =
          memory_type_from_string(jsonu::require_string(e, "memory_type", path));
    } catch (const SchemaError&) {
      throw;
    } catch (const Error& err) {
      throw SchemaError(path + ".memory_type: " + err.what());
    }
    entry.descriptor = jsonu::require_string(e, "descriptor", path);
    const std::string status = jsonu::require_string(e, "status", path);
    if (status == "active") {
      entry.status = EntryStatus::Active;
    } else if (status == "retracted") {
      entry.status = EntryStatus::Retracted;
    } else {
      throw SchemaError(path + ".status: expected 'active' or 'retracted'");
    }
    entry.support_count =
        static_cast<int>(jsonu::require_int(e, "support_count", path));
    if (entry.support_count < 1) {
      throw SchemaError(path + ".support_count: must be >= 1");
    }

    const Json& evidence = jsonu::require_array(e, "evidence", path);
    if (evidence.empty()) {
      throw SchemaError(path + ".evidence: must not be empty");
    }
    for (std::size_t k = 0; k < evidence.size(); ++k) {
      const std::string evpath = path + ".evidence[" + std::to_string(k) + "]";
      Evidence ev = evidence_from_json(evidence.at(k), evpath);
      if (!evidence_matches_type(entry.memory_type, ev)) {
        throw SchemaError(evpath + ": anchor kind does not match entry type " +
                          to_string(entry.memory_type));
      }
      entry.evidence.push_back(std::move(ev));
    }

    const Json& history = jsonu::require_array(e, "history", path);
    for (std::size_t k = 0; k < history.size(); ++k) {
      const std::string hpath = path + ".history[" + std::to_string(k) + "]";
      const Json& h = history.at(k);
      HistoryRecord rec;
      try {
        rec.op = decision_kind_from_string(
            jsonu::require_string(h, "op", hpath));
      } catch (const SchemaError&) {
        throw;
      } catch (const Error& err) {
        throw SchemaError(hpath + ".op: " + err.what());
      }
      if (rec.op == DecisionKind::Drop) {
        throw SchemaError(hpath + ".op: DROP never reaches entry history");
      }
      rec.candidate_id = jsonu::require_string(h, "candidate_id", hpath);
      if (rec.op == DecisionKind::Revise) {
        rec.prior_descriptor =
            jsonu::require_string(h, "prior_descriptor", hpath);
      }
      entry.history.push_back(std::move(rec));
    }
    bank.entries.push_back(std::move(entry));
  }
  return bank;
}

// --- media store -----------------------------------------------------------------

namespace {

constexpr int kManifestSchemaVersion = 1;

std::string frame_file_name(int frame_index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%05d.jpg", frame_index);
  return buf;
}

}  // namespace

MediaStore MediaStore::open(const fs::path& root) {
  MediaStore store(root);
  const fs::path manifest = root / "manifest.json";
  const Json j = jsonu::parse_text(read_text_file(manifest), "media manifest");
  const long long version =
      jsonu::require_int(j, "schema_version", "media manifest");
  if (version != kManifestSchemaVersion) {
    throw SchemaVersionMismatch("media manifest schema_version " +
                                std::to_string(version) + " is unsupported");
  }
  const Json& clips = jsonu::require_object(j, "clips", "media manifest");
  for (auto it = clips.begin(); it != clips.end(); ++it) {
    if (!it.value().is_number_integer() || it.value().get<long long>() < 1) {
      throw SchemaError("media manifest.clips." + it.key() +
                        ": expected a positive frame count");
    }
    store.clips_[it.key()] = it.value().get<int>();
  }
  return store;
}

MediaStore MediaStore::create(const fs::path& root) {
  std::error_code ec;
  fs::create_directories(root / "clips", ec);
  if (!ec) fs::create_directories(root / "banks", ec);
  if (ec) {
    throw IoError("cannot create media store at " + root.string() + ": " +
                  ec.message());
  }
  if (!fs::exists(root / "manifest.json")) {
    MediaStore fresh(root);
    fresh.save_manifest();
  }
  return open(root);
}

bool MediaStore::has_clip(const std::string& clip_id) const {
  return clips_.contains(clip_id);
}

int MediaStore::frame_count(const std::string& clip_id) const {
  auto it = clips_.find(clip_id);
  if (it == clips_.end()) {
    throw UnknownClip("clip '" + clip_id + "' is not in the media store");
  }
  return it->second;
}

void MediaStore::register_clip(const std::string& clip_id, int count) {
  if (clip_id.empty()) throw ConfigError("register_clip: empty clip id");
  if (count < 1) {
    throw ConfigError("register_clip: frame count must be >= 1 for '" +
                      clip_id + "'");
  }
  auto it = clips_.find(clip_id);
  if (it != clips_.end() && it->second != count) {
    throw IoError("clip '" + clip_id + "' already registered with " +
                  std::to_string(it->second) + " frames (got " +
                  std::to_string(count) + ")");
  }
  clips_[clip_id] = count;
}

void MediaStore::save_manifest() const {
  Json j;
  j["schema_version"] = kManifestSchemaVersion;
  j["clips"] = Json::object();
  for (const auto& [id, count] : clips_) j["clips"][id] = count;
  write_text_file(root_ / "manifest.json", j.dump(2) + "\n");
}

fs::path MediaStore::frame_path(const std::string& clip_id,
                                int frame_index) const {
  const int count = frame_count(clip_id);
  if (frame_index < 0 || frame_index >= count) {
    throw FrameOutOfRange("frame " + std::to_string(frame_index) +
                          " out of range for clip '" + clip_id + "' (" +
                          std::to_string(count) + " frames)");
  }
  return root_ / "clips" / clip_id / frame_file_name(frame_index);
}

std::vector<int> MediaStore::clip_sample(const std::string& clip_id,
                                         int max_frames) const {
  return sample_frames(frame_count(clip_id), max_frames);
}

fs::path MediaStore::bank_path(const std::string& owner_id) const {
  if (owner_id.empty()) throw ConfigError("bank_path: empty owner id");
  for (char c : owner_id) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                    (c >= '0' && c <= '9') || c == '_' || c == '-';
    if (!ok) {
      throw ConfigError("owner id '" + owner_id +
                        "' contains characters unusable in a file name");
    }
  }
  return root_ / "banks" / (owner_id + ".json");
}

void MediaStore::save_bank(const Bank& bank) const {
  write_text_file(bank_path(bank.owner_id), bank_to_json_text(bank));
}

Bank MediaStore::load_bank(const std::string& owner_id) const {
  return bank_from_json_text(read_text_file(bank_path(owner_id)));
}

bool MediaStore::has_bank(const std::string& owner_id) const {
  return fs::exists(bank_path(owner_id));
}

std::string frame_data_uri(const MediaStore& store, const std::string& clip_id,
                           int frame_index) {
  const fs::path path = store.frame_path(clip_id, frame_index);
  return "data:image/jpeg;base64," + base64_encode(read_text_file(path));
}

}  // namespace ctxbank
