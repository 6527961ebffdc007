#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ctxbank/bank.hpp"

namespace ctxbank {

// --- bank persistence --------------------------------------------------------

// Canonical json serialization: fixed key order, 2-space indent, trailing
// newline. Two equal banks always serialize to identical bytes.
std::string bank_to_json_text(const Bank& bank);

// Inverse of bank_to_json_text. Validates field presence/types and the
// structural invariants a well-formed bank upholds (nonempty evidence,
// anchor kind matching the entry's category, support >= 1). Throws
// SchemaVersionMismatch for a version this build does not read, SchemaError
// otherwise.
Bank bank_from_json_text(const std::string& text);

// --- on-disk media layout ------------------------------------------------------
//
//   <root>/manifest.json                  {"schema_version":1,"clips":{id:frames}}
//   <root>/clips/<clip_id>/frame_00042.jpg
//   <root>/banks/<owner_id>.json
//
// Frame files only have to exist for runs that upload pixels (remote
// backend); scripted replay resolves everything through the manifest.
class MediaStore {
 public:
  // Opens an existing store; throws IoError when the manifest is missing or
  // unreadable, SchemaError when it is malformed.
  static MediaStore open(const std::filesystem::path& root);

  // Creates the directory layout (and an empty manifest) if needed, then
  // opens the store.
  static MediaStore create(const std::filesystem::path& root);

  const std::filesystem::path& root() const { return root_; }
  const std::map<std::string, int>& clips() const { return clips_; }

  bool has_clip(const std::string& clip_id) const;
  int frame_count(const std::string& clip_id) const;  // UnknownClip

  // Declares a clip and its frame count. Re-registering with a different
  // count throws IoError (the store would no longer match its files).
  void register_clip(const std::string& clip_id, int frame_count);
  void save_manifest() const;

  // Path of one frame image. Validates clip id and index bounds
  // (UnknownClip / FrameOutOfRange); does not require the file to exist.
  std::filesystem::path frame_path(const std::string& clip_id,
                                   int frame_index) const;

  // Uniformly spaced indices across the whole clip, at most max_frames.
  std::vector<int> clip_sample(const std::string& clip_id,
                               int max_frames) const;

  std::filesystem::path bank_path(const std::string& owner_id) const;
  void save_bank(const Bank& bank) const;        // IoError on write failure
  Bank load_bank(const std::string& owner_id) const;
  bool has_bank(const std::string& owner_id) const;

 private:
  explicit MediaStore(std::filesystem::path root) : root_(std::move(root)) {}

  std::filesystem::path root_;
  std::map<std::string, int> clips_;
};

// Reads the frame image and wraps it as a jpeg data uri for upload to a
// remote backend. Throws IoError when the file cannot be read.
std::string frame_data_uri(const MediaStore& store, const std::string& clip_id,
                           int frame_index);

// Whole-file helpers shared across the toolkit.
std::string read_text_file(const std::filesystem::path& path);  // IoError
void write_text_file(const std::filesystem::path& path,
                     const std::string& text);  // IoError; creates parents

}  // namespace ctxbank
