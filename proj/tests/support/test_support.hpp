#pragma once

// Shared helpers for the test binaries: a scripted-by-position backend, a
// self-cleaning temp directory, fixture path lookup and a quick media-store
// factory.

#include <atomic>
#include <chrono>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ctxbank/gateway.hpp"
#include "ctxbank/media.hpp"

namespace ctxbank::testing {

// Replies with a fixed list of responses in call order and keeps every
// prompt it saw, which is what most pipeline tests assert against. Throws
// once the script runs dry so a test that makes an unexpected extra call
// fails loudly instead of hanging on a stale reply.
class SequenceBackend : public Backend {
 public:
  explicit SequenceBackend(std::vector<std::string> responses,
                           std::size_t media_limit = 64)
      : responses_(std::move(responses)), media_limit_(media_limit) {}

  std::string name() const override { return "sequence"; }
  std::size_t media_limit() const override { return media_limit_; }

  std::string complete(const Prompt& prompt) override {
    if (media_count(prompt) > media_limit_) {
      throw BudgetExceeded("sequence backend: prompt carries " +
                           std::to_string(media_count(prompt)) +
                           " media segments, limit " +
                           std::to_string(media_limit_));
    }
    prompts.push_back(prompt);
    if (next_ >= responses_.size()) {
      throw Error("sequence backend: script exhausted after " +
                  std::to_string(responses_.size()) + " replies");
    }
    return responses_[next_++];
  }

  std::size_t calls() const { return next_; }

  std::vector<Prompt> prompts;

 private:
  std::vector<std::string> responses_;
  std::size_t next_ = 0;
  std::size_t media_limit_;
};

// Unique directory under the system temp root, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    const auto base = std::filesystem::temp_directory_path();
    path_ = base / ("ctxbank_test_" + std::to_string(counter.fetch_add(1)) +
                    "_" + std::to_string(std::chrono::steady_clock::now()
                                             .time_since_epoch()
                                             .count()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string str() const { return path_.string(); }
  std::filesystem::path operator/(const std::string& rel) const {
    return path_ / rel;
  }

 private:
  std::filesystem::path path_;
};

inline std::filesystem::path fixture_path(const std::string& rel) {
  return std::filesystem::path(CTXBANK_FIXTURE_DIR) / rel;
}

inline MediaStore make_store(const std::filesystem::path& root,
                             const std::map<std::string, int>& clips) {
  MediaStore store = MediaStore::create(root);
  for (const auto& [clip_id, count] : clips) {
    store.register_clip(clip_id, count);
  }
  store.save_manifest();
  return store;
}

}  // namespace ctxbank::testing
