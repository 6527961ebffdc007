#include "ctxbank/gateway.hpp"

#include <cctype>
#include <chrono>
#include <cstdint>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "ctxbank/encode.hpp"
#include "ctxbank/errors.hpp"
#include "ctxbank/media.hpp"

namespace ctxbank {

namespace {

// --- tiny text utilities ----------------------------------------------------

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::vector<std::string> split_lines(const std::string& s) {
  std::vector<std::string> lines;
  std::string current;
  for (char c : s) {
    if (c == '\n') {
      lines.push_back(current);
      current.clear();
    } else if (c != '\r') {
      current += c;
    }
  }
  lines.push_back(current);
  return lines;
}

bool iequals(const std::string& a, const std::string& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(a[i])) !=
        std::tolower(static_cast<unsigned char>(b[i]))) {
      return false;
    }
  }
  return true;
}

// Case-insensitive marker at the start of a trimmed line; returns the text
// after it, or nullopt.
std::optional<std::string> after_marker(const std::string& line,
                                        const std::string& marker) {
  const std::string t = trim(line);
  if (t.size() < marker.size()) return std::nullopt;
  if (!iequals(t.substr(0, marker.size()), marker)) return std::nullopt;
  return trim(t.substr(marker.size()));
}

std::optional<int> parse_uint(const std::string& s) {
  if (s.empty() || s.size() > 9) return std::nullopt;
  int v = 0;
  for (char c : s) {
    if (c < '0' || c > '9') return std::nullopt;
    v = v * 10 + (c - '0');
  }
  return v;
}

// Splits "a | b | c" on pipes, trimming each field.
std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string current;
  for (char c : line) {
    if (c == '|') {
      fields.push_back(trim(current));
      current.clear();
    } else {
      current += c;
    }
  }
  fields.push_back(trim(current));
  return fields;
}

// Word tokens (runs of alphanumerics) of a string.
std::vector<std::string> word_tokens(const std::string& s) {
  std::vector<std::string> tokens;
  std::string current;
  for (char c : s) {
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '_') {
      current += c;
    } else if (!current.empty()) {
      tokens.push_back(current);
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(current);
  return tokens;
}

bool is_entry_id(const std::string& token) {
  if (token.size() < 3 || token[0] != 'e' || token[1] != '_') return false;
  return parse_uint(token.substr(2)).has_value();
}

bool is_candidate_id(const std::string& token) {
  if (token.size() < 3 || token[0] != 'c' || token[1] != '_') return false;
  return parse_uint(token.substr(2)).has_value();
}

std::vector<std::string> collect_entry_ids(const std::string& text) {
  std::vector<std::string> ids;
  for (const auto& tok : word_tokens(text)) {
    if (!is_entry_id(tok)) continue;
    bool seen = false;
    for (const auto& id : ids) {
      if (id == tok) {
        seen = true;
        break;
      }
    }
    if (!seen) ids.push_back(tok);
  }
  return ids;
}

}  // namespace

// --- canonical key ------------------------------------------------------------

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ull;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ull;

void fnv_bytes(std::uint64_t& h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
}

void fnv_u64(std::uint64_t& h, std::uint64_t v) {
  unsigned char le[8];
  for (int i = 0; i < 8; ++i) le[i] = static_cast<unsigned char>(v >> (8 * i));
  fnv_bytes(h, le, 8);
}

void fnv_string(std::uint64_t& h, const std::string& s) {
  fnv_u64(h, s.size());
  fnv_bytes(h, s.data(), s.size());
}

}  // namespace

std::string canonical_prompt_key(const Prompt& prompt) {
  std::uint64_t h = kFnvOffset;
  for (const auto& seg : prompt) {
    if (seg.kind == PromptSegment::Kind::Text) {
      fnv_bytes(h, "T", 1);
      fnv_string(h, seg.text);
    } else {
      fnv_bytes(h, "M", 1);
      fnv_string(h, seg.clip_id);
      fnv_u64(h, static_cast<std::uint64_t>(seg.frame_index));
    }
  }
  static const char* hex = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = hex[h & 0xf];
    h >>= 4;
  }
  return out;
}

// --- transcript -----------------------------------------------------------------

Transcript Transcript::load(const std::string& path) {
  Transcript t;
  const std::string text = read_text_file(path);
  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string line = trim(lines[i]);
    if (line.empty() || line[0] == '#') continue;
    const auto sep = line.find(' ');
    if (sep == std::string::npos || sep != 16) {
      throw IoError(path + ":" + std::to_string(i + 1) +
                    ": expected '<16-hex-key> <base64-response>'");
    }
    const std::string key = line.substr(0, sep);
    std::string response;
    try {
      response = base64_decode(line.substr(sep + 1));
    } catch (const Error& e) {
      throw IoError(path + ":" + std::to_string(i + 1) + ": " + e.what());
    }
    t.add(key, response);
  }
  return t;
}

void Transcript::save(const std::string& path) const {
  std::string out = "# prompt-keyed response transcript, v1\n";
  for (const auto& key : order_) {
    out += key + " " + base64_encode(responses_.at(key)) + "\n";
  }
  write_text_file(path, out);
}

void Transcript::add(const std::string& key, const std::string& response) {
  auto [it, inserted] = responses_.insert_or_assign(key, response);
  (void)it;
  if (inserted) order_.push_back(key);
}

std::optional<std::string> Transcript::find(const std::string& key) const {
  auto it = responses_.find(key);
  if (it == responses_.end()) return std::nullopt;
  return it->second;
}

// --- scripted / recording backends -------------------------------------------------

ScriptedBackend::ScriptedBackend(Transcript transcript, std::size_t media_limit)
    : transcript_(std::move(transcript)), media_limit_(media_limit) {}

std::string ScriptedBackend::complete(const Prompt& prompt) {
  if (media_count(prompt) > media_limit_) {
    throw BudgetExceeded("prompt carries " +
                         std::to_string(media_count(prompt)) +
                         " media segments; scripted limit is " +
                         std::to_string(media_limit_));
  }
  const std::string key = canonical_prompt_key(prompt);
  auto response = transcript_.find(key);
  if (!response) {
    std::string head;
    for (const auto& seg : prompt) {
      if (seg.kind == PromptSegment::Kind::Text) {
        head = seg.text.substr(0, 80);
        break;
      }
    }
    throw NoScriptEntry("no scripted response for prompt key " + key +
                        " (starts: \"" + head + "\")");
  }
  return *response;
}

RecordingBackend::RecordingBackend(Backend& inner, Transcript& out,
                                   std::string autosave_path)
    : inner_(inner), out_(out), autosave_path_(std::move(autosave_path)) {}

std::string RecordingBackend::complete(const Prompt& prompt) {
  const std::string response = inner_.complete(prompt);
  std::lock_guard<std::mutex> lock(mu_);
  out_.add(canonical_prompt_key(prompt), response);
  if (!autosave_path_.empty()) out_.save(autosave_path_);
  return response;
}

// --- remote backend -------------------------------------------------------------

RemoteBackend::RemoteBackend(RemoteConfig config, MediaEncoder encoder)
    : config_(std::move(config)), encoder_(std::move(encoder)) {
  if (config_.endpoint.empty()) {
    throw ConfigError("remote backend needs an endpoint");
  }
  if (!encoder_) throw ConfigError("remote backend needs a media encoder");
}

std::string RemoteBackend::complete(const Prompt& prompt) {
  if (media_count(prompt) > config_.media_limit) {
    throw BudgetExceeded("prompt carries " +
                         std::to_string(media_count(prompt)) +
                         " media segments; remote limit is " +
                         std::to_string(config_.media_limit));
  }

  nlohmann::json content = nlohmann::json::array();
  for (const auto& seg : prompt) {
    if (seg.kind == PromptSegment::Kind::Text) {
      content.push_back({{"type", "text"}, {"text", seg.text}});
    } else {
      if (!seg.caption.empty()) {
        content.push_back({{"type", "text"}, {"text", "[" + seg.caption + "]"}});
      }
      content.push_back(
          {{"type", "image_url"},
           {"image_url", {{"url", encoder_(seg.clip_id, seg.frame_index)}}}});
    }
  }
  nlohmann::json body = {
      {"model", config_.model},
      {"temperature", config_.temperature},
      {"max_tokens", config_.max_tokens},
      {"messages",
       nlohmann::json::array({{{"role", "user"}, {"content", content}}})},
  };
  const std::string payload = body.dump();

  std::string api_key;
  if (!config_.api_key_env.empty()) {
    if (const char* v = std::getenv(config_.api_key_env.c_str())) api_key = v;
  }

  std::string last_error;
  for (int attempt = 0; attempt < config_.max_attempts; ++attempt) {
    if (attempt > 0) {
      const auto delay = std::chrono::milliseconds(
          static_cast<long long>(config_.initial_backoff_ms) << (attempt - 1));
      std::this_thread::sleep_for(delay);
    }

    // One client per call: cheap at this call rate and safe under --jobs.
    httplib::Client client(config_.endpoint);
    client.set_connection_timeout(config_.timeout_seconds, 0);
    client.set_read_timeout(config_.timeout_seconds, 0);
    client.set_write_timeout(config_.timeout_seconds, 0);
    httplib::Headers headers;
    if (!api_key.empty()) {
      headers.emplace("Authorization", "Bearer " + api_key);
    }

    auto res = client.Post(config_.path, headers, payload, "application/json");
    if (!res) {
      last_error = "connection error: " + httplib::to_string(res.error());
      continue;  // retry
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "http " + std::to_string(res->status);
      continue;  // retry
    }
    if (res->status != 200) {
      throw TransportError("remote endpoint returned http " +
                           std::to_string(res->status) + ": " +
                           res->body.substr(0, 200));
    }

    nlohmann::json reply = nlohmann::json::parse(res->body, nullptr, false);
    if (reply.is_discarded()) {
      throw TransportError("remote endpoint returned unparseable json");
    }
    try {
      const auto& message = reply.at("choices").at(0).at("message");
      const auto& content_field = message.at("content");
      if (content_field.is_string()) return content_field.get<std::string>();
      if (content_field.is_array()) {
        // Some servers reply with a content-part list; join the text parts.
        std::string joined;
        for (const auto& part : content_field) {
          if (part.contains("text") && part.at("text").is_string()) {
            joined += part.at("text").get<std::string>();
          }
        }
        return joined;
      }
      throw TransportError("remote reply content is neither text nor parts");
    } catch (const nlohmann::json::exception&) {
      throw TransportError("remote reply missing choices[0].message.content");
    }
  }
  throw TransportError("remote call failed after " +
                       std::to_string(config_.max_attempts) + " attempts (" +
                       last_error + ")");
}

// --- fenced blocks -----------------------------------------------------------------

std::string extract_fenced_block(const std::string& raw,
                                 const std::string& tag) {
  const auto lines = split_lines(raw);
  const std::string opener = "```" + tag;
  std::size_t i = 0;
  for (; i < lines.size(); ++i) {
    if (trim(lines[i]) == opener) break;
  }
  if (i == lines.size()) {
    throw ParseFailure("reply contains no ```" + tag + " block");
  }
  std::string body;
  for (++i; i < lines.size(); ++i) {
    if (trim(lines[i]) == "```") return body;
    body += lines[i];
    body += '\n';
  }
  throw ParseFailure("```" + tag + " block is not closed");
}

// --- candidate cues ------------------------------------------------------------------

namespace {

std::string normalize_category(const std::string& s) {
  std::string out;
  for (char c : trim(s)) {
    if (c == ' ' || c == '-') {
      out += '_';
    } else {
      out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
  }
  return out;
}

// "frame clip:12" or "span clip:3-40".
std::optional<Evidence> parse_anchor(const std::string& text) {
  const std::string t = trim(text);
  const auto space = t.find(' ');
  if (space == std::string::npos) return std::nullopt;
  const std::string kind = t.substr(0, space);
  const std::string rest = trim(t.substr(space + 1));
  const auto colon = rest.rfind(':');
  if (colon == std::string::npos || colon == 0) return std::nullopt;
  const std::string clip = rest.substr(0, colon);
  const std::string nums = rest.substr(colon + 1);
  if (kind == "frame") {
    const auto idx = parse_uint(nums);
    if (!idx) return std::nullopt;
    return Evidence::frame(clip, *idx);
  }
  if (kind == "span") {
    const auto dash = nums.find('-');
    if (dash == std::string::npos) return std::nullopt;
    const auto a = parse_uint(nums.substr(0, dash));
    const auto b = parse_uint(nums.substr(dash + 1));
    if (!a || !b || *b < *a) return std::nullopt;
    return Evidence::span(clip, *a, *b);
  }
  return std::nullopt;
}

}  // namespace

ParsedCandidates parse_candidates(const std::string& raw, int first_seq) {
  ParsedCandidates out;
  const std::string body = extract_fenced_block(raw, "cues");
  int seq = first_seq;
  const auto lines = split_lines(body);
  for (std::size_t n = 0; n < lines.size(); ++n) {
    const std::string line = trim(lines[n]);
    if (line.empty()) continue;
    const std::string where = "cue line " + std::to_string(n + 1);

    const auto fields = split_fields(line);
    if (fields.size() != 3) {
      out.warnings.push_back(where + ": expected 3 '|' fields, got " +
                             std::to_string(fields.size()));
      continue;
    }
    MemoryType type;
    try {
      type = memory_type_from_string(normalize_category(fields[0]));
    } catch (const Error&) {
      out.warnings.push_back(where + ": unknown category '" + fields[0] + "'");
      continue;
    }
    if (fields[1].empty()) {
      out.warnings.push_back(where + ": empty descriptor");
      continue;
    }
    const auto anchor = parse_anchor(fields[2]);
    if (!anchor) {
      out.warnings.push_back(where + ": unparseable anchor '" + fields[2] +
                             "'");
      continue;
    }
    if (!evidence_matches_type(type, *anchor)) {
      out.warnings.push_back(
          where + ": " + to_string(type) +
          (type == MemoryType::Behavior ? " needs a span anchor"
                                        : " needs a single-frame anchor"));
      continue;
    }
    CandidateCue cue;
    cue.candidate_id = format_id(IdKind::Candidate, seq++);
    cue.memory_type = type;
    cue.descriptor = fields[1];
    cue.anchor = *anchor;
    out.cues.push_back(std::move(cue));
  }
  return out;
}

// --- merge decisions -----------------------------------------------------------------

ParsedDecisions parse_merge_decisions(const std::string& raw,
                                      const std::vector<CandidateCue>& cues,
                                      const Bank& bank) {
  ParsedDecisions out;
  const std::string body = extract_fenced_block(raw, "decisions");

  std::map<std::string, const CandidateCue*> by_id;
  for (const auto& cue : cues) by_id[cue.candidate_id] = &cue;

  // Target must be an active entry; CONFIRM/REVISE must stay in category.
  // Violations demote to DROP so the batch always applies cleanly.
  auto checked_target =
      [&](const std::string& where, const CandidateCue& cue,
          const std::string& entry_id, bool same_type_required,
          std::vector<std::string>& warnings) -> const BankEntry* {
    const BankEntry* target = bank.find_entry(entry_id);
    if (target == nullptr || target->status != EntryStatus::Active) {
      warnings.push_back(where + ": target " + entry_id +
                         " is not an active entry; dropping");
      return nullptr;
    }
    if (same_type_required && target->memory_type != cue.memory_type) {
      warnings.push_back(where + ": target " + entry_id + " is " +
                         to_string(target->memory_type) + " but candidate is " +
                         to_string(cue.memory_type) + "; dropping");
      return nullptr;
    }
    return target;
  };

  std::map<std::string, MergeDecision> parsed;
  const auto lines = split_lines(body);
  for (std::size_t n = 0; n < lines.size(); ++n) {
    const std::string line = trim(lines[n]);
    if (line.empty()) continue;
    const std::string where = "decision line " + std::to_string(n + 1);

    const auto colon = line.find(':');
    if (colon == std::string::npos) {
      out.warnings.push_back(where + ": expected 'c_NNN: <decision>'");
      continue;
    }
    const std::string cid = trim(line.substr(0, colon));
    if (!is_candidate_id(cid)) {
      out.warnings.push_back(where + ": bad candidate id '" + cid + "'");
      continue;
    }
    auto cue_it = by_id.find(cid);
    if (cue_it == by_id.end()) {
      out.warnings.push_back(where + ": " + cid +
                             " is not in this candidate batch");
      continue;
    }
    const CandidateCue& cue = *cue_it->second;

    std::string rest = trim(line.substr(colon + 1));
    std::string keyword = rest;
    std::string tail;
    if (const auto sp = rest.find_first_of(" \t"); sp != std::string::npos) {
      keyword = rest.substr(0, sp);
      tail = trim(rest.substr(sp + 1));
    }
    for (auto& c : keyword) {
      c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    }

    MergeDecision decision = MergeDecision::drop(cid);
    if (keyword == "ADD") {
      decision = MergeDecision::add(cid);
    } else if (keyword == "DROP") {
      decision = MergeDecision::drop(cid);
    } else if (keyword == "CONFIRM" || keyword == "RETRACT") {
      if (!is_entry_id(tail)) {
        out.warnings.push_back(where + ": " + keyword +
                               " needs an entry id; dropping");
      } else if (checked_target(where, cue, tail, keyword == "CONFIRM",
                                out.warnings) != nullptr) {
        decision = keyword == "CONFIRM" ? MergeDecision::confirm(cid, tail)
                                        : MergeDecision::retract(cid, tail);
      }
    } else if (keyword == "REVISE") {
      const auto pipe = tail.find('|');
      const std::string entry_id =
          trim(pipe == std::string::npos ? tail : tail.substr(0, pipe));
      const std::string descriptor =
          pipe == std::string::npos ? "" : trim(tail.substr(pipe + 1));
      if (!is_entry_id(entry_id)) {
        out.warnings.push_back(where + ": REVISE needs an entry id; dropping");
      } else if (descriptor.empty()) {
        out.warnings.push_back(where +
                               ": REVISE without a replacement descriptor; "
                               "dropping");
      } else if (checked_target(where, cue, entry_id, true, out.warnings) !=
                 nullptr) {
        decision = MergeDecision::revise(cid, entry_id, descriptor);
      }
    } else {
      out.warnings.push_back(where + ": unknown decision '" + keyword +
                             "'; dropping");
    }

    if (parsed.contains(cid)) {
      out.warnings.push_back(where + ": duplicate decision for " + cid +
                             "; last wins");
    }
    parsed[cid] = std::move(decision);
  }

  for (const auto& cue : cues) {
    auto it = parsed.find(cue.candidate_id);
    // Unmentioned candidates are dropped silently: that is the instructed
    // way for the model to discard noise.
    out.decisions.push_back(it == parsed.end()
                                ? MergeDecision::drop(cue.candidate_id)
                                : it->second);
  }
  return out;
}

// --- revision verdicts ----------------------------------------------------------------

ParsedVerdicts parse_revise_verdicts(const std::string& raw) {
  ParsedVerdicts out;
  const std::string body = extract_fenced_block(raw, "verdicts");
  const auto lines = split_lines(body);
  for (std::size_t n = 0; n < lines.size(); ++n) {
    const std::string line = trim(lines[n]);
    if (line.empty()) continue;
    const std::string where = "verdict line " + std::to_string(n + 1);

    const auto colon = line.find(':');
    if (colon == std::string::npos) {
      out.warnings.push_back(where + ": expected 'c_NNN: CONFIRM|WITHDRAW'");
      continue;
    }
    const std::string cid = trim(line.substr(0, colon));
    const std::string verdict = trim(line.substr(colon + 1));
    if (!is_candidate_id(cid)) {
      out.warnings.push_back(where + ": bad candidate id '" + cid + "'");
      continue;
    }
    if (iequals(verdict, "CONFIRM")) {
      out.confirmed[cid] = true;
    } else if (iequals(verdict, "WITHDRAW")) {
      out.confirmed[cid] = false;
    } else {
      out.warnings.push_back(where + ": unknown verdict '" + verdict + "'");
    }
  }
  return out;
}

// --- triage ---------------------------------------------------------------------------

TriageOutcome TriageOutcome::answer(std::string text) {
  TriageOutcome o;
  o.kind = Kind::Answer;
  o.answer_text = std::move(text);
  return o;
}

TriageOutcome TriageOutcome::request(std::vector<std::string> ids) {
  TriageOutcome o;
  o.kind = Kind::Request;
  o.entry_ids = std::move(ids);
  return o;
}

TriageOutcome parse_triage(const std::string& raw) {
  for (const auto& line : split_lines(raw)) {
    if (auto rest = after_marker(line, "ANSWER:")) {
      return TriageOutcome::answer(*rest);
    }
    if (auto rest = after_marker(line, "REQUEST:")) {
      auto ids = collect_entry_ids(*rest);
      if (ids.empty()) {
        throw ParseFailure("REQUEST line names no entry ids: '" + trim(line) +
                           "'");
      }
      return TriageOutcome::request(std::move(ids));
    }
  }
  throw ParseFailure("reply has neither an ANSWER: nor a REQUEST: line");
}

std::string render_triage(const TriageOutcome& outcome) {
  if (outcome.kind == TriageOutcome::Kind::Answer) {
    return "ANSWER: " + outcome.answer_text;
  }
  std::string line = "REQUEST: ";
  for (std::size_t i = 0; i < outcome.entry_ids.size(); ++i) {
    if (i > 0) line += ", ";
    line += outcome.entry_ids[i];
  }
  return line;
}

std::vector<std::string> parse_decisive(const std::string& raw) {
  std::vector<std::string> ids;
  for (const auto& line : split_lines(raw)) {
    if (auto rest = after_marker(line, "DECISIVE:")) {
      ids = collect_entry_ids(*rest);  // last DECISIVE line wins
    }
  }
  return ids;
}

// --- answer normalizers ------------------------------------------------------------------

std::string answer_payload(const std::string& raw) {
  for (const auto& line : split_lines(raw)) {
    if (auto rest = after_marker(line, "ANSWER:")) return *rest;
  }
  return raw;
}

std::optional<std::string> normalize_binary(const std::string& raw) {
  for (const auto& tok : word_tokens(answer_payload(raw))) {
    if (iequals(tok, "yes")) return "Yes";
    if (iequals(tok, "no")) return "No";
  }
  return std::nullopt;
}

std::optional<std::string> normalize_choice(const std::string& raw,
                                            int option_count) {
  if (option_count < 1 || option_count > 26) return std::nullopt;
  for (const auto& tok : word_tokens(answer_payload(raw))) {
    if (tok.size() != 1) continue;
    const char up =
        static_cast<char>(std::toupper(static_cast<unsigned char>(tok[0])));
    if (up >= 'A' && up < static_cast<char>('A' + option_count)) {
      return std::string(1, up);
    }
  }
  return std::nullopt;
}

// --- bounding boxes -------------------------------------------------------------------------

BoundingBox parse_bbox(const std::string& raw, double image_width,
                       double image_height) {
  if (image_width <= 0 || image_height <= 0) {
    throw ConfigError("parse_bbox: image size must be positive");
  }
  const std::string payload = answer_payload(raw);

  // Pull the first four numeric literals out of the payload.
  std::vector<double> nums;
  std::size_t i = 0;
  while (i < payload.size() && nums.size() < 4) {
    const char c = payload[i];
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '-' && i + 1 < payload.size() &&
         std::isdigit(static_cast<unsigned char>(payload[i + 1])))) {
      std::size_t j = i + 1;
      bool dot = false;
      while (j < payload.size() &&
             (std::isdigit(static_cast<unsigned char>(payload[j])) ||
              (payload[j] == '.' && !dot))) {
        if (payload[j] == '.') dot = true;
        ++j;
      }
      nums.push_back(std::stod(payload.substr(i, j - i)));
      i = j;
    } else {
      ++i;
    }
  }
  if (nums.size() < 4) {
    throw ParseFailure("reply does not contain four box coordinates");
  }

  bool normalized = true;
  for (double v : nums) {
    if (v < 0.0 || v > 1.0) normalized = false;
  }
  BoundingBox box;
  box.x1 = normalized ? nums[0] * image_width : nums[0];
  box.y1 = normalized ? nums[1] * image_height : nums[1];
  box.x2 = normalized ? nums[2] * image_width : nums[2];
  box.y2 = normalized ? nums[3] * image_height : nums[3];

  auto clamp = [](double v, double hi) {
    return v < 0 ? 0 : (v > hi ? hi : v);
  };
  box.x1 = clamp(box.x1, image_width);
  box.x2 = clamp(box.x2, image_width);
  box.y1 = clamp(box.y1, image_height);
  box.y2 = clamp(box.y2, image_height);
  if (box.x1 > box.x2) std::swap(box.x1, box.x2);
  if (box.y1 > box.y2) std::swap(box.y1, box.y2);
  if (box.width() <= 0 || box.height() <= 0) {
    throw DegenerateBox("predicted box has zero area after clamping");
  }
  return box;
}

}  // namespace ctxbank
