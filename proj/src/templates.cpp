#include "ctxbank/templates.hpp"

#include <filesystem>

#include "ctxbank/errors.hpp"
#include "ctxbank/media.hpp"

namespace ctxbank {

const std::string& TemplateSet::text(const std::string& name) const {
  auto it = texts.find(name);
  if (it == texts.end()) {
    throw ConfigError("template set '" + id + "' has no template named '" +
                      name + "'");
  }
  return it->second;
}

// ---------------------------------------------------------------------------
// Builtin prompt texts
// ---------------------------------------------------------------------------

TemplateSet TemplateSet::builtin() {
  TemplateSet set;
  set.id = "default-v1";
  auto& t = set.texts;

  // --- stage I: bank construction ---

  t["extract_cues"] = R"TMPL(You are building a long-term memory bank about the camera wearer of an egocentric clip.

Clip frames (labels show clip:frame):
[clip]
Extract distinctive, re-identifiable cues about the wearer.

Categories:
- appearance: stable visual traits of the wearer (body, clothing, accessories).
- owned_objects: items the wearer owns or repeatedly uses.
- behavior: habitual actions or a characteristic manner of doing things.

Rules:
- Keep only cues distinctive enough to help re-identify this wearer later; skip transient scene details and other people's traits.
- Ground every cue. appearance and owned_objects cues cite one frame as `frame <clip>:<index>`; behavior cues cite an inclusive range as `span <clip>:<start>-<end>`.
- Keep descriptors short and concrete.

Reply with exactly one fenced block, one cue per line:

```cues
appearance | <descriptor> | frame <clip>:<index>
behavior | <descriptor> | span <clip>:<start>-<end>
```

Output an empty block if nothing qualifies.)TMPL";

  t["extract_phases"] = R"TMPL(You are building a phase-level memory of a reference procedure.

Reference frames (labels show clip:frame):
[clip]
Break the demonstrated activity into its key phases, in order.

Rules:
- One line per phase; the category is always `behavior`.
- Describe what is done and how: tools, hands, order, settings.
- Ground each phase in the inclusive frame range it occupies: `span <clip>:<start>-<end>`.

Reply with exactly one fenced block, one phase per line:

```cues
behavior | <phase descriptor> | span <clip>:<start>-<end>
```)TMPL";

  t["merge_cues"] = R"TMPL(You maintain a structured memory bank about one subject. Reconcile the new candidate cues below with the current bank.

Current bank:
[bank]
New candidates (id | category | descriptor | anchor):
[candidates]

Pick exactly one decision per candidate:
- ADD — new, distinctive cue not yet in the bank.
- CONFIRM <entry_id> — a re-observation of an existing entry of the same category.
- REVISE <entry_id> | <updated descriptor> — the new observation supersedes an existing entry of the same category.
- RETRACT <entry_id> — the new observation shows an existing entry no longer holds.
- DROP — redundant or non-distinctive noise; discard silently.

Never invent entry ids; only reconcile within the same category.

Reply with exactly one fenced block, one line per candidate, in candidate order:

```decisions
c_001: ADD
c_002: CONFIRM e_003
c_003: REVISE e_001 | <updated descriptor>
c_004: RETRACT e_002
c_005: DROP
```)TMPL";

  t["verify_revisions"] = R"TMPL(You proposed rewriting existing memory descriptors. Re-check each proposal against the new evidence shown below.

[proposals]
Confirm a proposal only if the new observation genuinely supersedes the old descriptor. If the old and new descriptions can coexist, or the evidence is ambiguous, withdraw it.

Reply with exactly one fenced block, one line per proposal:

```verdicts
c_003: CONFIRM
c_007: WITHDRAW
```)TMPL";

  // --- stage II: answering against a bank ---

  t["preamble_wearer"] =
      R"TMPL(You are answering a question about the camera wearer of a query clip, using a memory bank built about one known wearer. All reference and query clips were captured on the same camera rig with the same mounting position and capture conditions, so rig, viewpoint and image-quality artifacts are shared across everyone and are not evidence of identity. Judge only from the wearer's own cues.)TMPL";

  t["preamble_entity"] =
      R"TMPL(You are answering a question about specific people or objects. A memory bank describing the reference entities is provided; each entry is grounded in stored reference images.)TMPL";

  t["preamble_behavior"] =
      R"TMPL(You are answering a question about how an activity is performed. A memory bank describing the reference procedure's phases is provided; each phase is grounded in a span of the reference demonstration.)TMPL";

  t["triage"] = R"TMPL([preamble]

Memory bank (descriptors only):
[bank]
Query:
[query]
Question: [question]

Decide whether the descriptors above plus the query are sufficient to answer.
- If they are, reply with one line: ANSWER: <answer in the required format>
- If you must first inspect the stored visual evidence behind particular entries, reply with one line instead: REQUEST: <comma-separated entry ids>

[format])TMPL";

  t["verify"] = R"TMPL([preamble]

Memory bank, with the evidence you requested shown inline after its entry:
[evidence]
Query:
[query]
Question: [question]

Answer using the inlined evidence. [format]
You may add one final line naming the entries whose evidence settled your answer:
DECISIVE: <comma-separated entry ids>)TMPL";

  t["direct"] = R"TMPL([preamble]

Memory bank:
[bank]
Query:
[query]
Question: [question]

[format])TMPL";

  // --- context-free and flat-context baselines ---

  t["no_context"] = R"TMPL(Query:
[query]
Question: [question]

[format])TMPL";

  t["language_context"] = R"TMPL(Context descriptions:
[descriptions]

Query:
[query]
Question: [question]

[format])TMPL";

  t["visual_context"] = R"TMPL(Reference context:
[references]
Query:
[query]
Question: [question]

[format])TMPL";

  // --- description calls (flat language context and description banks) ---

  t["describe_person"] = R"TMPL(Here is a reference image of [declaration].
[reference]
Describe [declaration]'s distinctive visual appearance in 2-4 sentences, focusing on stable traits (build, hair, glasses, clothing). Reply with the description only.)TMPL";

  t["describe_object"] = R"TMPL(Here is a reference image of [declaration].
[reference]
Describe this object's distinctive visual appearance in 2-4 sentences: shape, color, markings, wear. Reply with the description only.)TMPL";

  t["describe_action"] = R"TMPL(Here are frames from a reference execution of: [declaration].
[reference]
Describe how this procedure is performed, step by step, in a few sentences. Reply with the description only.)TMPL";

  t["describe_wearer"] = R"TMPL(Here are frames sampled from a clip recorded by one camera wearer.
[reference]
Describe this wearer's distinctive appearance, belongings and habits in a few sentences, focusing on cues that would let you re-identify them in other clips. Reply with the description only.)TMPL";

  // --- answer format clauses ---

  t["format_binary"] =
      "Answer with exactly one line: ANSWER: Yes or ANSWER: No.";
  t["format_choice"] = R"TMPL(Options:
[options]
Answer with exactly one line: ANSWER: <option letter>.)TMPL";
  t["format_box"] =
      "Answer with exactly one line: ANSWER: [x1, y1, x2, y2] — pixel "
      "coordinates of the bounding box in the [width]x[height] query image.";

  t["format_reminder"] =
      "Your previous reply did not match the required format. Reply again, "
      "following the format instructions exactly.";

  return set;
}

TemplateSet TemplateSet::load(const std::string& dir_or_id) {
  if (dir_or_id.empty() || dir_or_id == "default-v1") return builtin();

  namespace fs = std::filesystem;
  const fs::path dir(dir_or_id);
  if (!fs::is_directory(dir)) {
    throw ConfigError("template set '" + dir_or_id +
                      "' is neither 'default-v1' nor a directory");
  }
  TemplateSet set = builtin();
  set.id = dir.filename().string().empty() ? dir.string()
                                           : dir.filename().string();
  bool any = false;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".txt") {
      continue;
    }
    std::string body = read_text_file(entry.path());
    // Editors append a trailing newline; the builtin texts carry none.
    while (!body.empty() && (body.back() == '\n' || body.back() == '\r')) {
      body.pop_back();
    }
    set.texts[entry.path().stem().string()] = body;
    any = true;
  }
  if (!any) {
    throw ConfigError("template directory '" + dir_or_id +
                      "' contains no .txt files");
  }
  return set;
}

// ---------------------------------------------------------------------------
// Assembly
// ---------------------------------------------------------------------------

Prompt assemble_prompt(const std::string& tmpl,
                       const std::map<std::string, std::string>& text_values,
                       const std::map<std::string, Prompt>& media_values) {
  Prompt out;
  std::string pending;
  auto flush = [&] {
    if (!pending.empty()) {
      out.push_back(PromptSegment::make_text(pending));
      pending.clear();
    }
  };

  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    const auto open = tmpl.find('[', pos);
    if (open == std::string::npos) {
      pending += tmpl.substr(pos);
      break;
    }
    const auto close = tmpl.find(']', open + 1);
    if (close == std::string::npos) {
      pending += tmpl.substr(pos);
      break;
    }
    pending += tmpl.substr(pos, open - pos);
    const std::string key = tmpl.substr(open + 1, close - open - 1);

    if (auto it = text_values.find(key); it != text_values.end()) {
      pending += it->second;  // literal: values are never re-scanned
    } else if (auto mt = media_values.find(key); mt != media_values.end()) {
      flush();
      out.insert(out.end(), mt->second.begin(), mt->second.end());
    } else {
      pending += tmpl.substr(open, close - open + 1);  // not a placeholder
    }
    pos = close + 1;
  }
  flush();
  return out;
}

std::string render_options(const std::vector<std::string>& options) {
  std::string out;
  for (std::size_t i = 0; i < options.size(); ++i) {
    out += static_cast<char>('A' + i);
    out += ". " + options[i];
    if (i + 1 < options.size()) out += "\n";
  }
  return out;
}

}  // namespace ctxbank
