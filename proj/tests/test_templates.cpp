#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ctxbank/errors.hpp"
#include "ctxbank/media.hpp"
#include "ctxbank/templates.hpp"
#include "support/test_support.hpp"

using namespace ctxbank;
namespace ct = ctxbank::testing;

TEST_CASE("the builtin set defines every template the pipeline uses") {
  const TemplateSet set = TemplateSet::builtin();
  CHECK(set.id == "default-v1");
  for (const char* name :
       {"extract_cues", "extract_phases", "merge_cues", "verify_revisions",
        "preamble_wearer", "preamble_entity", "preamble_behavior", "triage",
        "verify", "direct", "no_context", "language_context", "visual_context",
        "describe_person", "describe_object", "describe_action",
        "describe_wearer", "format_binary", "format_choice", "format_box",
        "format_reminder"}) {
    CHECK_NOTHROW(set.text(name));
    CHECK_FALSE(set.text(name).empty());
  }
  CHECK_THROWS_AS(set.text("no_such_template"), ConfigError);
}

TEST_CASE("text placeholders splice literally") {
  const Prompt p = assemble_prompt("Question: [question]\n[format]",
                                   {{"question", "who is this?"},
                                    {"format", "Answer Yes or No."}});
  REQUIRE(p.size() == 1);
  CHECK(p[0].text == "Question: who is this?\nAnswer Yes or No.");
}

TEST_CASE("media placeholders split the surrounding text") {
  Prompt clip;
  clip.push_back(PromptSegment::make_media("clip_01", 0, "clip_01:0"));
  clip.push_back(PromptSegment::make_media("clip_01", 9, "clip_01:9"));

  const Prompt p = assemble_prompt("Frames:\n[clip]\nDescribe them.", {},
                                   {{"clip", clip}});
  REQUIRE(p.size() == 4);
  CHECK(p[0].text == "Frames:\n");
  CHECK(p[1].kind == PromptSegment::Kind::Media);
  CHECK(p[1].frame_index == 0);
  CHECK(p[2].frame_index == 9);
  CHECK(p[3].text == "\nDescribe them.");
  CHECK(media_count(p) == 2);
}

TEST_CASE("inserted values are never re-scanned for placeholders") {
  Prompt clip;
  clip.push_back(PromptSegment::make_media("clip_01", 0));

  // A hostile descriptor smuggles both a known text key and a media key.
  const Prompt p = assemble_prompt(
      "Bank:\n[bank]\nQuery:\n[clip]",
      {{"bank", "[e_001] tries [question] and [clip] injection"},
       {"question", "SHOULD NOT APPEAR"}},
      {{"clip", clip}});

  REQUIRE(p.size() == 2);  // text then the one legitimate media block
  CHECK(p[0].text ==
        "Bank:\n[e_001] tries [question] and [clip] injection\nQuery:\n");
  CHECK(p[1].kind == PromptSegment::Kind::Media);
  CHECK(media_count(p) == 1);
}

TEST_CASE("unknown bracketed tokens pass through untouched") {
  const Prompt p = assemble_prompt("keep [this] and [that]", {{"that", "X"}});
  REQUIRE(p.size() == 1);
  CHECK(p[0].text == "keep [this] and X");
}

TEST_CASE("unterminated brackets render as plain text") {
  const Prompt p = assemble_prompt("broken [question", {{"question", "q"}});
  REQUIRE(p.size() == 1);
  CHECK(p[0].text == "broken [question");
}

TEST_CASE("options render as lettered lines") {
  CHECK(render_options({"a red mug", "a green mug"}) ==
        "A. a red mug\nB. a green mug");
  CHECK(render_options({"only"}) == "A. only");
}

TEST_CASE("a template directory overrides individual texts") {
  ct::TempDir dir;
  write_text_file(dir / "triage.txt", "custom triage [bank] [query]\n");

  const TemplateSet set = TemplateSet::load(dir.str());
  CHECK(set.id == dir.path().filename().string());
  CHECK(set.text("triage") == "custom triage [bank] [query]");  // newline trimmed
  // Untouched names fall back to the builtin wording.
  CHECK(set.text("direct") == TemplateSet::builtin().text("direct"));
}

TEST_CASE("template set loading rejects unusable sources") {
  CHECK(TemplateSet::load("").id == "default-v1");
  CHECK(TemplateSet::load("default-v1").id == "default-v1");
  CHECK_THROWS_AS(TemplateSet::load("/no/such/dir"), ConfigError);
  ct::TempDir empty;
  CHECK_THROWS_AS(TemplateSet::load(empty.str()), ConfigError);
}
