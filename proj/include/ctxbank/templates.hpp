#pragma once

#include <map>
#include <string>
#include <vector>

#include "ctxbank/prompt.hpp"

namespace ctxbank {

// Named prompt texts with [placeholder] slots. The default set ships in the
// binary; a directory of <name>.txt files can override individual texts so
// prompt wording can be tuned without rebuilding. Every run records which
// set produced its prompts.
struct TemplateSet {
  std::string id;  // "default-v1" or the override directory name
  std::map<std::string, std::string> texts;

  // Throws ConfigError for a name the set does not define.
  const std::string& text(const std::string& name) const;

  static TemplateSet builtin();

  // "default-v1" returns the builtin set; any other value is read as a
  // directory whose *.txt files override same-named builtin texts.
  static TemplateSet load(const std::string& dir_or_id);
};

// Splices values into [key] slots of a template in one pass. Text values are
// inserted literally; media values split the surrounding text and insert
// their segments in place. Inserted values are never re-scanned, so bank
// descriptors or model fragments containing bracketed tokens cannot smuggle
// placeholders in. Unknown [tokens] stay as-is.
Prompt assemble_prompt(const std::string& tmpl,
                       const std::map<std::string, std::string>& text_values,
                       const std::map<std::string, Prompt>& media_values = {});

// "A. first\nB. second\n..." — the option list shown to the model.
std::string render_options(const std::vector<std::string>& options);

}  // namespace ctxbank
