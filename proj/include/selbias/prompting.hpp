#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "selbias/domain.hpp"

namespace selbias {

struct PromptText {
  std::string text;

  friend bool operator==(const PromptText&, const PromptText&) = default;
};

struct RailSpec {
  Pipeline kind = Pipeline::two_step;
  std::string body;
  int choice_count = 0;
  std::optional<std::vector<ObjectLabel>> choices;  // direct rails only
};

/// "Please select {n} of the following:" followed by one "\n- {label}" per
/// choice. No trailing newline.
PromptText construct_prompt(std::span<const ObjectLabel> choices, int choice_count);

RailSpec build_two_step_rail(std::string_view initial_response);

RailSpec build_direct_rail(const PromptText& prompt, std::span<const ObjectLabel> choices,
                           int choice_count);

/// Single-pass `{name}` substitution. Unknown names and substituted values are
/// left untouched, so a value containing "{prompt}" is never re-expanded.
std::string substitute(std::string_view tmpl, const std::map<std::string, std::string>& vars);

/// Text that stands in for the rail engine's `${...}` built-ins.
struct RailExpansions {
  std::string json_suffix_prompt_examples;
  std::string xml_prefix_prompt;

  static RailExpansions defaults();
};

enum class InstructionPlacement { system, prepend };

/// What actually goes over the wire for a rail: the <instructions> section
/// and the <prompt> section with `${...}` placeholders expanded. The
/// `${output_schema}` placeholder expands to the rail's <output> element.
struct RailMessages {
  std::optional<std::string> system_text;
  std::string user_text;
};

RailMessages render_rail_messages(const RailSpec& rail,
                                  const RailExpansions& expansions = RailExpansions::defaults(),
                                  InstructionPlacement placement = InstructionPlacement::system);

/// Content between the first <tag> (attributes allowed) and its closing tag.
std::optional<std::string> section_content(std::string_view body, std::string_view tag);

namespace templates {
extern const std::string_view kTwoStepRail;
extern const std::string_view kDirectRail;
extern const std::string_view kDirectCase;
extern const std::string_view kJsonSuffixPromptExamples;
extern const std::string_view kXmlPrefixPrompt;
}  // namespace templates

}  // namespace selbias
