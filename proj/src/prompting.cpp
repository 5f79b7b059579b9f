#include "selbias/prompting.hpp"

#include <set>

namespace selbias {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

// Replaces `${name}` tokens in one left-to-right pass.
std::string expand_placeholders(std::string_view text,
                                const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == '$' && i + 1 < text.size() && text[i + 1] == '{') {
      const auto close = text.find('}', i + 2);
      if (close != std::string_view::npos) {
        const std::string name(text.substr(i + 2, close - i - 2));
        if (auto it = values.find(name); it != values.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out += text[i++];
  }
  return out;
}

}  // namespace

PromptText construct_prompt(std::span<const ObjectLabel> choices, int choice_count) {
  if (choices.empty()) throw DomainError("construct_prompt: no choices");
  if (choice_count < 1) throw DomainError("construct_prompt: choice_count must be >= 1");
  std::string prompt = "Please select " + std::to_string(choice_count) + " of the following:";
  for (const auto& choice : choices) {
    prompt += "\n- ";
    prompt += choice.text();
  }
  return {std::move(prompt)};
}

std::string substitute(std::string_view tmpl, const std::map<std::string, std::string>& vars) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      const auto close = tmpl.find('}', i + 1);
      if (close != std::string_view::npos) {
        const std::string name(tmpl.substr(i + 1, close - i - 1));
        if (auto it = vars.find(name); it != vars.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out += tmpl[i++];
  }
  return out;
}

RailSpec build_two_step_rail(std::string_view initial_response) {
  if (initial_response.empty()) throw DomainError("build_two_step_rail: empty initial response");
  RailSpec rail;
  rail.kind = Pipeline::two_step;
  rail.body = substitute(templates::kTwoStepRail,
                         {{"initial_response", std::string(initial_response)}});
  return rail;
}

RailSpec build_direct_rail(const PromptText& prompt, std::span<const ObjectLabel> choices,
                           int choice_count) {
  std::set<ObjectLabel> seen;
  for (const auto& c : choices) {
    if (!seen.insert(c).second) {
      throw DomainError("build_direct_rail: duplicate choice '" + c.text() + "'");
    }
  }
  if (choice_count < 1 || choice_count > static_cast<int>(choices.size())) {
    throw DomainError("build_direct_rail: choice_count " + std::to_string(choice_count) +
                      " not in [1, " + std::to_string(choices.size()) + "]");
  }

  std::string cases;
  for (const auto& c : choices) cases += substitute(templates::kDirectCase, {{"choice", c.text()}});

  RailSpec rail;
  rail.kind = Pipeline::direct;
  rail.choice_count = choice_count;
  rail.choices = std::vector<ObjectLabel>(choices.begin(), choices.end());
  rail.body = substitute(templates::kDirectRail, {{"choice_count", std::to_string(choice_count)},
                                                  {"choices", cases},
                                                  {"prompt", prompt.text}});
  return rail;
}

RailExpansions RailExpansions::defaults() {
  return {std::string(templates::kJsonSuffixPromptExamples),
          std::string(templates::kXmlPrefixPrompt)};
}

std::optional<std::string> section_content(std::string_view body, std::string_view tag) {
  const std::string open = "<" + std::string(tag);
  const std::string close = "</" + std::string(tag) + ">";
  std::size_t start = body.find(open);
  while (start != std::string_view::npos) {
    const char next = start + open.size() < body.size() ? body[start + open.size()] : '\0';
    if (next == '>' || next == ' ' || next == '\n' || next == '\t') break;
    start = body.find(open, start + 1);
  }
  if (start == std::string_view::npos) return std::nullopt;
  const auto content_begin = body.find('>', start);
  if (content_begin == std::string_view::npos) return std::nullopt;
  // <prompt> is the final section and may embed arbitrary model text, so its
  // closing tag is taken from the end of the body.
  const auto end = tag == "prompt" ? body.rfind(close) : body.find(close, content_begin);
  if (end == std::string_view::npos || end < content_begin) return std::nullopt;
  return std::string(body.substr(content_begin + 1, end - content_begin - 1));
}

RailMessages render_rail_messages(const RailSpec& rail, const RailExpansions& expansions,
                                  InstructionPlacement placement) {
  const auto output = section_content(rail.body, "output");
  const auto instructions = section_content(rail.body, "instructions");
  const auto prompt = section_content(rail.body, "prompt");
  if (!output || !instructions || !prompt) {
    throw DomainError("render_rail_messages: rail body is missing a required section");
  }
  const std::map<std::string, std::string> values{
      {"gr.json_suffix_prompt_examples", expansions.json_suffix_prompt_examples},
      {"gr.xml_prefix_prompt", expansions.xml_prefix_prompt},
      {"output_schema", "<output>\n" + std::string(trim(*output)) + "\n</output>"}};

  std::string system = std::string(trim(expand_placeholders(*instructions, values)));
  std::string user = std::string(trim(expand_placeholders(*prompt, values)));

  RailMessages messages;
  if (placement == InstructionPlacement::system) {
    messages.system_text = std::move(system);
    messages.user_text = std::move(user);
  } else {
    messages.user_text = system + "\n\n" + user;
  }
  return messages;
}

}  // namespace selbias
