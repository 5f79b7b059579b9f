#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "selbias/domain.hpp"

namespace selbias {

enum class ParseFailure { not_json, no_choices_key, wrong_shape };

std::string_view to_string(ParseFailure failure);

struct ParseResult {
  // labels of the "choices" array in output order, or the failure reason
  std::variant<std::vector<std::string>, ParseFailure> outcome;

  bool ok() const noexcept { return outcome.index() == 0; }
  const std::vector<std::string>& labels() const { return std::get<0>(outcome); }
  ParseFailure failure() const { return std::get<1>(outcome); }
};

enum class ExtractMode {
  lenient,  // first balanced JSON object anywhere in the text
  strict,   // the whole text (modulo surrounding whitespace) must be the object
};

/// Never throws, whatever the input bytes.
ParseResult extract_choices(std::string_view raw, ExtractMode mode = ExtractMode::lenient);

/// Maps labels onto input positions. Letters match case-insensitively and
/// surrounding whitespace is ignored; unmatched labels are kept with no input
/// position.
SelectionMatrix resolve_selection(std::span<const std::string> labels, const InputList& input);

TrialFlags compute_flags(const std::optional<SelectionMatrix>& selection, int select_count);

/// Renders the (object) column of a selection as the JSON the rails request.
std::string render_choices_json(std::span<const ObjectLabel> labels);

}  // namespace selbias
