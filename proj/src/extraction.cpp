#include "selbias/extraction.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

namespace selbias {

std::string_view to_string(ParseFailure failure) {
  switch (failure) {
    case ParseFailure::not_json: return "not_json";
    case ParseFailure::no_choices_key: return "no_choices_key";
    case ParseFailure::wrong_shape: return "wrong_shape";
  }
  return "unknown";
}

namespace {

// Index one past the brace that closes the object opened at `start`, skipping
// braces inside string literals. nullopt when the text ends first.
std::optional<std::size_t> matching_close(std::string_view text, std::size_t start) {
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = start; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (c == '\\') {
        ++i;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) return i + 1;
    }
  }
  return std::nullopt;
}

std::optional<Json> first_object(std::string_view raw) {
  for (auto start = raw.find('{'); start != std::string_view::npos;
       start = raw.find('{', start + 1)) {
    const auto end = matching_close(raw, start);
    if (!end) continue;
    Json parsed = Json::parse(raw.substr(start, *end - start), nullptr, false);
    if (!parsed.is_discarded() && parsed.is_object()) return parsed;
  }
  return std::nullopt;
}

std::optional<std::string> scalar_label(const Json& value) {
  if (value.is_string()) return value.get<std::string>();
  if (value.is_number_integer()) return value.dump();
  if (value.is_number_float()) {
    const double d = value.get<double>();
    if (std::isfinite(d) && d == std::floor(d) && std::fabs(d) < 1e15) {
      return std::to_string(static_cast<long long>(d));
    }
    return value.dump();
  }
  if (value.is_boolean()) return value.get<bool>() ? "true" : "false";
  return std::nullopt;
}

std::string trim_copy(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::string upper_copy(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  return s;
}

bool is_letter_label(const std::string& s) {
  return s.size() == 1 && std::isalpha(static_cast<unsigned char>(s[0]));
}

}  // namespace

ParseResult extract_choices(std::string_view raw, ExtractMode mode) {
  try {
    std::optional<Json> object;
    if (mode == ExtractMode::strict) {
      Json parsed = Json::parse(trim_copy(raw), nullptr, false);
      if (!parsed.is_discarded() && parsed.is_object()) object = std::move(parsed);
    } else {
      object = first_object(raw);
    }
    if (!object) return {ParseFailure::not_json};

    const auto it = object->find("choices");
    if (it == object->end()) return {ParseFailure::no_choices_key};
    if (!it->is_array()) return {ParseFailure::wrong_shape};

    std::vector<std::string> labels;
    labels.reserve(it->size());
    for (const auto& value : *it) {
      auto label = scalar_label(value);
      if (!label) return {ParseFailure::wrong_shape};
      labels.push_back(std::move(*label));
    }
    return {std::move(labels)};
  } catch (const std::exception&) {
    return {ParseFailure::not_json};
  }
}

SelectionMatrix resolve_selection(std::span<const std::string> labels, const InputList& input) {
  SelectionMatrix matrix;
  std::set<ObjectLabel> seen;
  int output_position = 1;
  for (const auto& raw : labels) {
    const std::string label = trim_copy(raw);
    SelectionRow row;
    row.object = ObjectLabel(label);
    row.output_position = output_position++;
    for (const auto& entry : input.entries) {
      const auto& text = entry.object.text();
      const bool match = text == label || (is_letter_label(text) && is_letter_label(label) &&
                                           upper_copy(label) == text);
      if (match) {
        row.object = entry.object;
        row.input_position = entry.position;
        break;
      }
    }
    if (!seen.insert(row.object).second) matrix.has_duplicates = true;
    matrix.rows.push_back(std::move(row));
  }
  return matrix;
}

TrialFlags compute_flags(const std::optional<SelectionMatrix>& selection, int select_count) {
  TrialFlags flags;
  if (!selection) return flags;
  flags.parsed = true;
  const auto& rows = selection->rows;
  flags.correct_count = static_cast<int>(rows.size()) == select_count;
  flags.correspondence =
      !selection->has_duplicates &&
      std::all_of(rows.begin(), rows.end(), [](const auto& r) { return r.input_position.has_value(); });
  if (flags.correct_count && flags.correspondence) {
    flags.primacy = true;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (*rows[i].input_position != static_cast<int>(i) + 1) {
        flags.primacy = false;
        break;
      }
    }
  }
  return flags;
}

std::string render_choices_json(std::span<const ObjectLabel> labels) {
  std::string out = "{\"choices\": [";
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (i) out += ", ";
    out += Json(labels[i].text()).dump();
  }
  return out + "]}";
}

}  // namespace selbias
