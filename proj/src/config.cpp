#include "selbias/config.hpp"

#include <algorithm>
#include <set>

#include "selbias/store.hpp"

namespace selbias {

namespace fs = std::filesystem;

void RunConfig::validate() const {
  grid.validate();
  std::set<std::string> ids;
  for (const auto& p : providers) {
    if (!ids.insert(p.id).second) throw ValidationError("providers[" + p.id + "]: duplicate id");
  }
  for (const auto& id : grid.providers) {
    if (!ids.count(id)) {
      throw ValidationError("grid.providers: unknown provider id '" + id + "'");
    }
  }
  if (parallelism < 1) throw ValidationError("parallelism: must be >= 1");
  if (bootstrap.replicates < 1) throw ValidationError("bootstrap.replicates: must be >= 1");
  if (max_consecutive_errors < 1) throw ValidationError("max_consecutive_errors: must be >= 1");
  if (store.empty()) throw ValidationError("store: missing");
}

namespace {

template <typename T>
T scalar(const Json& j, const char* name, T fallback, const std::string& path) {
  if (!j.contains(name)) return fallback;
  try {
    return j.at(name).get<T>();
  } catch (const Json::exception&) {
    throw ValidationError(path + ": wrong type");
  }
}

}  // namespace

RunConfig run_config_from_json(const Json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ValidationError("config: expected an object");
  static const std::set<std::string> known{"grid",        "providers",   "store",
                                           "bootstrap",   "parallelism", "strict_json",
                                           "max_consecutive_errors"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ValidationError(key + ": unknown field");
  }

  RunConfig config;
  if (!j.contains("grid")) throw ValidationError("grid: missing");
  config.grid = grid_from_json(j.at("grid"));

  if (!j.contains("providers") || !j.at("providers").is_array()) {
    throw ValidationError("providers: expected an array");
  }
  for (const auto& p : j.at("providers")) {
    try {
      config.providers.push_back(provider_config_from_json(p, base_dir));
    } catch (const ValidationError&) {
      throw;
    } catch (const std::invalid_argument& e) {
      throw ValidationError(e.what());
    }
  }

  const auto store = scalar<std::string>(j, "store", "", "store");
  if (!store.empty()) config.store = fs::path(store).is_absolute() ? fs::path(store) : base_dir / store;

  if (j.contains("bootstrap")) {
    const auto& b = j.at("bootstrap");
    if (!b.is_object()) throw ValidationError("bootstrap: expected an object");
    config.bootstrap.replicates = scalar<int>(b, "replicates", 3000, "bootstrap.replicates");
    config.bootstrap.seed = scalar<std::uint64_t>(b, "seed", 0, "bootstrap.seed");
  }
  config.parallelism = scalar<int>(j, "parallelism", 1, "parallelism");
  config.strict_json = scalar<bool>(j, "strict_json", false, "strict_json");
  config.max_consecutive_errors =
      scalar<int>(j, "max_consecutive_errors", 20, "max_consecutive_errors");
  config.validate();
  return config;
}

namespace {

int line_of(const std::string& text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

// "grid.temperatures[2]: ..." -> {"\"grid\"", "\"temperatures\""}; bracketed
// non-numeric ids and quoted values in the message become search tokens too.
std::vector<std::string> anchor_tokens(const std::string& message) {
  std::vector<std::string> tokens;
  const auto colon = message.find(": ");
  const std::string path = message.substr(0, colon);
  std::string segment;
  auto flush = [&] {
    if (!segment.empty()) tokens.push_back('"' + segment + '"');
    segment.clear();
  };
  for (std::size_t i = 0; i < path.size(); ++i) {
    const char c = path[i];
    if (c == '.') {
      flush();
    } else if (c == '[') {
      flush();
      const auto close = path.find(']', i);
      if (close == std::string::npos) break;
      const auto inner = path.substr(i + 1, close - i - 1);
      if (!inner.empty() && !std::all_of(inner.begin(), inner.end(), ::isdigit)) {
        tokens.push_back('"' + inner + '"');
      }
      i = close;
    } else if (c == ' ') {
      break;
    } else {
      segment += c;
    }
  }
  flush();
  if (colon != std::string::npos) {
    const auto open = message.find('\'', colon);
    const auto close = open == std::string::npos ? open : message.find('\'', open + 1);
    if (close != std::string::npos) tokens.push_back('"' + message.substr(open + 1, close - open - 1) + '"');
  }
  return tokens;
}

}  // namespace

int locate_field_line(const std::string& text, const std::string& message) {
  std::size_t pos = 0;
  int line = 0;
  for (const auto& token : anchor_tokens(message)) {
    const auto found = text.find(token, pos);
    if (found == std::string::npos) break;
    pos = found + token.size();
    line = line_of(text, found);
  }
  return line;
}

RunConfig load_run_config(const fs::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const StoreError& e) {
    throw ValidationError(e.what());
  }
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ValidationError(path.string() + ":" + std::to_string(line_of(text, e.byte > 0 ? e.byte - 1 : 0)) +
                          ": invalid JSON: " + e.what());
  }
  try {
    return run_config_from_json(j, path.parent_path());
  } catch (const ValidationError& e) {
    const int line = locate_field_line(text, e.what());
    const std::string where = line > 0 ? path.string() + ":" + std::to_string(line) : path.string();
    throw ValidationError(where + ": " + e.what());
  }
}

ProviderMap build_providers(const std::vector<ProviderConfig>& configs) {
  ProviderMap map;
  for (const auto& c : configs) map.emplace(c.id, make_provider(c));
  return map;
}

}  // namespace selbias
