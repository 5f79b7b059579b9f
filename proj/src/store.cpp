#include "selbias/store.hpp"

#include <set>
#include <sstream>

namespace selbias {

namespace fs = std::filesystem;

LoadedTrials load_trials(const fs::path& path) {
  LoadedTrials loaded;
  std::ifstream in(path, std::ios::binary);
  if (!in) return loaded;
  std::set<std::int64_t> seen;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++loaded.total_lines;
    Json j = Json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      ++loaded.corrupt_lines;
      continue;
    }
    try {
      auto record = trial_from_json(j);
      if (!seen.insert(record.trial_index).second) {
        ++loaded.duplicate_indices;
        continue;
      }
      loaded.records.push_back(std::move(record));
    } catch (const std::exception&) {
      ++loaded.corrupt_lines;
    }
  }
  return loaded;
}

TrialWriter::TrialWriter(const fs::path& path) : path_(path) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);

  if (fs::exists(path)) {
    const std::string content = read_file(path);
    if (!content.empty() && content.back() != '\n') {
      const auto keep = content.rfind('\n');
      fs::resize_file(path, keep == std::string::npos ? 0 : keep + 1, ec);
      if (ec) throw StoreError("cannot repair " + path.string() + ": " + ec.message());
    }
  }
  out_.open(path, std::ios::binary | std::ios::app);
  if (!out_) throw StoreError("cannot open " + path.string() + " for append");
}

void TrialWriter::append(const TrialRecord& record) {
  out_ << to_jsonl(record) << '\n';
  out_.flush();
  if (!out_) throw StoreError("write to " + path_.string() + " failed");
}

void write_file_atomic(const fs::path& path, const std::string& content) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw StoreError("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw StoreError("write to " + tmp.string() + " failed");
  }
  fs::rename(tmp, path, ec);
  if (ec) throw StoreError("cannot rename " + tmp.string() + ": " + ec.message());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StoreError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace selbias
