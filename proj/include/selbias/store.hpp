#pragma once

#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "selbias/domain.hpp"

namespace selbias {

class StoreError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LoadedTrials {
  std::vector<TrialRecord> records;  // file order, first occurrence of each index
  std::size_t corrupt_lines = 0;
  std::size_t duplicate_indices = 0;
  std::size_t total_lines = 0;
};

/// Reads a condition file. Unparseable lines are counted, not fatal. A missing
/// file loads as empty.
LoadedTrials load_trials(const std::filesystem::path& path);

/// Append-only JSONL writer for one condition. Opening drops a torn final
/// line left by a crash mid-write.
class TrialWriter {
 public:
  explicit TrialWriter(const std::filesystem::path& path);

  void append(const TrialRecord& record);

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

/// Writes via a temporary sibling and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

std::string read_file(const std::filesystem::path& path);

}  // namespace selbias
