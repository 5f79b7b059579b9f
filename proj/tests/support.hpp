#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>

#include "selbias/domain.hpp"
#include "selbias/providers.hpp"
#include "selbias/simulator.hpp"

namespace testing {

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("selbias-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::vector<selbias::ObjectLabel> labels(std::initializer_list<const char*> texts) {
  std::vector<selbias::ObjectLabel> out;
  for (const char* t : texts) out.emplace_back(t);
  return out;
}

inline selbias::InputList input_of(std::initializer_list<const char*> texts) {
  const auto l = labels(texts);
  return selbias::InputList::from_labels(l);
}

inline selbias::Condition sim_condition(int n_t = 5, selbias::Pipeline pipeline = selbias::Pipeline::two_step,
                                        int trials = 50, std::uint64_t seed = 1) {
  selbias::Condition c;
  c.provider_id = "sim";
  c.model = "sim-model";
  c.list_length = n_t;
  c.pipeline = pipeline;
  c.trials = trials;
  c.seed = seed;
  return c;
}

inline std::shared_ptr<selbias::SimulatedProvider> sim_provider(selbias::BiasModel bias = {}) {
  return std::make_shared<selbias::SimulatedProvider>("sim", "sim-model", std::move(bias));
}

}  // namespace testing
