#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>

#include "tsfn/experiment.hpp"

#ifndef TSFN_FIXTURE_DIR
#error "TSFN_FIXTURE_DIR must point at tests/fixtures"
#endif

namespace fixture {

inline std::filesystem::path dir() { return TSFN_FIXTURE_DIR; }

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("tsfn_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline tsfn::SyntheticSpec tiny_spec() {
  return tsfn::SyntheticSpec::from_key_values(
      tsfn::parse_key_values(read_text(dir() / "tiny_dataset.cfg")));
}

inline tsfn::ExperimentConfig tiny_config(const std::filesystem::path& dataset,
                                          const std::filesystem::path& output) {
  auto kv = tsfn::parse_key_values(read_text(dir() / "tiny_experiment.cfg"));
  kv["dataset"] = dataset.string();
  kv["output"] = output.string();
  return tsfn::ExperimentConfig::from_key_values(kv);
}

}  // namespace fixture
