#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "deoccl/dataset.hpp"
#include "deoccl/network.hpp"
#include "deoccl/training.hpp"

namespace deoccl {

// Merged configuration of a run. Resolution order: defaults, then the config
// file, then command-line values.
struct RunConfig {
  static constexpr const char* kHeader = "deoccl-config v1";

  NetworkConfig network;
  TrainConfig train;
  MaskSpec mask;
  std::string data_root = "data";
  std::string out_root = "runs";
  std::string generic_corpus;  // directory of face PNGs; empty skips step 1a
  std::string landmark_provider = "synthetic";
  std::set<std::string> holdout_tags;
  double epoch_scale = 1.0;
  std::uint64_t seed = 0;

  // Applies one key=value setting. Throws config on unknown keys or bad values.
  void set(const std::string& key, const std::string& value);

  // Reads a `deoccl-config v1` file: key=value lines, '#' comments.
  void load_file(const std::filesystem::path& path);

  // Derives the dependent fields (schedule, seed, scaled network geometry)
  // and validates everything.
  void finalize();

  // Every resolved key=value, sorted, with the header line.
  std::string to_text() const;
  std::uint64_t hash() const;

  static std::vector<std::string> keys();

 private:
  std::set<std::string> explicit_;
};

// DEOCCL_DATA_ROOT when set, else the built-in default.
std::string default_data_root();

}  // namespace deoccl
