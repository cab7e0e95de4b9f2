#pragma once

// Run configuration: INI sections with `section.key` names, shared by the CLI
// and tests, plus the canonical dump that feeds the checkpoint digest.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "sorex/analysis.hpp"
#include "sorex/dataset.hpp"
#include "sorex/evaluation.hpp"
#include "sorex/model.hpp"
#include "sorex/training.hpp"

namespace sorex {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DataConfig {
  std::string name = "dataset";
  std::filesystem::path interactions;
  std::filesystem::path social;
  std::optional<double> rating_threshold;
  bool skip_header = false;
  int min_interactions = 2;
};

struct RunConfig {
  DataConfig data;
  SplitRatios split;
  ModelConfig model;
  TrainConfig train;
  EvalConfig eval;
  AnalysisConfig analysis;
  std::optional<std::uint64_t> seed;
  int threads = 1;
  std::filesystem::path out = ".";

  /// Applies one `section.key` = value assignment. Throws ConfigError on
  /// unknown keys or unparsable values.
  void set(const std::string& key, const std::string& value);

  /// Reads an INI file of `[section]` headers and `key = value` lines.
  void load(const std::filesystem::path& path);

  /// Every key with its current value, in a fixed order.
  std::vector<std::pair<std::string, std::string>> entries() const;

  /// `key=value` lines of every result-affecting key (paths, thread count and
  /// output directory excluded).
  std::vector<std::string> canonical() const;
  std::uint64_t digest() const;

  /// Writes an INI file that load() reads back to the same configuration.
  void write(std::ostream& out) const;

  /// Throws ConfigError when the seed is missing or a section is inconsistent.
  void validate() const;
};

/// Number of worker threads: SOREX_THREADS when set, else the config value.
int effective_threads(const RunConfig& config);

}  // namespace sorex
