#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "icll/automata.hpp"

namespace icll {

struct ProblemInstance {
  std::int64_t id = 0;
  std::uint64_t automaton_hash = 0;
  Pfa pfa;
  std::vector<TokenSeq> strings;
  TokenSeq tokens;  // strings joined by the delimiter, none trailing

  std::size_t symbol_count() const { return tokens.size() - (strings.empty() ? 0 : strings.size() - 1); }
  bool operator==(const ProblemInstance&) const = default;
};

TokenSeq join_strings(const std::vector<TokenSeq>& strings);

struct DatasetStats {
  double mean_tokens = 0.0;   // including delimiters
  double mean_symbols = 0.0;  // language symbols only
  double mean_strings = 0.0;
  double mean_states = 0.0;   // minimized automaton size
};

struct DatasetManifest {
  static constexpr const char* kFormatVersion = "1";

  std::uint64_t seed = 0;
  GenerationParams params;
  std::int64_t n_train = 0;
  std::int64_t n_test = 0;
  std::string format_version = kFormatVersion;
  std::filesystem::path train_path;  // relative to the manifest directory
  std::filesystem::path test_path;
  DatasetStats stats;
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<ProblemInstance> train;
  std::vector<ProblemInstance> test;
};

struct GenerationExhausted : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct VersionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SizeExceedsTrain : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Samples until n_train + n_test automata with distinct canonical hashes are
/// found (rejecting duplicates, at most 100 attempts per requested automaton),
/// then samples each instance's strings from its own child stream. The first
/// n_train automata form the train split.
Dataset build_dataset(const GenerationParams& params, std::int64_t n_train, std::int64_t n_test,
                      std::uint64_t seed, int threads = 1);

/// One instance from an already-minimized automaton; used by the generator and
/// by tests that need hand-built languages.
ProblemInstance make_instance(std::int64_t id, const Pfa& pfa, const GenerationParams& params, Rng& rng);

DatasetStats compute_stats(const std::vector<ProblemInstance>& instances);

nlohmann::json instance_to_json(const ProblemInstance& instance);
ProblemInstance instance_from_json(const nlohmann::json& j);

nlohmann::json params_to_json(const GenerationParams& params);
GenerationParams params_from_json(const nlohmann::json& j);

/// Writes manifest.json, train.jsonl and test.jsonl into `dir`. Files are
/// staged under temporary names and renamed only once all of them are
/// complete; on failure the staged files are removed.
void save_dataset(Dataset& dataset, const std::filesystem::path& dir);

void write_instances(const std::vector<ProblemInstance>& instances, const std::filesystem::path& path);
std::vector<ProblemInstance> read_instances(const std::filesystem::path& path);

DatasetManifest read_manifest(const std::filesystem::path& manifest_path);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// Accepts either a manifest file or a directory containing manifest.json.
Dataset load_dataset(const std::filesystem::path& path);
std::filesystem::path manifest_path_for(const std::filesystem::path& path);

struct TrainingSubset {
  std::int64_t size = 0;
  std::vector<std::size_t> indices;  // into the train split, in shuffled order
};

/// Nested subsets: prefixes of one seeded permutation of the train split.
std::vector<TrainingSubset> training_subsets(const DatasetManifest& manifest, const std::vector<std::int64_t>& sizes,
                                             std::uint64_t seed);

/// Writes train_<size>.jsonl and manifest_<size>.json next to the dataset for
/// each subset. The subset manifests share the parent's test split.
std::vector<std::filesystem::path> write_training_subsets(const Dataset& dataset, const std::filesystem::path& dir,
                                                         const std::vector<TrainingSubset>& subsets);

}  // namespace icll
