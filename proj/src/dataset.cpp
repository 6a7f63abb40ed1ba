#include "icll/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "icll/parallel.hpp"

namespace icll {

namespace fs = std::filesystem;
using nlohmann::json;

TokenSeq join_strings(const std::vector<TokenSeq>& strings) {
  TokenSeq tokens;
  for (std::size_t i = 0; i < strings.size(); ++i) {
    if (i > 0) tokens.push_back(kDelimiter);
    tokens.insert(tokens.end(), strings[i].begin(), strings[i].end());
  }
  return tokens;
}

ProblemInstance make_instance(std::int64_t id, const Pfa& pfa, const GenerationParams& params, Rng& rng) {
  ProblemInstance inst;
  inst.id = id;
  inst.pfa = pfa;
  inst.automaton_hash = canonical_hash(pfa.dfa());
  const auto count = rng.uniform_int(params.strings_min, params.strings_max);
  inst.strings.reserve(static_cast<std::size_t>(count));
  for (std::int64_t j = 0; j < count; ++j) {
    Rng string_rng = rng.child("string", static_cast<std::uint64_t>(j));
    inst.strings.push_back(sample_string(pfa, params, string_rng));
  }
  inst.tokens = join_strings(inst.strings);
  return inst;
}

DatasetStats compute_stats(const std::vector<ProblemInstance>& instances) {
  DatasetStats stats;
  if (instances.empty()) return stats;
  double tokens = 0, symbols = 0, strings = 0, states = 0;
  for (const auto& inst : instances) {
    tokens += static_cast<double>(inst.tokens.size());
    symbols += static_cast<double>(inst.symbol_count());
    strings += static_cast<double>(inst.strings.size());
    states += inst.pfa.dfa().num_states();
  }
  const auto n = static_cast<double>(instances.size());
  return {tokens / n, symbols / n, strings / n, states / n};
}

Dataset build_dataset(const GenerationParams& params, std::int64_t n_train, std::int64_t n_test, std::uint64_t seed,
                      int threads) {
  params.validate();
  if (n_train < 0 || n_test < 0) throw std::invalid_argument("build_dataset: split sizes must be non-negative");
  const Rng root(seed);
  const auto total = static_cast<std::size_t>(n_train + n_test);

  std::vector<Pfa> automata;
  automata.reserve(total);
  std::unordered_set<std::uint64_t> seen;
  const std::size_t max_attempts = 100 * total;
  std::size_t attempt = 0;
  while (automata.size() < total) {
    if (attempt >= max_attempts)
      throw GenerationExhausted("found only " + std::to_string(automata.size()) + " distinct automata in " +
                                std::to_string(attempt) + " attempts; need " + std::to_string(total));
    Rng rng = root.child("automaton", attempt++);
    Dfa dfa = minimize(sample_dfa(params, rng).dfa);
    if (!seen.insert(canonical_hash(dfa)).second) continue;
    automata.push_back(to_pfa(dfa));
  }

  std::vector<ProblemInstance> instances(total);
  parallel_for(total, threads, [&](std::size_t i) {
    Rng rng = root.child("strings", i);
    instances[i] = make_instance(static_cast<std::int64_t>(i), automata[i], params, rng);
  });

  Dataset ds;
  ds.manifest.seed = seed;
  ds.manifest.params = params;
  ds.manifest.params.seed = seed;
  ds.manifest.n_train = n_train;
  ds.manifest.n_test = n_test;
  ds.manifest.train_path = "train.jsonl";
  ds.manifest.test_path = "test.jsonl";
  ds.manifest.stats = compute_stats(instances);
  ds.train.assign(std::make_move_iterator(instances.begin()),
                  std::make_move_iterator(instances.begin() + static_cast<std::ptrdiff_t>(n_train)));
  ds.test.assign(std::make_move_iterator(instances.begin() + static_cast<std::ptrdiff_t>(n_train)),
                 std::make_move_iterator(instances.end()));
  return ds;
}

json instance_to_json(const ProblemInstance& instance) {
  return {{"id", instance.id},
          {"automaton", dfa_to_json(instance.pfa.dfa())},
          {"strings", instance.strings},
          {"tokens", instance.tokens}};
}

ProblemInstance instance_from_json(const json& j) {
  ProblemInstance inst;
  inst.id = j.at("id").get<std::int64_t>();
  inst.pfa = to_pfa(dfa_from_json(j.at("automaton")));
  inst.automaton_hash = canonical_hash(inst.pfa.dfa());
  inst.strings = j.at("strings").get<std::vector<TokenSeq>>();
  inst.tokens = j.at("tokens").get<TokenSeq>();
  if (inst.tokens != join_strings(inst.strings))
    throw std::invalid_argument("tokens are not the delimiter-join of strings");
  for (const auto& s : inst.strings) run(inst.pfa, s);
  return inst;
}

json params_to_json(const GenerationParams& p) {
  return {{"n_min", p.n_min},     {"n_max", p.n_max},     {"c_min", p.c_min},
          {"c_max", p.c_max},     {"m_min", p.m_min},     {"m_max", p.m_max},
          {"len_min", p.len_min}, {"len_max", p.len_max}, {"strings_min", p.strings_min},
          {"strings_max", p.strings_max}, {"seed", p.seed}};
}

GenerationParams params_from_json(const json& j) {
  GenerationParams p;
  p.n_min = j.at("n_min").get<int>();
  p.n_max = j.at("n_max").get<int>();
  p.c_min = j.at("c_min").get<int>();
  p.c_max = j.at("c_max").get<int>();
  p.m_min = j.at("m_min").get<int>();
  p.m_max = j.at("m_max").get<int>();
  p.len_min = j.at("len_min").get<int>();
  p.len_max = j.at("len_max").get<int>();
  p.strings_min = j.at("strings_min").get<int>();
  p.strings_max = j.at("strings_max").get<int>();
  p.seed = j.at("seed").get<std::uint64_t>();
  p.validate();
  return p;
}

void write_instances(const std::vector<ProblemInstance>& instances, const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  for (const auto& inst : instances) out << instance_to_json(inst).dump() << '\n';
  out.flush();
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::vector<ProblemInstance> read_instances(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open dataset split " + path.string());
  std::vector<ProblemInstance> out;
  std::string line;
  std::size_t offset = 0;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t line_start = offset;
    offset += line.size() + 1;
    if (line.empty()) continue;
    try {
      out.push_back(instance_from_json(json::parse(line)));
    } catch (const json::parse_error& e) {
      throw FormatError(path.string() + ": malformed JSON at byte offset " +
                        std::to_string(line_start + (e.byte > 0 ? e.byte - 1 : 0)) + " (line " +
                        std::to_string(line_no) + ")");
    } catch (const std::exception& e) {
      throw FormatError(path.string() + ": invalid instance at byte offset " + std::to_string(line_start) +
                        " (line " + std::to_string(line_no) + "): " + e.what());
    }
  }
  return out;
}

void write_manifest(const DatasetManifest& m, const fs::path& path) {
  json j = {{"format_version", m.format_version},
            {"seed", m.seed},
            {"params", params_to_json(m.params)},
            {"splits", {{"train", m.train_path.generic_string()}, {"test", m.test_path.generic_string()}}},
            {"n_train", m.n_train},
            {"n_test", m.n_test},
            {"stats",
             {{"mean_tokens", m.stats.mean_tokens},
              {"mean_symbols", m.stats.mean_symbols},
              {"mean_strings", m.stats.mean_strings},
              {"mean_states", m.stats.mean_states}}}};
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

DatasetManifest read_manifest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open manifest " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": malformed JSON at byte offset " + std::to_string(e.byte > 0 ? e.byte - 1 : 0));
  }
  DatasetManifest m;
  try {
    m.format_version = j.at("format_version").get<std::string>();
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  if (m.format_version != DatasetManifest::kFormatVersion)
    throw VersionError(path.string() + ": unsupported format_version \"" + m.format_version + "\"");
  try {
    m.seed = j.at("seed").get<std::uint64_t>();
    m.params = params_from_json(j.at("params"));
    m.train_path = j.at("splits").at("train").get<std::string>();
    m.test_path = j.at("splits").at("test").get<std::string>();
    m.n_train = j.at("n_train").get<std::int64_t>();
    m.n_test = j.at("n_test").get<std::int64_t>();
    if (j.contains("stats")) {
      const auto& s = j.at("stats");
      m.stats = {s.value("mean_tokens", 0.0), s.value("mean_symbols", 0.0), s.value("mean_strings", 0.0),
                 s.value("mean_states", 0.0)};
    }
  } catch (const std::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return m;
}

fs::path manifest_path_for(const fs::path& path) {
  return fs::is_directory(path) ? path / "manifest.json" : path;
}

Dataset load_dataset(const fs::path& path) {
  const fs::path manifest_path = manifest_path_for(path);
  Dataset ds;
  ds.manifest = read_manifest(manifest_path);
  const fs::path base = manifest_path.parent_path();
  auto load_split = [&](const fs::path& rel, std::int64_t expected, const char* name) {
    const fs::path p = base / rel;
    if (!fs::exists(p)) throw FormatError("manifest " + manifest_path.string() + " names missing " + name +
                                           " split file " + p.string());
    auto instances = read_instances(p);
    if (static_cast<std::int64_t>(instances.size()) != expected)
      throw FormatError(p.string() + ": expected " + std::to_string(expected) + " instances, found " +
                        std::to_string(instances.size()));
    return instances;
  };
  ds.train = load_split(ds.manifest.train_path, ds.manifest.n_train, "train");
  ds.test = load_split(ds.manifest.test_path, ds.manifest.n_test, "test");
  return ds;
}

namespace {

// Stages files under temporary names and commits them together.
class StagedFiles {
 public:
  fs::path stage(const fs::path& final_path) {
    fs::path tmp = final_path;
    tmp += ".tmp";
    entries_.push_back({tmp, final_path});
    return tmp;
  }
  void commit() {
    for (const auto& [tmp, dst] : entries_) fs::rename(tmp, dst);
    entries_.clear();
  }
  ~StagedFiles() {
    std::error_code ec;
    for (const auto& [tmp, dst] : entries_) fs::remove(tmp, ec);
  }

 private:
  std::vector<std::pair<fs::path, fs::path>> entries_;
};

}  // namespace

void save_dataset(Dataset& dataset, const fs::path& dir) {
  fs::create_directories(dir);
  dataset.manifest.train_path = "train.jsonl";
  dataset.manifest.test_path = "test.jsonl";
  StagedFiles staged;
  write_instances(dataset.train, staged.stage(dir / dataset.manifest.train_path));
  write_instances(dataset.test, staged.stage(dir / dataset.manifest.test_path));
  write_manifest(dataset.manifest, staged.stage(dir / "manifest.json"));
  staged.commit();
}

std::vector<TrainingSubset> training_subsets(const DatasetManifest& manifest, const std::vector<std::int64_t>& sizes,
                                             std::uint64_t seed) {
  for (auto size : sizes)
    if (size < 0 || size > manifest.n_train)
      throw SizeExceedsTrain("subset size " + std::to_string(size) + " exceeds train split size " +
                             std::to_string(manifest.n_train));
  std::vector<std::size_t> perm(static_cast<std::size_t>(manifest.n_train));
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng = Rng(seed).child("subsets");
  perm = rng.sample_without_replacement<std::size_t>(perm, perm.size());
  std::vector<TrainingSubset> out;
  for (auto size : sizes) out.push_back({size, {perm.begin(), perm.begin() + size}});
  return out;
}

std::vector<fs::path> write_training_subsets(const Dataset& dataset, const fs::path& dir,
                                             const std::vector<TrainingSubset>& subsets) {
  std::vector<fs::path> manifests;
  for (const auto& subset : subsets) {
    std::vector<std::size_t> sorted = subset.indices;
    std::sort(sorted.begin(), sorted.end());
    std::vector<ProblemInstance> chosen;
    chosen.reserve(sorted.size());
    for (auto i : sorted) chosen.push_back(dataset.train.at(i));

    DatasetManifest m = dataset.manifest;
    m.n_train = subset.size;
    m.train_path = "train_" + std::to_string(subset.size) + ".jsonl";
    const fs::path manifest_path = dir / ("manifest_" + std::to_string(subset.size) + ".json");
    StagedFiles staged;
    write_instances(chosen, staged.stage(dir / m.train_path));
    write_manifest(m, staged.stage(manifest_path));
    staged.commit();
    manifests.push_back(manifest_path);
  }
  return manifests;
}

}  // namespace icll
