#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "embsim/analysis.hpp"
#include "embsim/corpus.hpp"
#include "embsim/embed_client.hpp"

namespace embsim {

struct DatasetConfig {
  std::string id;
  std::filesystem::path corpus;
  std::filesystem::path queries;
  std::optional<std::size_t> expected_queries;
  std::optional<std::size_t> expected_documents;
};

/// Declarative run description, loaded from one JSON file.
struct RunConfig {
  std::filesystem::path source;  // the file it was read from, if any
  std::vector<DatasetConfig> datasets;
  std::vector<ProviderConfig> models;
  ChunkingConfig chunking;
  std::optional<std::filesystem::path> store;
  CompareParams measure;
  Linkage linkage = Linkage::average;

  const DatasetConfig& dataset(const std::string& id) const;
  const ProviderConfig& model(const std::string& id) const;
  void validate() const;
};

/// Relative paths in the file resolve against the file's directory.
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir);

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitProvider = 3;

/// Runs one command line (without the program name) and returns its exit code.
int run_cli(const std::vector<std::string>& args);

struct MockDemoOptions {
  std::size_t n_chunks = 1000;
  std::size_t n_models = 4;
  std::size_t dim = 64;
  std::size_t n_queries = 25;
  std::size_t n_datasets = 2;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::filesystem::path out_dir = "mock-demo";
};

/// Synthetic end-to-end run on mock providers: corpora, store, ESF1 exports,
/// CKA/Jaccard/rank matrices with heatmaps and dendrograms, and a k-sweep.
void run_mock_demo(const MockDemoOptions& options);

}  // namespace embsim
