#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "embsim/cli.hpp"
#include "embsim/store.hpp"

namespace embsim::cli {

struct GlobalOptions {
  std::filesystem::path config;
  std::filesystem::path store;
  std::filesystem::path out_dir = ".";
  unsigned threads = 1;
  std::optional<std::uint64_t> seed;
};

struct CompareOverrides {
  std::optional<std::size_t> k;
  std::optional<std::size_t> num_queries;
  std::optional<std::string> selection;
};

struct CompareRequest {
  std::optional<std::string> dataset;
  bool mean = false;
  std::vector<std::string> models;
  CompareOverrides overrides;
  std::optional<std::string> linkage;
  bool cluster = true;
};

struct SweepRequest {
  std::string dataset;
  std::string model_a;
  std::string model_b;
  CompareOverrides overrides;
};

/// Flags layered over the optional config file.
class Context {
 public:
  explicit Context(GlobalOptions globals);

  const GlobalOptions& globals() const { return globals_; }
  bool has_config() const { return config_.has_value(); }
  const RunConfig& config() const;
  std::filesystem::path store_root() const;
  const std::filesystem::path& out_dir() const { return globals_.out_dir; }
  CompareParams params(const CompareOverrides& overrides) const;

  std::vector<std::string> dataset_ids(const std::optional<std::string>& only) const;
  std::vector<std::string> model_ids(const std::vector<std::string>& only, const Store& store,
                                     const std::string& dataset) const;

  /// Emits one file and reports its path on standard output.
  void write_output(const std::filesystem::path& path, const std::function<void(const std::filesystem::path&)>& emit,
                    std::ostream& out) const;

  /// Held for the duration of a mutating command.
  std::unique_ptr<FileLock> lock_store() const;

 private:
  GlobalOptions globals_;
  std::optional<RunConfig> config_;
};

void cmd_ingest(const Context& ctx, const std::optional<std::string>& dataset);
void cmd_embed(const Context& ctx, const std::optional<std::string>& dataset, const std::vector<std::string>& models,
               bool overwrite);
void cmd_import(const Context& ctx, const std::filesystem::path& file, bool overwrite);
void cmd_export(const Context& ctx, const std::string& dataset, const std::string& model, EmbeddingKind kind,
                const std::filesystem::path& file, std::ostream& out);
void cmd_compare(const Context& ctx, Measure measure, const CompareRequest& request, std::ostream& out);
void cmd_sweep(const Context& ctx, const SweepRequest& request, std::ostream& out);

}  // namespace embsim::cli
