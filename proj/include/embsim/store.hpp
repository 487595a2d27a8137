#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "embsim/corpus.hpp"
#include "embsim/embedding.hpp"
#include "embsim/simmath.hpp"

namespace embsim {

struct StoreAddress {
  std::string dataset_id;
  std::string model_id;
  EmbeddingKind kind = EmbeddingKind::chunks;

  auto operator<=>(const StoreAddress&) const = default;
  bool operator==(const StoreAddress&) const = default;
};

std::string to_string(const StoreAddress& address);

struct ManifestEntry {
  StoreAddress address;
  std::string file;  // relative to the store root
  std::uint64_t checksum = 0;
  std::size_t rows = 0;
  std::size_t dim = 0;
};

struct CorpusEntry {
  std::string dataset_id;
  ChunkingConfig chunking;
  std::size_t chunks = 0;
  std::size_t queries = 0;
};

/// On-disk embedding archive: `root/<dataset>/<model>.<kind>.esf1` plus
/// `root/manifest.json`. Readers may run concurrently; writers take an
/// exclusive lock per address.
class Store {
 public:
  explicit Store(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }

  StoreAddress put(const EmbeddingMatrix& m, bool overwrite = false);
  EmbeddingMatrix get(const StoreAddress& address) const;
  EmbeddingMatrix get(const std::string& dataset_id, const std::string& model_id, EmbeddingKind kind) const {
    return get(StoreAddress{dataset_id, model_id, kind});
  }
  bool contains(const StoreAddress& address) const;

  std::vector<ManifestEntry> entries() const;
  std::vector<std::string> models(const std::string& dataset_id, EmbeddingKind kind) const;
  std::vector<std::string> datasets() const;
  std::vector<CorpusEntry> corpora() const;

  /// Rescans every ESF1 file and rewrites the manifest from their contents.
  void rebuild_manifest();

  void put_corpus(const ChunkedCorpus& corpus, const QuerySet& queries);
  bool has_corpus(const std::string& dataset_id) const;
  ChunkedCorpus get_corpus(const std::string& dataset_id) const;
  QuerySet get_queries(const std::string& dataset_id) const;

  std::filesystem::path file_path(const StoreAddress& address) const;
  std::filesystem::path checkpoint_path(const StoreAddress& address) const;

 private:
  struct Manifest {
    std::vector<ManifestEntry> entries;
    std::vector<CorpusEntry> corpora;
  };

  Manifest read_manifest() const;
  void write_manifest(const Manifest& manifest) const;

  std::filesystem::path root_;
};

/// Exclusive advisory lock over a lock file, released on destruction.
class FileLock {
 public:
  /// Throws StoreBusyError if `wait` is false and another holder exists.
  FileLock(const std::filesystem::path& path, bool wait);
  ~FileLock();
  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;

 private:
  int fd_ = -1;
};

/// Rows of two matrices over their common keys, in `a`'s key order. When both
/// key lists are identical the views point into the inputs, which must then
/// outlive the pair; otherwise the rows are gathered into a_rows/b_rows.
struct AlignedPair {
  std::vector<ChunkKey> shared_keys;
  std::vector<float> a_rows;
  std::vector<float> b_rows;
  std::span<const float> a_values;
  std::span<const float> b_values;
  std::size_t dim_a = 0;
  std::size_t dim_b = 0;
  std::size_t count_a = 0;
  std::size_t count_b = 0;

  AlignedPair() = default;
  AlignedPair(AlignedPair&&) = default;  // moving keeps the gathered buffers in place
  AlignedPair& operator=(AlignedPair&&) = default;
  AlignedPair(const AlignedPair&) = delete;
  AlignedPair& operator=(const AlignedPair&) = delete;

  MatrixView<float> a() const { return {a_values, shared_keys.size(), dim_a}; }
  MatrixView<float> b() const { return {b_values, shared_keys.size(), dim_b}; }
};

AlignedPair align(const EmbeddingMatrix& a, const EmbeddingMatrix& b);

}  // namespace embsim
