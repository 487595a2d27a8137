#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "embsim/corpus.hpp"
#include "embsim/embedding.hpp"
#include "embsim/simmath.hpp"

namespace embsim::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<unsigned> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("embsim-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
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
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline Matrix random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (auto& v : m.values) v = normal(rng);
  return m;
}

inline std::vector<ChunkKey> chunk_keys(std::size_t n, std::size_t per_doc = 1) {
  std::vector<ChunkKey> keys;
  keys.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    keys.push_back(ChunkKey{"doc" + std::to_string(i / per_doc), static_cast<std::uint32_t>(i % per_doc)});
  return keys;
}

inline EmbeddingMatrix make_embeddings(std::string model, std::string dataset, EmbeddingKind kind, std::size_t dim,
                                       std::vector<float> data, std::vector<ChunkKey> keys) {
  EmbeddingMatrix m;
  m.model_id = std::move(model);
  m.dataset_id = std::move(dataset);
  m.kind = kind;
  m.dim = dim;
  m.data = std::move(data);
  m.keys = std::move(keys);
  return m;
}

inline EmbeddingMatrix random_embeddings(std::mt19937_64& rng, std::string model, std::size_t n, std::size_t dim,
                                         EmbeddingKind kind = EmbeddingKind::chunks, std::string dataset = "ds") {
  std::normal_distribution<float> normal(0.0f, 1.0f);
  std::vector<float> data(n * dim);
  for (auto& v : data) v = normal(rng);
  std::vector<ChunkKey> keys;
  if (kind == EmbeddingKind::chunks) {
    keys = chunk_keys(n, 3);
  } else {
    for (std::size_t i = 0; i < n; ++i) keys.push_back(ChunkKey{"q" + std::to_string(i), 0});
  }
  return make_embeddings(std::move(model), std::move(dataset), kind, dim, std::move(data), std::move(keys));
}

}  // namespace embsim::testing
