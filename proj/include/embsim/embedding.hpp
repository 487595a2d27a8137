#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "embsim/corpus.hpp"

namespace embsim {

enum class EmbeddingKind { chunks, queries };

std::string_view to_string(EmbeddingKind kind);
EmbeddingKind parse_kind(std::string_view name);

/// One model's vectors for one dataset. Row i belongs to keys[i]. Query
/// matrices use ChunkKey{query_id, 0}.
struct EmbeddingMatrix {
  std::string model_id;
  std::string dataset_id;
  EmbeddingKind kind = EmbeddingKind::chunks;
  std::size_t dim = 0;
  std::vector<float> data;  // row-major, keys.size() * dim
  std::vector<ChunkKey> keys;
  ChunkingConfig chunking;

  std::size_t rows() const { return keys.size(); }
  std::span<const float> row(std::size_t i) const { return {data.data() + i * dim, dim}; }

  /// Throws DataError unless dims, key uniqueness and finiteness hold.
  void validate() const;

  bool operator==(const EmbeddingMatrix&) const = default;
};

/// True when metadata match and payloads are identical bit for bit.
bool bit_equal(const EmbeddingMatrix& a, const EmbeddingMatrix& b);

inline constexpr std::uint32_t kEsf1Version = 1;

// ESF1 layout: "ESF1", u32 LE header length, UTF-8 JSON header, n*dim LE
// float32 row-major, u64 LE XXH64 over every preceding byte.
std::string encode_esf1(const EmbeddingMatrix& m);
EmbeddingMatrix decode_esf1(std::string_view bytes, std::string_view source = "<buffer>");

/// The checksum stored in an encoded ESF1 buffer's trailer.
std::uint64_t esf1_checksum(std::string_view bytes);

void export_embeddings(const EmbeddingMatrix& m, const std::filesystem::path& path);
EmbeddingMatrix import_embeddings(const std::filesystem::path& path);

}  // namespace embsim
