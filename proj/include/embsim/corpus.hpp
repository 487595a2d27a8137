#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace embsim {

struct Document {
  std::string doc_id;
  std::string title;
  std::string text;

  bool operator==(const Document&) const = default;
};

/// Identity of one chunk: the join key for embeddings across models.
/// Ordering is doc_id lexicographic, then chunk_index.
struct ChunkKey {
  std::string doc_id;
  std::uint32_t chunk_index = 0;

  auto operator<=>(const ChunkKey&) const = default;
  bool operator==(const ChunkKey&) const = default;
};

std::string to_string(const ChunkKey& key);

struct ChunkingConfig {
  std::uint32_t chunk_size = 256;
  std::string tokenizer_id = "whitespace";

  bool operator==(const ChunkingConfig&) const = default;
};

struct Chunk {
  ChunkKey key;
  std::string text;
  std::uint32_t token_count = 0;

  bool operator==(const Chunk&) const = default;
};

struct ChunkedCorpus {
  std::string dataset_id;
  std::vector<Chunk> chunks;
  ChunkingConfig config;

  bool operator==(const ChunkedCorpus&) const = default;
};

struct Query {
  std::string query_id;
  std::string text;

  bool operator==(const Query&) const = default;
};

struct QuerySet {
  std::string dataset_id;
  std::vector<Query> queries;

  bool operator==(const QuerySet&) const = default;
};

// BEIR JSONL readers. Blank lines are skipped; errors carry the 1-based line number.
std::vector<Document> parse_corpus(const std::filesystem::path& path);
std::vector<Document> parse_corpus(std::istream& in, std::string_view source = "<stream>");
QuerySet parse_queries(const std::filesystem::path& path, std::string dataset_id);
QuerySet parse_queries(std::istream& in, std::string dataset_id, std::string_view source = "<stream>");

/// A tokenizer splits text into tokens and joins tokens back into chunk text.
/// For the whitespace tokenizer tokenize(join(t)) == t.
class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual std::vector<std::string> tokenize(std::string_view text) const = 0;
  virtual std::string join(std::span<const std::string> tokens) const = 0;
};

/// Registers a tokenizer under `id`, replacing any previous registration.
void register_tokenizer(std::string id, std::shared_ptr<const Tokenizer> tokenizer);
std::shared_ptr<const Tokenizer> find_tokenizer(std::string_view id);

std::vector<std::string> tokenize(std::string_view text, std::string_view tokenizer_id);

/// Non-overlapping windows of chunk_size tokens over `title + " " + text`.
/// The final partial window is kept. A document without tokens yields no chunks.
std::vector<Chunk> chunk_document(const Document& doc, const ChunkingConfig& config);

/// Chunks every document, preserving corpus order regardless of `threads`.
ChunkedCorpus chunk_corpus(std::string dataset_id, std::span<const Document> docs,
                           const ChunkingConfig& config, unsigned threads = 1);

// Chunk files: a metadata line followed by one JSON object per chunk.
void write_chunked_corpus(const ChunkedCorpus& corpus, const std::filesystem::path& path);
ChunkedCorpus read_chunked_corpus(const std::filesystem::path& path);
void write_queries(const QuerySet& queries, const std::filesystem::path& path);

}  // namespace embsim

template <>
struct std::hash<embsim::ChunkKey> {
  std::size_t operator()(const embsim::ChunkKey& key) const noexcept {
    const std::size_t h = std::hash<std::string>{}(key.doc_id);
    return h ^ (std::hash<std::uint32_t>{}(key.chunk_index) + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2));
  }
};
