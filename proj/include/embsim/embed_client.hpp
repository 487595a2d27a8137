#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "embsim/corpus.hpp"
#include "embsim/embedding.hpp"

namespace embsim {

/// How to reach one embedding model. An endpoint of the form
/// `mock://<dim>?seed=<n>` selects the in-process deterministic provider.
struct ProviderConfig {
  std::string provider_id;
  std::string endpoint_url;
  std::string model_name;
  std::string api_key_env;  // name of the variable holding the key; empty = no auth
  std::size_t batch_size = 32;
  unsigned max_retries = 5;
  double timeout_s = 60.0;
  unsigned max_concurrency = 1;
  double backoff_base_s = 1.0;
  std::optional<std::size_t> expected_dim;
  std::optional<std::size_t> max_tokens;

  void validate() const;
  bool is_mock() const;
};

struct MockSpec {
  std::size_t dim = 0;
  std::int64_t seed = 0;
};

/// Parses `mock://<dim>?seed=<n>`; the seed defaults to 0.
MockSpec parse_mock_endpoint(std::string_view url);

/// Unit vector drawn from SplitMix64 seeded with
/// xxh64(text) ^ SplitMix64(seed).next(); components are 2u-1 for u in [0,1)
/// built from the top 53 bits, normalized in double, stored as float.
std::vector<float> mock_embed(std::string_view text, std::size_t dim, std::int64_t seed);

/// status == 0 means the request never produced an HTTP response.
struct HttpResponse {
  int status = 0;
  std::string body;
  std::string error;
};

/// Sends one JSON request body and returns the raw response.
using Transport = std::function<HttpResponse(const std::string& request_body)>;

Transport make_http_transport(const ProviderConfig& cfg);

/// Request body for the JSON embeddings wire protocol.
std::string make_embedding_request(std::string_view model_name, std::span<const std::string> texts);

/// Parses `{"data":[{"index":i,"embedding":[...]}]}`, re-sorted by index.
/// Throws ProviderError on count mismatch, bad indices, dims or non-finite values.
std::vector<std::vector<float>> parse_embedding_response(std::string_view body, std::size_t expected_count,
                                                         std::optional<std::size_t> expected_dim);

class Embedder {
 public:
  /// Uses the mock provider or an HTTP transport depending on the endpoint.
  explicit Embedder(ProviderConfig cfg);
  Embedder(ProviderConfig cfg, Transport transport);

  /// 1 <= texts.size() <= batch_size. Retries transport, 429 and 5xx failures
  /// with exponential backoff and jitter.
  std::vector<std::vector<float>> embed_batch(std::span<const std::string> texts) const;

  const ProviderConfig& config() const { return cfg_; }

 private:
  ProviderConfig cfg_;
  Transport transport_;
  std::optional<MockSpec> mock_;
};

std::vector<std::vector<float>> embed_batch(std::span<const std::string> texts, const ProviderConfig& cfg);

enum class BatchOrder { forward, reverse };

struct EmbedOptions {
  std::string model_id;  // defaults to provider_id
  /// Per-batch checkpoint; completed batches found here are not re-requested.
  std::optional<std::filesystem::path> checkpoint;
  BatchOrder order = BatchOrder::forward;  // dispatch order only, output order is fixed
};

/// Rows follow corpus chunk order. On failure every finished batch stays in
/// the checkpoint and a ProviderError is thrown.
EmbeddingMatrix embed_corpus(const ChunkedCorpus& corpus, const Embedder& embedder, const EmbedOptions& options = {});

EmbeddingMatrix embed_queries(const QuerySet& queries, const ChunkingConfig& chunking, const Embedder& embedder,
                              const EmbedOptions& options = {});

}  // namespace embsim
