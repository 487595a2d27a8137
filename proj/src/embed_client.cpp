#include "embsim/embed_client.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <random>
#include <thread>

#include <json.hpp>

#include "embsim/error.hpp"
#include "embsim/hash.hpp"
#include "embsim/log.hpp"
#include "embsim/parallel.hpp"
#include "io_util.hpp"

namespace embsim {
namespace {

using nlohmann::json;

constexpr std::string_view kMockScheme = "mock://";
constexpr std::string_view kCheckpointMagic = "ESC1";

bool retryable(const HttpResponse& r) { return r.status == 0 || r.status == 429 || r.status >= 500; }

double jitter() {
  thread_local std::mt19937_64 rng{std::random_device{}()};
  return std::uniform_real_distribution<double>(0.5, 1.5)(rng);
}

void append_le(std::string& out, std::uint64_t v, int width) {
  for (int i = 0; i < width; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t read_le(std::string_view bytes, std::size_t offset, int width) {
  std::uint64_t v = 0;
  for (int i = width - 1; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(bytes[offset + i]);
  return v;
}

struct Target {
  std::string model_id;
  std::string dataset_id;
  EmbeddingKind kind;
  ChunkingConfig chunking;
};

std::uint64_t keys_digest(std::span<const ChunkKey> keys) {
  Xxh64 h;
  for (const auto& key : keys) {
    h.update(key.doc_id);
    h.update(std::string_view("\0", 1));
    h.update(std::to_string(key.chunk_index));
    h.update("\n");
  }
  return h.digest();
}

/// Batch-granular append-only checkpoint. The record layout is u64 batch, u32 rows,
/// u32 dim, rows*dim float32, u64 xxh64 of the preceding record bytes.
class Checkpoint {
 public:
  Checkpoint(std::filesystem::path path, json header) : path_(std::move(path)), header_(std::move(header)) {}

  std::map<std::size_t, std::vector<std::vector<float>>> load() {
    std::map<std::size_t, std::vector<std::vector<float>>> done;
    if (!std::filesystem::exists(path_)) {
      std::string head(kCheckpointMagic);
      const std::string text = header_.dump();
      append_le(head, text.size(), 4);
      head += text;
      detail::write_file_atomic(path_, head);
      return done;
    }
    const std::string bytes = detail::read_file(path_);
    if (bytes.size() < 8 || std::string_view(bytes).substr(0, 4) != kCheckpointMagic)
      throw DataError("checkpoint " + path_.string() + " is not a checkpoint file");
    const std::size_t header_len = read_le(bytes, 4, 4);
    if (bytes.size() < 8 + header_len) throw DataError("checkpoint " + path_.string() + " has a truncated header");
    json stored;
    try {
      stored = json::parse(std::string_view(bytes).substr(8, header_len));
    } catch (const json::exception& e) {
      throw DataError("checkpoint " + path_.string() + ": " + e.what());
    }
    if (stored != header_)
      throw DataError("checkpoint " + path_.string() + " belongs to a different run (" + stored.dump() +
                      "); delete it to start over");

    std::size_t pos = 8 + header_len;
    while (pos + 16 <= bytes.size()) {
      const std::size_t batch = read_le(bytes, pos, 8);
      const std::size_t rows = read_le(bytes, pos + 8, 4);
      const std::size_t dim = read_le(bytes, pos + 12, 4);
      const std::size_t record = 16 + rows * dim * sizeof(float);
      if (pos + record + 8 > bytes.size()) break;
      if (read_le(bytes, pos + record, 8) != xxh64(std::string_view(bytes).substr(pos, record))) break;
      std::vector<std::vector<float>> vectors(rows, std::vector<float>(dim));
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < dim; ++c)
          vectors[r][c] = std::bit_cast<float>(
              static_cast<std::uint32_t>(read_le(bytes, pos + 16 + (r * dim + c) * sizeof(float), 4)));
      done[batch] = std::move(vectors);
      pos += record + 8;
    }
    if (pos != bytes.size()) {
      log().warn("event=checkpoint_tail_discarded path={} bytes={}", path_.string(), bytes.size() - pos);
      std::filesystem::resize_file(path_, pos);
    }
    return done;
  }

  void append(std::size_t batch, const std::vector<std::vector<float>>& vectors) {
    const std::size_t dim = vectors.empty() ? 0 : vectors.front().size();
    std::string record;
    append_le(record, batch, 8);
    append_le(record, vectors.size(), 4);
    append_le(record, dim, 4);
    for (const auto& v : vectors)
      for (float x : v) append_le(record, std::bit_cast<std::uint32_t>(x), 4);
    append_le(record, xxh64(record), 8);
    std::lock_guard lock(mutex_);
    std::ofstream out(path_, std::ios::binary | std::ios::app);
    out.write(record.data(), static_cast<std::streamsize>(record.size()));
    out.flush();
    if (!out) throw Error("cannot append to checkpoint " + path_.string());
  }

  void remove() { std::filesystem::remove(path_); }

 private:
  std::filesystem::path path_;
  json header_;
  std::mutex mutex_;
};

EmbeddingMatrix embed_texts(std::span<const ChunkKey> keys, std::span<const std::string> texts, const Target& target,
                            const Embedder& embedder, const EmbedOptions& options) {
  if (texts.empty())
    throw DataError("nothing to embed for " + target.dataset_id + " (" + std::string(to_string(target.kind)) + ")");
  const std::size_t batch_size = embedder.config().batch_size;
  const std::size_t batches = (texts.size() + batch_size - 1) / batch_size;

  std::vector<std::vector<std::vector<float>>> results(batches);
  std::vector<bool> have(batches, false);
  std::optional<Checkpoint> checkpoint;
  if (options.checkpoint) {
    checkpoint.emplace(*options.checkpoint, json{{"model_id", target.model_id},
                                                 {"dataset_id", target.dataset_id},
                                                 {"kind", to_string(target.kind)},
                                                 {"batch_size", batch_size},
                                                 {"n", texts.size()},
                                                 {"keys_xxh64", to_hex(keys_digest(keys))}});
    for (auto& [batch, vectors] : checkpoint->load()) {
      if (batch < batches) {
        results[batch] = std::move(vectors);
        have[batch] = true;
      }
    }
  }

  std::vector<std::size_t> pending;
  for (std::size_t b = 0; b < batches; ++b)
    if (!have[b]) pending.push_back(b);
  if (options.order == BatchOrder::reverse) std::reverse(pending.begin(), pending.end());
  if (pending.size() < batches)
    log().info("event=resume model={} dataset={} kind={} done_batches={} pending_batches={}", target.model_id,
               target.dataset_id, to_string(target.kind), batches - pending.size(), pending.size());

  try {
    parallel_for(pending.size(), embedder.config().max_concurrency, [&](std::size_t i) {
      const std::size_t b = pending[i];
      const std::size_t begin = b * batch_size;
      const std::size_t end = std::min(texts.size(), begin + batch_size);
      auto vectors = embedder.embed_batch(texts.subspan(begin, end - begin));
      if (checkpoint) checkpoint->append(b, vectors);
      results[b] = std::move(vectors);
    });
  } catch (const ProviderError& e) {
    throw ProviderError(std::string(e.what()) +
                        (checkpoint ? "; completed batches saved to " + options.checkpoint->string() : ""));
  }

  EmbeddingMatrix m;
  m.model_id = target.model_id;
  m.dataset_id = target.dataset_id;
  m.kind = target.kind;
  m.chunking = target.chunking;
  m.keys.assign(keys.begin(), keys.end());
  m.dim = results.front().front().size();
  m.data.reserve(texts.size() * m.dim);
  for (std::size_t b = 0; b < batches; ++b) {
    const std::size_t expected_rows = std::min(texts.size(), (b + 1) * batch_size) - b * batch_size;
    if (results[b].size() != expected_rows)
      throw DataError("batch " + std::to_string(b) + " holds " + std::to_string(results[b].size()) + " rows, expected " +
                      std::to_string(expected_rows));
    for (const auto& v : results[b]) {
      if (v.size() != m.dim)
        throw ProviderError("inconsistent embedding dimensions across batches: " + std::to_string(v.size()) +
                            " vs " + std::to_string(m.dim));
      m.data.insert(m.data.end(), v.begin(), v.end());
    }
  }
  m.validate();
  if (checkpoint) checkpoint->remove();
  return m;
}

}  // namespace

void ProviderConfig::validate() const {
  if (provider_id.empty()) throw DataError("provider config: provider_id is empty");
  if (endpoint_url.empty()) throw DataError("provider " + provider_id + ": endpoint_url is empty");
  if (batch_size < 1) throw DataError("provider " + provider_id + ": batch_size must be >= 1");
  if (max_concurrency < 1) throw DataError("provider " + provider_id + ": max_concurrency must be >= 1");
  if (!(timeout_s > 0)) throw DataError("provider " + provider_id + ": timeout must be positive");
  if (backoff_base_s < 0) throw DataError("provider " + provider_id + ": backoff_base must be non-negative");
  if (is_mock()) {
    parse_mock_endpoint(endpoint_url);
  } else if (model_name.empty()) {
    throw DataError("provider " + provider_id + ": model_name is empty");
  }
}

bool ProviderConfig::is_mock() const { return endpoint_url.starts_with(kMockScheme); }

MockSpec parse_mock_endpoint(std::string_view url) {
  if (!url.starts_with(kMockScheme)) throw DataError("not a mock endpoint: " + std::string(url));
  std::string_view rest = url.substr(kMockScheme.size());
  MockSpec spec;
  const auto q = rest.find('?');
  const std::string_view dim_text = rest.substr(0, q);
  auto [p, ec] = std::from_chars(dim_text.data(), dim_text.data() + dim_text.size(), spec.dim);
  if (ec != std::errc{} || p != dim_text.data() + dim_text.size() || spec.dim == 0)
    throw DataError("mock endpoint needs a positive dimension: " + std::string(url));
  if (q != std::string_view::npos) {
    std::string_view query = rest.substr(q + 1);
    if (!query.starts_with("seed=")) throw DataError("mock endpoint: unknown parameter in " + std::string(url));
    query.remove_prefix(5);
    auto [sp, sec] = std::from_chars(query.data(), query.data() + query.size(), spec.seed);
    if (sec != std::errc{} || sp != query.data() + query.size())
      throw DataError("mock endpoint: bad seed in " + std::string(url));
  }
  return spec;
}

std::vector<float> mock_embed(std::string_view text, std::size_t dim, std::int64_t seed) {
  SplitMix64 rng(xxh64(text) ^ SplitMix64(static_cast<std::uint64_t>(seed)).next());
  std::vector<double> raw(dim);
  double sum_sq = 0.0;
  for (auto& v : raw) {
    v = 2.0 * rng.next_unit() - 1.0;
    sum_sq += v * v;
  }
  std::vector<float> out(dim, 0.0f);
  if (sum_sq == 0.0) {
    if (dim > 0) out[0] = 1.0f;
    return out;
  }
  const double norm = std::sqrt(sum_sq);
  for (std::size_t i = 0; i < dim; ++i) out[i] = static_cast<float>(raw[i] / norm);
  return out;
}

std::string make_embedding_request(std::string_view model_name, std::span<const std::string> texts) {
  return json{{"model", model_name}, {"input", texts}}.dump();
}

std::vector<std::vector<float>> parse_embedding_response(std::string_view body, std::size_t expected_count,
                                                         std::optional<std::size_t> expected_dim) {
  json response;
  try {
    response = json::parse(body);
  } catch (const json::parse_error& e) {
    throw ProviderError(std::string("embedding response is not valid JSON: ") + e.what());
  }
  const auto data = response.find("data");
  if (data == response.end() || !data->is_array()) throw ProviderError("embedding response lacks a 'data' array");
  if (data->size() != expected_count)
    throw ProviderError("embedding count mismatch: sent " + std::to_string(expected_count) + " inputs, received " +
                        std::to_string(data->size()) + " vectors");

  std::vector<std::vector<float>> out(expected_count);
  std::vector<bool> filled(expected_count, false);
  std::optional<std::size_t> dim = expected_dim;
  for (const auto& item : *data) {
    const auto index = item.find("index");
    const auto embedding = item.find("embedding");
    if (index == item.end() || !index->is_number_integer() || embedding == item.end() || !embedding->is_array())
      throw ProviderError("embedding response item lacks integer 'index' or array 'embedding'");
    const auto i = index->get<std::int64_t>();
    if (i < 0 || static_cast<std::size_t>(i) >= expected_count || filled[i])
      throw ProviderError("embedding response has invalid or repeated index " + std::to_string(i));
    if (!dim) dim = embedding->size();
    if (embedding->size() != *dim)
      throw ProviderError("inconsistent embedding dimension: expected " + std::to_string(*dim) + ", got " +
                          std::to_string(embedding->size()) + " at index " + std::to_string(i));
    auto& vec = out[i];
    vec.reserve(*dim);
    for (const auto& x : *embedding) {
      if (!x.is_number()) throw ProviderError("non-finite embedding component at index " + std::to_string(i));
      const auto f = static_cast<float>(x.get<double>());
      if (!std::isfinite(f)) throw ProviderError("non-finite embedding component at index " + std::to_string(i));
      vec.push_back(f);
    }
    filled[i] = true;
  }
  if (dim && *dim == 0) throw ProviderError("provider returned empty embeddings");
  return out;
}

Embedder::Embedder(ProviderConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  if (cfg_.is_mock()) {
    mock_ = parse_mock_endpoint(cfg_.endpoint_url);
    if (cfg_.expected_dim && *cfg_.expected_dim != mock_->dim)
      throw DataError("provider " + cfg_.provider_id + ": mock dim " + std::to_string(mock_->dim) +
                      " differs from configured dim " + std::to_string(*cfg_.expected_dim));
  } else {
    transport_ = make_http_transport(cfg_);
  }
}

Embedder::Embedder(ProviderConfig cfg, Transport transport) : cfg_(std::move(cfg)), transport_(std::move(transport)) {
  cfg_.validate();
}

std::vector<std::vector<float>> Embedder::embed_batch(std::span<const std::string> texts) const {
  if (texts.empty() || texts.size() > cfg_.batch_size)
    throw DataError("embed_batch: batch of " + std::to_string(texts.size()) + " texts outside [1, " +
                    std::to_string(cfg_.batch_size) + "]");
  if (mock_) {
    std::vector<std::vector<float>> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(mock_embed(t, mock_->dim, mock_->seed));
    return out;
  }

  const std::string body = make_embedding_request(cfg_.model_name, texts);
  HttpResponse last;
  for (unsigned attempt = 0;; ++attempt) {
    last = transport_(body);
    if (last.status == 200) return parse_embedding_response(last.body, texts.size(), cfg_.expected_dim);
    if (!retryable(last))
      throw ProviderError("provider " + cfg_.provider_id + " returned HTTP " + std::to_string(last.status) + ": " +
                          last.body);
    if (attempt >= cfg_.max_retries) break;
    const double delay = cfg_.backoff_base_s * std::ldexp(1.0, static_cast<int>(attempt)) * jitter();
    log().warn("event=retry provider={} attempt={} status={} delay_s={:.3f} error=\"{}\"", cfg_.provider_id,
               attempt + 1, last.status, delay, last.error);
    std::this_thread::sleep_for(std::chrono::duration<double>(delay));
  }
  throw ProviderError("provider " + cfg_.provider_id + ": giving up after " + std::to_string(cfg_.max_retries + 1) +
                      " attempts; last " +
                      (last.status == 0 ? "transport error: " + last.error
                                        : "HTTP " + std::to_string(last.status) + ": " + last.body));
}

std::vector<std::vector<float>> embed_batch(std::span<const std::string> texts, const ProviderConfig& cfg) {
  return Embedder(cfg).embed_batch(texts);
}

EmbeddingMatrix embed_corpus(const ChunkedCorpus& corpus, const Embedder& embedder, const EmbedOptions& options) {
  const auto& cfg = embedder.config();
  if (cfg.max_tokens && corpus.config.chunk_size > *cfg.max_tokens)
    throw DataError("chunk_size " + std::to_string(corpus.config.chunk_size) + " exceeds max tokens " +
                    std::to_string(*cfg.max_tokens) + " of provider " + cfg.provider_id);
  std::vector<ChunkKey> keys;
  std::vector<std::string> texts;
  keys.reserve(corpus.chunks.size());
  texts.reserve(corpus.chunks.size());
  for (const auto& chunk : corpus.chunks) {
    keys.push_back(chunk.key);
    texts.push_back(chunk.text);
  }
  const Target target{options.model_id.empty() ? cfg.provider_id : options.model_id, corpus.dataset_id,
                      EmbeddingKind::chunks, corpus.config};
  return embed_texts(keys, texts, target, embedder, options);
}

EmbeddingMatrix embed_queries(const QuerySet& queries, const ChunkingConfig& chunking, const Embedder& embedder,
                              const EmbedOptions& options) {
  std::vector<ChunkKey> keys;
  std::vector<std::string> texts;
  for (const auto& q : queries.queries) {
    keys.push_back(ChunkKey{q.query_id, 0});
    texts.push_back(q.text);
  }
  const Target target{options.model_id.empty() ? embedder.config().provider_id : options.model_id,
                      queries.dataset_id, EmbeddingKind::queries, chunking};
  return embed_texts(keys, texts, target, embedder, options);
}

}  // namespace embsim
