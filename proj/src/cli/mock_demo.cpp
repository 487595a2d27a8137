#include <fstream>
#include <iostream>

#include <json.hpp>

#include "commands.hpp"
#include "embsim/error.hpp"
#include "embsim/hash.hpp"
#include "embsim/log.hpp"
#include "../io_util.hpp"

namespace embsim {
namespace {

using nlohmann::json;

constexpr std::size_t kDemoChunkSize = 32;
constexpr std::size_t kVocabulary = 2000;

std::vector<std::string> make_vocabulary(std::uint64_t seed) {
  SplitMix64 rng(seed ^ 0x766f6361626c6172ULL);
  std::vector<std::string> words;
  words.reserve(kVocabulary);
  for (std::size_t i = 0; i < kVocabulary; ++i) {
    std::string w(3 + rng.next_below(7), 'a');
    for (auto& c : w) c = static_cast<char>('a' + rng.next_below(26));
    words.push_back(std::move(w));
  }
  return words;
}

std::string sentence(SplitMix64& rng, const std::vector<std::string>& vocab, std::size_t words) {
  std::string out;
  for (std::size_t i = 0; i < words; ++i) {
    if (i) out += ' ';
    out += vocab[rng.next_below(vocab.size())];
  }
  return out;
}

/// Documents of 10..80 tokens (title included) until the chunk budget is spent exactly.
void write_dataset(const std::filesystem::path& dir, std::size_t index, const MockDemoOptions& o,
                   const std::vector<std::string>& vocab) {
  SplitMix64 rng(SplitMix64(o.seed + 0x9e37 * (index + 1)).next());
  std::string corpus;
  std::size_t remaining = o.n_chunks;
  for (std::size_t d = 0; remaining > 0; ++d) {
    const std::size_t title_words = 2 + rng.next_below(3);
    std::size_t tokens = 10 + rng.next_below(71);
    tokens = std::min(tokens, remaining * kDemoChunkSize);
    tokens = std::max(tokens, title_words + 1);
    remaining -= (tokens + kDemoChunkSize - 1) / kDemoChunkSize;
    json line{{"_id", "d" + std::to_string(d)},
              {"title", sentence(rng, vocab, title_words)},
              {"text", sentence(rng, vocab, tokens - title_words)}};
    corpus += line.dump() + '\n';
  }
  std::string queries;
  for (std::size_t q = 0; q < o.n_queries; ++q) {
    json line{{"_id", "q" + std::to_string(q)}, {"text", sentence(rng, vocab, 4 + rng.next_below(9))}};
    queries += line.dump() + '\n';
  }
  std::filesystem::create_directories(dir);
  detail::write_file_atomic(dir / "corpus.jsonl", corpus);
  detail::write_file_atomic(dir / "queries.jsonl", queries);
}

}  // namespace

void run_mock_demo(const MockDemoOptions& o) {
  if (o.n_chunks < 1 || o.n_models < 2 || o.dim < 1 || o.n_queries < 1 || o.n_datasets < 1)
    throw DataError("mock-demo needs n_chunks >= 1, n_models >= 2, dim >= 1, n_queries >= 1 and n_datasets >= 1");
  const auto root = o.out_dir;
  const auto vocab = make_vocabulary(o.seed);

  json config{{"store", "store"},
              {"chunking", {{"chunk_size", kDemoChunkSize}, {"tokenizer", "whitespace"}}},
              {"measure", {{"k", 10}, {"num_queries", o.n_queries}, {"query_selection", "first"}, {"seed", o.seed}}},
              {"datasets", json::array()},
              {"models", json::array()}};
  std::vector<std::string> datasets;
  for (std::size_t i = 0; i < o.n_datasets; ++i) {
    const std::string id = "synth-" + std::to_string(i + 1);
    write_dataset(root / "data" / id, i, o, vocab);
    config["datasets"].push_back({{"id", id},
                                  {"corpus", "data/" + id + "/corpus.jsonl"},
                                  {"queries", "data/" + id + "/queries.jsonl"},
                                  {"expected_queries", o.n_queries}});
    datasets.push_back(id);
  }
  std::vector<std::string> models;
  for (std::size_t i = 0; i < o.n_models; ++i) {
    const std::string id = "mock-" + std::to_string(i);
    config["models"].push_back({{"id", id},
                                {"endpoint", "mock://" + std::to_string(o.dim) + "?seed=" + std::to_string(o.seed + i)},
                                {"batch_size", 64},
                                {"dim", o.dim}});
    models.push_back(id);
  }
  const auto config_path = root / "demo-config.json";
  detail::write_file_atomic(config_path, config.dump(2) + '\n');

  cli::GlobalOptions globals;
  globals.config = config_path;
  globals.out_dir = root / "reports";
  globals.threads = o.threads;
  globals.seed = o.seed;
  const cli::Context ctx(globals);
  std::ostream& out = std::cout;

  cli::cmd_ingest(ctx, std::nullopt);
  cli::cmd_embed(ctx, std::nullopt, {}, false);
  for (const Measure measure : {Measure::cka, Measure::jaccard, Measure::rank}) {
    for (const auto& ds : datasets) {
      cli::CompareRequest request;
      request.dataset = ds;
      cli::cmd_compare(ctx, measure, request, out);
    }
    cli::CompareRequest mean;
    mean.mean = true;
    cli::cmd_compare(ctx, measure, mean, out);
  }
  cli::SweepRequest sweep{datasets.front(), models[0], models[1], {}};
  sweep.overrides.num_queries = std::min<std::size_t>(o.n_queries, 5);
  cli::cmd_sweep(ctx, sweep, out);
  sweep.model_b = models[0];
  cli::cmd_sweep(ctx, sweep, out);

  for (const auto& ds : datasets)
    for (const auto& m : models)
      for (const EmbeddingKind kind : {EmbeddingKind::chunks, EmbeddingKind::queries})
        cli::cmd_export(ctx, ds, m, kind, root / "exports" / (ds + "__" + m + "." + std::string(to_string(kind)) + ".esf1"),
                        out);
  log().info("event=mock_demo_done out_dir={}", root.string());
}

}  // namespace embsim
