#include "embsim/corpus.hpp"

#include <fstream>
#include <istream>
#include <map>
#include <mutex>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "embsim/error.hpp"
#include "embsim/parallel.hpp"
#include "io_util.hpp"

namespace embsim {
namespace {

using nlohmann::json;

bool is_blank(std::string_view line) {
  return line.find_first_not_of(" \t\r\n") == std::string_view::npos;
}

std::string where(std::string_view source, std::size_t line) {
  return std::string(source) + ":" + std::to_string(line);
}

json parse_line(const std::string& line, std::string_view source, std::size_t line_no) {
  try {
    json value = json::parse(line);
    if (!value.is_object()) throw ParseError(where(source, line_no) + ": expected a JSON object");
    return value;
  } catch (const json::parse_error& e) {
    throw ParseError(where(source, line_no) + ": malformed JSON: " + e.what());
  }
}

std::string required_string(const json& obj, const char* field, std::string_view source, std::size_t line_no) {
  auto it = obj.find(field);
  if (it == obj.end()) throw ParseError(where(source, line_no) + ": missing field '" + field + "'");
  if (!it->is_string()) throw ParseError(where(source, line_no) + ": field '" + field + "' is not a string");
  return it->get<std::string>();
}

std::string optional_string(const json& obj, const char* field, std::string_view source, std::size_t line_no) {
  auto it = obj.find(field);
  if (it == obj.end() || it->is_null()) return {};
  if (!it->is_string()) throw ParseError(where(source, line_no) + ": field '" + field + "' is not a string");
  return it->get<std::string>();
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open " + path.string());
  return in;
}

class WhitespaceTokenizer final : public Tokenizer {
 public:
  std::vector<std::string> tokenize(std::string_view text) const override {
    std::vector<std::string> tokens;
    std::size_t i = 0;
    while (i < text.size()) {
      while (i < text.size() && is_space(text[i])) ++i;
      const std::size_t start = i;
      while (i < text.size() && !is_space(text[i])) ++i;
      if (i > start) tokens.emplace_back(text.substr(start, i - start));
    }
    return tokens;
  }

  std::string join(std::span<const std::string> tokens) const override {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (i > 0) out.push_back(' ');
      out += tokens[i];
    }
    return out;
  }

 private:
  static bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
  }
};

struct TokenizerRegistry {
  std::mutex mutex;
  std::map<std::string, std::shared_ptr<const Tokenizer>, std::less<>> entries{
      {"whitespace", std::make_shared<WhitespaceTokenizer>()}};
};

TokenizerRegistry& registry() {
  static TokenizerRegistry instance;
  return instance;
}

}  // namespace

std::string to_string(const ChunkKey& key) {
  return key.doc_id + "#" + std::to_string(key.chunk_index);
}

std::vector<Document> parse_corpus(std::istream& in, std::string_view source) {
  std::vector<Document> docs;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    const json obj = parse_line(line, source, line_no);
    Document doc{required_string(obj, "_id", source, line_no), optional_string(obj, "title", source, line_no),
                 required_string(obj, "text", source, line_no)};
    if (doc.doc_id.empty()) throw ParseError(where(source, line_no) + ": empty _id");
    if (!seen.insert(doc.doc_id).second)
      throw ParseError(where(source, line_no) + ": duplicate _id '" + doc.doc_id + "'");
    docs.push_back(std::move(doc));
  }
  return docs;
}

std::vector<Document> parse_corpus(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_corpus(in, path.string());
}

QuerySet parse_queries(std::istream& in, std::string dataset_id, std::string_view source) {
  QuerySet set{std::move(dataset_id), {}};
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    const json obj = parse_line(line, source, line_no);
    Query query{required_string(obj, "_id", source, line_no), required_string(obj, "text", source, line_no)};
    if (query.query_id.empty()) throw ParseError(where(source, line_no) + ": empty _id");
    if (!seen.insert(query.query_id).second)
      throw ParseError(where(source, line_no) + ": duplicate _id '" + query.query_id + "'");
    set.queries.push_back(std::move(query));
  }
  return set;
}

QuerySet parse_queries(const std::filesystem::path& path, std::string dataset_id) {
  auto in = open_input(path);
  return parse_queries(in, std::move(dataset_id), path.string());
}

void register_tokenizer(std::string id, std::shared_ptr<const Tokenizer> tokenizer) {
  if (id.empty() || !tokenizer) throw DataError("register_tokenizer: empty id or null tokenizer");
  auto& reg = registry();
  std::lock_guard lock(reg.mutex);
  reg.entries[std::move(id)] = std::move(tokenizer);
}

std::shared_ptr<const Tokenizer> find_tokenizer(std::string_view id) {
  auto& reg = registry();
  std::lock_guard lock(reg.mutex);
  auto it = reg.entries.find(id);
  if (it == reg.entries.end()) throw DataError("unknown tokenizer '" + std::string(id) + "'");
  return it->second;
}

std::vector<std::string> tokenize(std::string_view text, std::string_view tokenizer_id) {
  return find_tokenizer(tokenizer_id)->tokenize(text);
}

std::vector<Chunk> chunk_document(const Document& doc, const ChunkingConfig& config) {
  if (config.chunk_size < 1) throw DataError("chunk_size must be >= 1");
  const auto tokenizer = find_tokenizer(config.tokenizer_id);
  const std::string full = doc.title.empty() ? doc.text : doc.title + " " + doc.text;
  const std::vector<std::string> tokens = tokenizer->tokenize(full);

  std::vector<Chunk> chunks;
  const std::span<const std::string> all(tokens);
  for (std::size_t start = 0, index = 0; start < all.size(); start += config.chunk_size, ++index) {
    const auto window = all.subspan(start, std::min<std::size_t>(config.chunk_size, all.size() - start));
    chunks.push_back(Chunk{ChunkKey{doc.doc_id, static_cast<std::uint32_t>(index)}, tokenizer->join(window),
                           static_cast<std::uint32_t>(window.size())});
  }
  return chunks;
}

ChunkedCorpus chunk_corpus(std::string dataset_id, std::span<const Document> docs, const ChunkingConfig& config,
                           unsigned threads) {
  find_tokenizer(config.tokenizer_id);
  std::vector<std::vector<Chunk>> per_doc(docs.size());
  parallel_for(docs.size(), threads, [&](std::size_t i) { per_doc[i] = chunk_document(docs[i], config); });

  ChunkedCorpus corpus{std::move(dataset_id), {}, config};
  std::size_t total = 0;
  for (const auto& c : per_doc) total += c.size();
  corpus.chunks.reserve(total);
  for (auto& c : per_doc) std::move(c.begin(), c.end(), std::back_inserter(corpus.chunks));
  return corpus;
}

void write_chunked_corpus(const ChunkedCorpus& corpus, const std::filesystem::path& path) {
  std::ostringstream out;
  out << json{{"dataset_id", corpus.dataset_id},
              {"chunk_size", corpus.config.chunk_size},
              {"tokenizer_id", corpus.config.tokenizer_id},
              {"n_chunks", corpus.chunks.size()}}
             .dump()
      << '\n';
  for (const auto& chunk : corpus.chunks) {
    out << json{{"doc_id", chunk.key.doc_id},
                {"chunk_index", chunk.key.chunk_index},
                {"token_count", chunk.token_count},
                {"text", chunk.text}}
               .dump()
        << '\n';
  }
  detail::write_file_atomic(path, out.str());
}

ChunkedCorpus read_chunked_corpus(const std::filesystem::path& path) {
  auto in = open_input(path);
  const std::string source = path.string();
  std::string line;
  if (!std::getline(in, line)) throw ParseError(source + ": missing metadata line");
  ChunkedCorpus corpus;
  std::size_t expected = 0;
  try {
    const json meta = parse_line(line, source, 1);
    corpus.dataset_id = meta.at("dataset_id").get<std::string>();
    corpus.config.chunk_size = meta.at("chunk_size").get<std::uint32_t>();
    corpus.config.tokenizer_id = meta.at("tokenizer_id").get<std::string>();
    expected = meta.at("n_chunks").get<std::size_t>();
    corpus.chunks.reserve(expected);
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      if (is_blank(line)) continue;
      const json obj = parse_line(line, source, line_no);
      corpus.chunks.push_back(Chunk{
          ChunkKey{obj.at("doc_id").get<std::string>(), obj.at("chunk_index").get<std::uint32_t>()},
          obj.at("text").get<std::string>(), obj.at("token_count").get<std::uint32_t>()});
    }
  } catch (const json::exception& e) {
    throw ParseError(source + ": " + e.what());
  }
  if (corpus.chunks.size() != expected)
    throw ParseError(source + ": expected " + std::to_string(expected) + " chunks, found " +
                     std::to_string(corpus.chunks.size()));
  return corpus;
}

void write_queries(const QuerySet& queries, const std::filesystem::path& path) {
  std::ostringstream out;
  for (const auto& q : queries.queries) out << json{{"_id", q.query_id}, {"text", q.text}}.dump() << '\n';
  detail::write_file_atomic(path, out.str());
}

}  // namespace embsim
